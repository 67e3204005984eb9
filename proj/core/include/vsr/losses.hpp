// Distillation and adversarial objectives. The generator objective combines
// pixel reconstruction (L1 + a structure/texture perceptual distance over a
// frozen seeded conv pyramid), feature alignment at the mid-network tap, and
// non-saturating adversarial terms. The critics train on a curated ten-sample
// batch whose labels separate "what real detail looks like" (detail head)
// from "what coherent motion looks like" (consistency head).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsr/discriminator.hpp"
#include "vsr/params.hpp"
#include "vsr/student.hpp"
#include "vsr/teacher.hpp"
#include "vsr/video.hpp"

namespace vsr {

struct LossWeights {
  double lambda_pixel = 0.1;
  double lambda_feature = 1.0;
  double lambda_adv = 1.0;
};

// Frozen seeded 3-scale conv pyramid (3 -> 8 -> 12 -> 16, stride 2, ReLU)
// backing the perceptual distance.
template <class T>
struct DistsNetT {
  ParamStoreT<T> params;
};

using DistsNet = DistsNetT<float>;

DistsNet build_dists(uint64_t seed);

// Same pyramid at another scalar precision (for finite-difference probes).
template <class U, class T>
DistsNetT<U> cast_dists(const DistsNetT<T>& net) {
  return DistsNetT<U>{cast_param_store<U>(net.params)};
}

// Structure+texture distance between two clips [T,3,H,W] in the signed
// range. Per frame and per pyramid channel a texture term
// (2 mu_a mu_b + c1)/(mu_a^2 + mu_b^2 + c1) and a structure term
// (2 cov_ab + c2)/(var_a + var_b + c2) are formed; the distance is 1 minus
// the equally weighted mean of every term across scales, channels, and
// frames. Zero for identical inputs, symmetric; differentiable through both
// arguments. Instantiated for float and double.
template <class T>
VarT<T> dists(const DistsNetT<T>& net, const VarT<T>& a, const VarT<T>& b);

// Generator objective value plus its term breakdown. `total` is the graph
// node to differentiate; the scalar copies are for logging and bookkeeping
// checks. Unweighted terms; the composition rule is
//   total = lambda_pixel * (l1_pixel + dists_pixel + lambda_adv * adv_pixel)
//         + lambda_feature * (l1_feature + lambda_adv * adv_feature).
template <class T>
struct GenLossTermsT {
  VarT<T> total;
  double l1_pixel = 0, dists_pixel = 0, adv_pixel = 0;
  double l1_feature = 0, adv_feature = 0;
  double pixel_total = 0, feature_total = 0;
};

using GenLossTerms = GenLossTermsT<float>;

// d_pix_logit / d_feat_logit are the pixel- and feature-domain critic scores
// of the generator outputs (scalar graph nodes); higher scores mean "more
// real", and the adversarial terms are softplus(-logit). Weights must be
// non-negative. Instantiated for float and double.
template <class T>
GenLossTermsT<T> gen_loss(const VarT<T>& x_student, const VarT<T>& x_teacher, const VarT<T>& f_student,
                          const VarT<T>& f_teacher, const VarT<T>& d_pix_logit, const VarT<T>& d_feat_logit,
                          const LossWeights& w, const DistsNetT<T>& net);

enum class SourceTag { student, video, video_shuffled, image_static, image_assembled };

// One critic training example: a pixel clip or feature volume with a label
// per head. y_d scores detail realism, y_c scores temporal coherence; zero
// means "leave this head alone for this sample".
template <class T>
struct LabeledSampleT {
  VarT<T> payload;
  DiscDomain domain = DiscDomain::pixel;
  int y_d = 0;
  int y_c = 0;
  SourceTag source_tag = SourceTag::student;
};

using LabeledSample = LabeledSampleT<float>;

// Critic objective: for each sample, softplus(-y_d * detail_logit) +
// softplus(-y_c * consistency_logit) from its domain's critic. A zero label
// contributes the constant ln 2 and exactly zero gradient. Mean over samples
// by default; `mean_reduction=false` gives the literal sum. Instantiated for
// float and double.
template <class T>
VarT<T> disc_loss(const std::vector<LabeledSampleT<T>>& samples, const DiscriminatorT<T>& d_pixel,
                  const DiscriminatorT<T>& d_feature, bool mean_reduction = true);

// Builds the ten-sample critic batch from one generator output, one real
// video clip, and curated still images:
//   student        (-1,-1)   generator output and its own tap features
//   video          ( 0,+1)   real coherent motion, detail unlabeled
//   video_shuffled ( 0,-1)   same frames, time order broken
//   image_static   (+1,+1)   one detail-rich still frozen across T frames
//   image_assembled(+1,-1)   T unrelated detail-rich stills
// each in the pixel domain and, through the re-encoding path, the feature
// domain — in that order. `video_clip`, `image_frame`, and `image_frames`
// are unit-range; payloads are emitted in the signed network range.
// `image_frames` must supply exactly T frames.
std::vector<LabeledSample> build_label_set(const VarT<float>& x_student, const VarT<float>& f_student,
                                           const Clip& video_clip, const TensorF& image_frame,
                                           const std::vector<TensorF>& image_frames,
                                           const TeacherEncoder& enc, const Student& student, uint64_t seed);

}  // namespace vsr
