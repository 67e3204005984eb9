// Loss construction. Everything here builds graph nodes from existing ops so
// analytic gradients come from the tape; the only numeric code is the frozen
// pyramid init. Templated on the scalar so the whole objective stack can be
// rebuilt at float64 for finite-difference probing.
#include "vsr/losses.hpp"

#include <cmath>
#include <string>

#include "vsr/errors.hpp"
#include "vsr/ops.hpp"
#include "vsr/rng.hpp"

namespace vsr {

namespace {

constexpr double kStabC1 = 1e-6;  // texture-term stabilizer
constexpr double kStabC2 = 1e-6;  // structure-term stabilizer
constexpr int64_t kPyramidWidths[4] = {3, 8, 12, 16};

TensorF fanin_uniform(Rng& rng, std::vector<int64_t> shape, int64_t fan_in) {
  double bound = std::sqrt(6.0 / double(fan_in));
  TensorF t(std::move(shape));
  for (auto& v : t.data) v = float(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

DistsNet build_dists(uint64_t seed) {
  DistsNet net;
  Rng rng(Rng::mix(seed, 0x6469737473ull));
  for (int i = 0; i < 3; ++i) {
    std::string prefix = "dists/p" + std::to_string(i);
    int64_t cin = kPyramidWidths[i], cout = kPyramidWidths[i + 1];
    net.params.add(prefix + "/w", fanin_uniform(rng, {cout, cin, 3, 3}, cin * 9), false, "dists");
    net.params.add(prefix + "/b", TensorF({cout}), false, "dists");
  }
  return net;
}

template <class T>
VarT<T> dists(const DistsNetT<T>& net, const VarT<T>& a, const VarT<T>& b) {
  if (!(a->value.shape == b->value.shape))
    throw DimensionError("dists: shape mismatch " + shape_str(a->value.shape) + " vs " +
                         shape_str(b->value.shape));
  if (a->value.rank() != 4 || a->value.dim(1) != 3)
    throw DimensionError("dists: expected [T,3,H,W] clips, got " + shape_str(a->value.shape));

  VarT<T> fa = a, fb = b;
  VarT<T> acc;
  int64_t terms_per_frame = 0;
  for (int i = 0; i < 3; ++i) {
    std::string prefix = "dists/p" + std::to_string(i);
    VarT<T> w = net.params.var(prefix + "/w");
    VarT<T> bias = net.params.var(prefix + "/b");
    fa = relu(conv2d(fa, w, bias, 2, 1));
    fb = relu(conv2d(fb, w, bias, 2, 1));

    VarT<T> mu_a = mean_spatial(fa), mu_b = mean_spatial(fb);            // [T,C]
    VarT<T> ca = bc_sub_spatial(fa, mu_a), cb = bc_sub_spatial(fb, mu_b);
    VarT<T> var_a = mean_spatial(mul(ca, ca)), var_b = mean_spatial(mul(cb, cb));
    VarT<T> cov = mean_spatial(mul(ca, cb));

    VarT<T> texture = div_(add_scalar(scale(mul(mu_a, mu_b), 2.0), kStabC1),
                           add_scalar(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), kStabC1));
    VarT<T> structure =
        div_(add_scalar(scale(cov, 2.0), kStabC2), add_scalar(add(var_a, var_b), kStabC2));

    VarT<T> scale_sum = add(sum_all(texture), sum_all(structure));
    acc = acc ? add(acc, scale_sum) : scale_sum;
    terms_per_frame += 2 * fa->value.dim(1);
  }

  // Equal weight for every (frame, channel, term) triple across all scales.
  double count = double(a->value.dim(0) * terms_per_frame);
  return add_scalar(neg(scale(acc, 1.0 / count)), 1.0);
}

template VarT<float> dists<float>(const DistsNetT<float>&, const VarT<float>&, const VarT<float>&);
template VarT<double> dists<double>(const DistsNetT<double>&, const VarT<double>&, const VarT<double>&);

template <class T>
GenLossTermsT<T> gen_loss(const VarT<T>& x_student, const VarT<T>& x_teacher, const VarT<T>& f_student,
                          const VarT<T>& f_teacher, const VarT<T>& d_pix_logit, const VarT<T>& d_feat_logit,
                          const LossWeights& w, const DistsNetT<T>& net) {
  if (w.lambda_pixel < 0 || w.lambda_feature < 0 || w.lambda_adv < 0)
    throw ConfigError("gen_loss: loss weights must be non-negative");
  if (d_pix_logit->value.numel() != 1 || d_feat_logit->value.numel() != 1)
    throw DimensionError("gen_loss: critic scores must be scalar");

  VarT<T> l1_pix = l1(x_student, x_teacher);
  VarT<T> perceptual = dists(net, x_student, x_teacher);
  VarT<T> adv_pix = softplus(neg(d_pix_logit));
  VarT<T> l1_feat = l1(f_student, f_teacher);
  VarT<T> adv_feat = softplus(neg(d_feat_logit));

  VarT<T> pixel = add(add(l1_pix, perceptual), scale(adv_pix, w.lambda_adv));
  VarT<T> feature = add(l1_feat, scale(adv_feat, w.lambda_adv));

  GenLossTermsT<T> out;
  out.total = add(scale(pixel, w.lambda_pixel), scale(feature, w.lambda_feature));
  out.l1_pixel = double(l1_pix->value.data[0]);
  out.dists_pixel = double(perceptual->value.data[0]);
  out.adv_pixel = double(adv_pix->value.data[0]);
  out.l1_feature = double(l1_feat->value.data[0]);
  out.adv_feature = double(adv_feat->value.data[0]);
  out.pixel_total = double(pixel->value.data[0]);
  out.feature_total = double(feature->value.data[0]);
  return out;
}

template GenLossTermsT<float> gen_loss<float>(const VarT<float>&, const VarT<float>&, const VarT<float>&,
                                              const VarT<float>&, const VarT<float>&, const VarT<float>&,
                                              const LossWeights&, const DistsNetT<float>&);
template GenLossTermsT<double> gen_loss<double>(const VarT<double>&, const VarT<double>&,
                                                const VarT<double>&, const VarT<double>&,
                                                const VarT<double>&, const VarT<double>&,
                                                const LossWeights&, const DistsNetT<double>&);

template <class T>
VarT<T> disc_loss(const std::vector<LabeledSampleT<T>>& samples, const DiscriminatorT<T>& d_pixel,
                  const DiscriminatorT<T>& d_feature, bool mean_reduction) {
  if (samples.empty()) return constant(TensorT<T>({1}));

  VarT<T> acc;
  for (const auto& s : samples) {
    if (!s.payload) throw UsageError("disc_loss: sample has no payload");
    if (s.y_d < -1 || s.y_d > 1 || s.y_c < -1 || s.y_c > 1)
      throw UsageError("disc_loss: labels must be in {-1,0,1}, got (" + std::to_string(s.y_d) + "," +
                       std::to_string(s.y_c) + ")");
    const DiscriminatorT<T>& critic = s.domain == DiscDomain::pixel ? d_pixel : d_feature;
    HeadOutputsT<T> heads = disc_forward(critic, s.payload);
    // softplus(-y * logit); a zero label multiplies by -0.0, which pins the
    // term to the constant ln 2 and zeroes its gradient exactly.
    VarT<T> term = add(softplus(scale(heads.detail_logit, -double(s.y_d))),
                       softplus(scale(heads.consistency_logit, -double(s.y_c))));
    acc = acc ? add(acc, term) : term;
  }
  return mean_reduction ? scale(acc, 1.0 / double(samples.size())) : acc;
}

template VarT<float> disc_loss<float>(const std::vector<LabeledSampleT<float>>&,
                                      const DiscriminatorT<float>&, const DiscriminatorT<float>&, bool);
template VarT<double> disc_loss<double>(const std::vector<LabeledSampleT<double>>&,
                                        const DiscriminatorT<double>&, const DiscriminatorT<double>&, bool);

std::vector<LabeledSample> build_label_set(const VarT<float>& x_student, const VarT<float>& f_student,
                                           const Clip& video_clip, const TensorF& image_frame,
                                           const std::vector<TensorF>& image_frames,
                                           const TeacherEncoder& enc, const Student& student,
                                           uint64_t seed) {
  if (!x_student || !f_student) throw UsageError("build_label_set: the generator payloads are required");
  if (x_student->value.rank() != 4 || x_student->value.dim(1) != 3)
    throw DimensionError("build_label_set: x_student must be [T,3,H,W], got " +
                         shape_str(x_student->value.shape));
  const int64_t frames = x_student->value.dim(0);
  if (video_clip.frames() == 0) throw UsageError("build_label_set: the video clip is required");
  if (image_frame.numel() == 0) throw UsageError("build_label_set: the static detail frame is required");
  if (int64_t(image_frames.size()) != frames)
    throw UsageError("build_label_set: need exactly " + std::to_string(frames) +
                     " assembly frames, got " + std::to_string(image_frames.size()));

  Clip shuffled = shuffle_frames(video_clip, Rng::mix(seed, 0x73687566ull));
  Clip frozen = repeat_image(image_frame, frames);
  Clip collage = assemble_images(image_frames);

  std::vector<LabeledSample> out;
  auto push_pair = [&](const VarT<float>& pix, const VarT<float>& feat, SourceTag tag, int yd, int yc) {
    out.push_back(LabeledSample{pix, DiscDomain::pixel, yd, yc, tag});
    out.push_back(LabeledSample{feat, DiscDomain::feature, yd, yc, tag});
  };
  auto curated_pair = [&](const TensorF& unit, const char* what, SourceTag tag, int yd, int yc) {
    TensorF sgn = to_signed(unit);
    if (!(sgn.shape == x_student->value.shape))
      throw DimensionError(std::string("build_label_set: the ") + what + " payload " +
                           shape_str(sgn.shape) + " does not match the generator output " +
                           shape_str(x_student->value.shape));
    VarT<float> feat = reencode_features(sgn, enc, student, int(frames));
    if (!(feat->value.shape == f_student->value.shape))
      throw DimensionError(std::string("build_label_set: re-encoded ") + what + " features " +
                           shape_str(feat->value.shape) + " do not match f_student " +
                           shape_str(f_student->value.shape));
    push_pair(constant(std::move(sgn)), feat, tag, yd, yc);
  };

  push_pair(x_student, f_student, SourceTag::student, -1, -1);
  curated_pair(video_clip.data, "video clip", SourceTag::video, 0, +1);
  curated_pair(shuffled.data, "shuffled clip", SourceTag::video_shuffled, 0, -1);
  curated_pair(frozen.data, "static-image clip", SourceTag::image_static, +1, +1);
  curated_pair(collage.data, "assembled-image clip", SourceTag::image_assembled, +1, -1);
  return out;
}

}  // namespace vsr
