// Dual-head critics, one per domain. Each is a frozen feature backbone
// followed by a trainable tail of three alternating 2D/1D convolutions and
// two 1x1 projection heads ("detail", "consistency") that read disjoint
// channel partitions of the shared tail features. The 1D tail convolution is
// the only place frames interact.
#pragma once

#include <cstdint>
#include <vector>

#include "vsr/params.hpp"
#include "vsr/student.hpp"

namespace vsr {

enum class DiscDomain { pixel, feature };
enum class DiscBackbone {
  frozen_random_pyramid,        // seeded strided conv pyramid (pixel domain)
  frozen_stage1_student_body,   // frozen value-copy of a generator body (feature domain)
};

struct DiscriminatorConfig {
  DiscDomain domain = DiscDomain::pixel;
  DiscBackbone backbone = DiscBackbone::frozen_random_pyramid;
  int64_t tail_channels = 256;
  int64_t detail_channels = 192;       // first partition of the tail features
  int64_t consistency_channels = 64;   // remaining partition
  int64_t tail_hidden = 64;            // width between the three tail convs
};

// The conventional backbone pairing for each domain.
DiscriminatorConfig default_disc_config(DiscDomain domain);

template <class T>
struct DiscriminatorT {
  DiscriminatorConfig cfg;
  ParamStoreT<T> params;
  int64_t in_channels = 0;   // 3 (pixel) or the generator tap width (feature)
  int64_t backbone_out = 0;  // channels entering the tail
  int norm_groups = 4;       // feature domain: copied from the source generator
};

using Discriminator = DiscriminatorT<float>;

// Builds one critic. The feature domain requires the generator whose body is
// copied (values snapshotted at build time and frozen). Trainable groups are
// exactly: the input adapter, the three tail convolutions, and the heads.
Discriminator build_discriminator(const DiscriminatorConfig& cfg, uint64_t seed,
                                  const Student* stage1_student = nullptr);

// Same critic at another scalar precision (for finite-difference probes).
template <class U, class T>
DiscriminatorT<U> cast_discriminator(const DiscriminatorT<T>& d) {
  return DiscriminatorT<U>{d.cfg, cast_param_store<U>(d.params), d.in_channels, d.backbone_out,
                           d.norm_groups};
}

// One critic evaluation on a single sample: a clip [T,3,H,W] (pixel domain)
// or a feature volume [T,C_tap,h,w] (feature domain). Maps preserve the
// backbone feature resolution; logits are the means over T x h' x w'.
// A zero-width head yields an all-zero map and a constant-zero logit.
template <class T>
struct HeadOutputsT {
  VarT<T> detail_map;         // [T,1,h',w']
  VarT<T> consistency_map;    // [T,1,h',w']
  VarT<T> detail_logit;       // scalar [1]
  VarT<T> consistency_logit;  // scalar [1]
};

using HeadOutputs = HeadOutputsT<float>;

// Instantiated for float and double.
template <class T>
HeadOutputsT<T> disc_forward(const DiscriminatorT<T>& d, const VarT<T>& sample);

}  // namespace vsr
