// Supervision targets. The pixel-domain target is the clean reference frame
// stack (optionally smoothed); the feature-domain target re-encodes those
// pixels with a frozen seeded measurement map and pushes them through the
// generator's own mid-stage block, gradient-blocked, so both feature streams
// live in the same space.
#pragma once

#include <cstdint>

#include "vsr/params.hpp"
#include "vsr/student.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

enum class TeacherKind {
  gt_oracle,    // target = the reference frames, untouched
  gt_smoothed,  // target = per-frame Gaussian blur of the reference frames
};

struct TeacherConfig {
  TeacherKind kind = TeacherKind::gt_oracle;
  double sigma = 0.0;    // blur width for gt_smoothed; must be >= 0
  int scale_factor = 4;  // used to validate the reference/input pairing
};

// Frozen measurement map from target pixels down to tap-resolution features:
// two convolutions (stride 2 then stride 1) with ReLU after each. Weights are
// drawn once from the seed and never trained; checkpoints carry them under a
// frozen group so integrity checks can prove they did not move.
struct TeacherEncoder {
  ParamStoreT<float> params;  // enc/c0/{w,b}, enc/c1/{w,b}
  int64_t tap_channels = 0;
  int64_t hidden = 0;
  uint64_t seed = 0;
};

TeacherEncoder build_teacher_encoder(uint64_t seed, int64_t tap_channels, int scale_factor = 4);

// Pixel-domain target for a frame batch [B,3,H,W] in the signed range.
// gt_oracle returns x_hr bit-equal; gt_smoothed blurs each frame spatially.
// When x_lr is non-empty its spatial size must be x_hr's divided by
// cfg.scale_factor (the pairing the rest of the pipeline assumes).
TensorF teacher_forward(const TeacherConfig& cfg, const TensorF& x_hr, const TensorF& x_lr = TensorF());

// Feature-domain target: encoder(x_teacher) pushed through the generator's
// current mid-stage block with every weight entering as a constant. The
// returned node has no parents: no parameter can receive gradient through it.
// x_teacher: [B,3,H,W] with H,W even; result matches the generator tap shape
// [B, tap_channels, H/2, W/2].
VarT<float> reencode_features(const TensorF& x_teacher, const TeacherEncoder& enc, const Student& student,
                              int frames);

}  // namespace vsr
