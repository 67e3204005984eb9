#include "vsr/teacher.hpp"

#include <cmath>
#include <string>

#include "vsr/errors.hpp"
#include "vsr/ops.hpp"
#include "vsr/rng.hpp"
#include "vsr/video.hpp"

namespace vsr {

namespace {

TensorF fanin_uniform(Rng& rng, std::vector<int64_t> shape, int64_t fan_in) {
  double bound = std::sqrt(6.0 / double(fan_in));
  TensorF t(std::move(shape));
  for (auto& v : t.data) v = float(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

TeacherEncoder build_teacher_encoder(uint64_t seed, int64_t tap_channels, int scale_factor) {
  if (scale_factor != 4) throw ConfigError("build_teacher_encoder: only scale_factor 4 is supported");
  if (tap_channels < 4) throw ConfigError("build_teacher_encoder: tap_channels must be >= 4");

  TeacherEncoder enc;
  enc.tap_channels = tap_channels;
  enc.hidden = std::max<int64_t>(4, tap_channels / 2);
  enc.seed = seed;

  Rng rng(Rng::mix(seed, 0x656e636f646572ull));
  enc.params.add("enc/c0/w", fanin_uniform(rng, {enc.hidden, 3, 3, 3}, 3 * 9), false, "teacher_encoder");
  enc.params.add("enc/c0/b", TensorF({enc.hidden}), false, "teacher_encoder");
  enc.params.add("enc/c1/w", fanin_uniform(rng, {tap_channels, enc.hidden, 3, 3}, enc.hidden * 9), false,
                 "teacher_encoder");
  enc.params.add("enc/c1/b", TensorF({tap_channels}), false, "teacher_encoder");
  return enc;
}

TensorF teacher_forward(const TeacherConfig& cfg, const TensorF& x_hr, const TensorF& x_lr) {
  if (cfg.sigma < 0.0) throw ConfigError("teacher_forward: sigma must be >= 0");
  if (x_hr.rank() != 4 || x_hr.dim(1) != 3)
    throw DimensionError("teacher_forward: expected [B,3,H,W] reference frames, got " + shape_str(x_hr.shape));
  if (x_lr.numel() > 0) {
    bool ok = x_lr.rank() == 4 && x_lr.dim(0) == x_hr.dim(0) && x_lr.dim(1) == 3 &&
              x_lr.dim(2) * cfg.scale_factor == x_hr.dim(2) && x_lr.dim(3) * cfg.scale_factor == x_hr.dim(3);
    if (!ok)
      throw DimensionError("teacher_forward: reference " + shape_str(x_hr.shape) + " and input " +
                           shape_str(x_lr.shape) + " are not a x" + std::to_string(cfg.scale_factor) + " pair");
  }

  if (cfg.kind == TeacherKind::gt_oracle || cfg.sigma == 0.0) return x_hr;

  const int64_t B = x_hr.dim(0), C = x_hr.dim(1), H = x_hr.dim(2), W = x_hr.dim(3);
  TensorF out(x_hr.shape);
  const int64_t frame_elems = C * H * W;
  for (int64_t b = 0; b < B; ++b) {
    TensorF frame({C, H, W});
    std::copy(x_hr.data.begin() + b * frame_elems, x_hr.data.begin() + (b + 1) * frame_elems,
              frame.data.begin());
    TensorF blurred = gaussian_blur_frame(frame, cfg.sigma);
    std::copy(blurred.data.begin(), blurred.data.end(), out.data.begin() + b * frame_elems);
  }
  return out;
}

VarT<float> reencode_features(const TensorF& x_teacher, const TeacherEncoder& enc, const Student& student,
                              int frames) {
  if (x_teacher.rank() != 4 || x_teacher.dim(1) != 3)
    throw DimensionError("reencode_features: expected [B,3,H,W] pixels, got " + shape_str(x_teacher.shape));
  if (x_teacher.dim(2) % 2 != 0 || x_teacher.dim(3) % 2 != 0)
    throw DimensionError("reencode_features: spatial size must be even, got " + shape_str(x_teacher.shape));
  if (enc.tap_channels != student.widths[3])
    throw DimensionError("reencode_features: encoder emits " + std::to_string(enc.tap_channels) +
                         " channels but the generator tap has " + std::to_string(student.widths[3]));

  auto x = constant(x_teacher);
  auto h = relu(conv2d(x, constant(enc.params.at("enc/c0/w").var->value),
                       constant(enc.params.at("enc/c0/b").var->value), 2, 1));
  h = relu(conv2d(h, constant(enc.params.at("enc/c1/w").var->value),
                  constant(enc.params.at("enc/c1/b").var->value), 1, 1));
  return student_mid_forward(student, h, frames, /*detach_weights=*/true);
}

}  // namespace vsr
