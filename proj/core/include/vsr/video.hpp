// Procedural clip synthesis, degradation, curation transforms, and the
// on-disk clip format. Textures are continuous functions of the image plane,
// so motion is rendered exactly and the ground-truth flow is exact by
// construction rather than estimated.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vsr/tensor.hpp"

namespace vsr {

// A clip is [T,3,H,W] float in the unit range [0,1].
struct Clip {
  std::string id;
  TensorF data;

  int64_t frames() const { return data.rank() == 4 ? data.dim(0) : 0; }
  int64_t height() const { return data.dim(2); }
  int64_t width() const { return data.dim(3); }
  TensorF frame(int64_t t) const;  // -> [3,H,W] copy
};

// Dense flow between consecutive frames: [T-1,2,H,W], channel 0 = dx,
// channel 1 = dy. Content at pixel p in frame t appears at p + flow_t(p) in
// frame t+1.
struct Flow {
  TensorF data;
  bool empty() const { return data.data.empty(); }
};

enum class TextureKind { checker, value_noise, sinusoid_mix, blobs };
enum class MotionKind { translate, rotate };

struct SynthOptions {
  int64_t frames = 5;
  int64_t height = 64;
  int64_t width = 64;
  std::optional<MotionKind> force_motion;    // unset: drawn from the seed
  std::optional<TextureKind> force_texture;  // unset: drawn from the seed
  bool integer_velocity = true;              // translate lands on the pixel grid
};

// Moving-texture clip plus its exact flow. Same seed, same bits.
Clip synth_clip(uint64_t seed, const SynthOptions& opt, Flow* flow_out = nullptr);

// Single frames from a visibly finer-scale texture family than synth_clip
// uses; these curate the image-origin examples that carry extra
// high-frequency detail.
TensorF sample_detail_frame(uint64_t seed, int64_t height, int64_t width);

struct DegradeOptions {
  int scale = 4;
  double blur_sigma_lo = 1.0, blur_sigma_hi = 2.0;
  double noise_sigma_lo = 0.0, noise_sigma_hi = 0.05;
  int levels_lo = 24, levels_hi = 48;  // quantization level count
};

// blur -> x(1/scale) area downsample -> additive Gaussian noise -> clamp ->
// quantize. Parameters are drawn once per clip from the seed; noise is fresh
// per pixel and frame.
Clip degrade(const Clip& hr, uint64_t seed, const DegradeOptions& opt = {});

// Separable Gaussian blur of one [C,H,W] frame with replicate borders.
TensorF gaussian_blur_frame(const TensorF& chw, double sigma);

// Uniformly random frame permutation; for clips of 3+ frames the identity
// permutation is rejected so the result is guaranteed to break time order.
Clip shuffle_frames(const Clip& clip, uint64_t seed);

Clip repeat_image(const TensorF& frame, int64_t frames);   // frozen still
Clip assemble_images(const std::vector<TensorF>& frames);  // unrelated stills

// unit [0,1] storage range <-> signed [-1,1] network range
TensorF to_signed(const TensorF& unit);
TensorF to_unit(const TensorF& sgn);

// On-disk layout: <dir>/manifest.json + frame_%03d.png (+ flow.bin when flow
// is provided). flow.bin: 8-byte magic "AVSRFLW1", u32 LE {T-1, H, W}, then
// f32 LE data [T-1,2,H,W].
void save_clip(const std::string& dir, const Clip& clip, const Flow* flow = nullptr);
Clip load_clip(const std::string& dir, Flow* flow_out = nullptr);

}  // namespace vsr
