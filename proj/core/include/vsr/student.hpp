// The upscaling generator: a pruned-width 2D convolutional trunk operating on
// every frame independently, with temporal mixing blocks inserted at the end
// of each stage. Temporal blocks are residual and zero-initialized, so a
// freshly built network is bit-identical to its 2D-only path.
#pragma once

#include <cstdint>
#include <vector>

#include "vsr/params.hpp"

namespace vsr {

enum class TemporalMode {
  none,                // no temporal parameters at all
  conv_rb,             // residual pair of frame-axis 1D convolutions
  conv_rb_doubled,     // two such residual pairs per site
  temporal_attention,  // residual single-head attention over frames
};

struct StudentConfig {
  int scale_factor = 4;  // only x4 is supported: two x2 decoder stages
  // body stage widths s0..s2, then decoder widths d0 (pre/mid) and d1 (post)
  std::vector<int64_t> base_widths = {48, 48, 48, 48, 24};
  double prune_body = 0.25;     // width fraction removed from body stages
  double prune_decoder = 0.5;   // width fraction removed from decoder stages
  TemporalMode temporal_mode = TemporalMode::conv_rb;
  int norm_groups = 4;  // adapted downward per layer until it divides the width
  uint64_t init_seed = 0x5eed;
};

// Width left after pruning a fraction: max(4, round(base * (1 - fraction))).
int64_t prune_width(int64_t base, double fraction);

struct Student {
  StudentConfig cfg;
  ParamStoreT<float> params;
  std::vector<int64_t> widths;  // resolved: body w0..w2, decoder d0, d1
};

Student build_student(const StudentConfig& cfg);

// x: [N*frames, 3, h, w] in the signed range. Returns the raw (unclamped)
// [N*frames, 3, 4h, 4w] reconstruction. tap_out, when given, receives the
// feature map at the alignment point (after the mid-stage temporal block):
// [N*frames, d0, 2h, 2w].
VarT<float> student_forward(Student& s, const VarT<float>& x, int frames, VarT<float>* tap_out = nullptr);

// Same trunk with every temporal block skipped (frame-independent path).
VarT<float> student_forward_2d(Student& s, const VarT<float>& x, VarT<float>* tap_out = nullptr);

// Runs just the decoder mid-stage block (two residual blocks plus its
// temporal site) on an already tap-shaped feature map [B, d0, h, w]. With
// detach_weights the current weight values enter the graph as constants, so
// the output carries no gradient path to any parameter.
VarT<float> student_mid_forward(const Student& s, const VarT<float>& h, int frames, bool detach_weights = false);

struct ParamBreakdown {
  int64_t body_2d = 0;
  int64_t decoder_2d = 0;
  int64_t temporal = 0;
  int64_t total = 0;
  double temporal_ratio = 0.0;  // temporal / total
};
ParamBreakdown count_params(const Student& s);

// Group count actually used for a given channel width.
int resolve_groups(int requested, int64_t channels);

// Runs the three per-frame body stages (stem excluded, no temporal mixing)
// with parameters stored under `prefix` in an arbitrary store — lets other
// networks embed a frozen copy of the generator body.
// Instantiated for float and double so probe-precision rebuilds of dependent
// networks work.
template <class T>
VarT<T> body_stages_forward_2d(const ParamStoreT<T>& store, const std::string& prefix, const VarT<T>& h,
                               int norm_groups);

}  // namespace vsr
