// Evaluation: fidelity (PSNR, SSIM), temporal stability (masked flow-warp
// error), width-time profile extraction, and the JSON report around them.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsr/student.hpp"
#include "vsr/training.hpp"
#include "vsr/video.hpp"

namespace vsr {

// Mean over frames of 10*log10(1/MSE) in dB, each frame capped at 99 (the
// cap is what identical inputs report). Expects unit-range clips of the same
// shape.
double psnr(const Clip& a, const Clip& b);

// Mean SSIM over 8x8 windows at stride 4, all channels and frames, with the
// standard constants for a unit dynamic range. Clips must be at least 8x8.
double ssim(const Clip& a, const Clip& b);

// Temporal stability: for each consecutive pair, frame t+1 is pulled back to
// frame t through the flow by bilinear sampling, out-of-frame samples are
// masked out rather than clamped, and the per-pixel squared RGB distance is
// averaged over the valid mask. The pair means are averaged and scaled by
// 1000 (the conventional x10^-3 reporting scale). Needs 2+ frames.
double warping_error(const Clip& clip, const Flow& flow);

// [3,W,T] image: column t is row `row` of frame t. A static clip gives
// constant columns; horizontal motion draws diagonal stripes.
TensorF temporal_profile(const Clip& clip, int64_t row);

struct ClipMetrics {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> e_warp_star;  // absent when the clip has no flow
};

struct MetricReport {
  std::string dataset;
  std::string checkpoint;
  double psnr = 0.0;                  // means over clips
  double ssim = 0.0;
  std::optional<double> e_warp_star;  // mean over clips that carried a flow
  std::vector<ClipMetrics> per_clip;
  std::string config_echo;            // generator configuration summary
};

// Runs one LR->HR pass per pair, clamps the reconstruction to the unit
// range, and scores it against the HR reference. `flows` is either empty or
// one entry per pair (entries may be empty): the HR-resolution ground-truth
// flow used for the reconstruction's warping error. Missing flow leaves the
// metric absent rather than zero. Deterministic: no RNG is consumed.
MetricReport evaluate(Student& student, const std::vector<ClipPair>& dataset,
                      const std::vector<Flow>& flows = {});

nlohmann::json report_to_json(const MetricReport& r);
void save_report(const MetricReport& r, const std::string& path);

}  // namespace vsr
