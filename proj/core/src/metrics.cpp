#include "vsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vsr/errors.hpp"
#include "vsr/ops.hpp"

namespace vsr {

namespace {

void require_same_clips(const Clip& a, const Clip& b, const char* who) {
  if (a.data.rank() != 4 || a.data.dim(1) != 3)
    throw DimensionError(std::string(who) + ": expected [T,3,H,W] clips");
  if (a.data.shape != b.data.shape)
    throw DimensionError(std::string(who) + ": clip shapes differ: " + shape_str(a.data.shape) +
                         " vs " + shape_str(b.data.shape));
}

}  // namespace

double psnr(const Clip& a, const Clip& b) {
  require_same_clips(a, b, "psnr");
  const int64_t T = a.data.dim(0);
  const int64_t per_frame = a.data.numel() / T;
  double acc = 0.0;
  for (int64_t t = 0; t < T; ++t) {
    double se = 0.0;
    const float* pa = a.data.data.data() + t * per_frame;
    const float* pb = b.data.data.data() + t * per_frame;
    for (int64_t i = 0; i < per_frame; ++i) {
      const double d = double(pa[i]) - double(pb[i]);
      se += d * d;
    }
    const double mse = se / double(per_frame);
    acc += mse > 0.0 ? std::min(99.0, 10.0 * std::log10(1.0 / mse)) : 99.0;
  }
  return acc / double(T);
}

double ssim(const Clip& a, const Clip& b) {
  require_same_clips(a, b, "ssim");
  const int64_t T = a.data.dim(0), C = a.data.dim(1), H = a.data.dim(2), W = a.data.dim(3);
  constexpr int64_t kWin = 8, kStride = 4;
  constexpr double kC1 = 1e-4, kC2 = 9e-4;  // (0.01*L)^2, (0.03*L)^2 at L=1
  if (H < kWin || W < kWin) throw DimensionError("ssim: clips must be at least 8x8");

  double acc = 0.0;
  int64_t windows = 0;
  for (int64_t t = 0; t < T; ++t)
    for (int64_t c = 0; c < C; ++c) {
      const float* pa = a.data.data.data() + (t * C + c) * H * W;
      const float* pb = b.data.data.data() + (t * C + c) * H * W;
      for (int64_t y = 0; y + kWin <= H; y += kStride)
        for (int64_t x = 0; x + kWin <= W; x += kStride) {
          double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
          for (int64_t dy = 0; dy < kWin; ++dy)
            for (int64_t dx = 0; dx < kWin; ++dx) {
              const double va = double(pa[(y + dy) * W + (x + dx)]);
              const double vb = double(pb[(y + dy) * W + (x + dx)]);
              sa += va;
              sb += vb;
              saa += va * va;
              sbb += vb * vb;
              sab += va * vb;
            }
          const double n = double(kWin * kWin);
          const double mu_a = sa / n, mu_b = sb / n;
          const double var_a = saa / n - mu_a * mu_a;
          const double var_b = sbb / n - mu_b * mu_b;
          const double cov = sab / n - mu_a * mu_b;
          acc += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                 ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
          ++windows;
        }
    }
  return acc / double(windows);
}

double warping_error(const Clip& clip, const Flow& flow) {
  if (clip.data.rank() != 4 || clip.data.dim(1) != 3)
    throw DimensionError("warping_error: expected a [T,3,H,W] clip");
  const int64_t T = clip.frames(), H = clip.height(), W = clip.width();
  if (T < 2) throw UsageError("warping_error: need at least 2 frames");
  const std::vector<int64_t> want = {T - 1, 2, H, W};
  if (flow.data.shape != want)
    throw DimensionError("warping_error: flow shape " + shape_str(flow.data.shape) +
                         ", expected " + shape_str(want));

  auto px = [&](int64_t t, int64_t c, int64_t y, int64_t x) {
    return double(clip.data.data[((t * 3 + c) * H + y) * W + x]);
  };
  auto fl = [&](int64_t t, int64_t c, int64_t y, int64_t x) {
    return double(flow.data.data[((t * 2 + c) * H + y) * W + x]);
  };

  double total = 0.0;
  for (int64_t t = 0; t + 1 < T; ++t) {
    double sum = 0.0;
    int64_t valid = 0;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        const double sx = double(x) + fl(t, 0, y, x);
        const double sy = double(y) + fl(t, 1, y, x);
        if (sx < 0.0 || sx > double(W - 1) || sy < 0.0 || sy > double(H - 1)) continue;
        // bilinear pull-back of frame t+1 at (sy, sx)
        const int64_t x0 = std::min(int64_t(std::floor(sx)), W - 2);
        const int64_t y0 = std::min(int64_t(std::floor(sy)), H - 2);
        const double fx = sx - double(x0), fy = sy - double(y0);
        double d2 = 0.0;
        for (int64_t c = 0; c < 3; ++c) {
          const double warped = (1 - fy) * ((1 - fx) * px(t + 1, c, y0, x0) +
                                            fx * px(t + 1, c, y0, x0 + 1)) +
                                fy * ((1 - fx) * px(t + 1, c, y0 + 1, x0) +
                                      fx * px(t + 1, c, y0 + 1, x0 + 1));
          const double d = px(t, c, y, x) - warped;
          d2 += d * d;
        }
        sum += d2;
        ++valid;
      }
    if (valid > 0) total += sum / double(valid);
  }
  return total / double(T - 1) * 1000.0;
}

TensorF temporal_profile(const Clip& clip, int64_t row) {
  if (clip.data.rank() != 4) throw DimensionError("temporal_profile: expected a [T,C,H,W] clip");
  const int64_t T = clip.frames(), C = clip.data.dim(1), H = clip.height(), W = clip.width();
  if (row < 0 || row >= H)
    throw UsageError("temporal_profile: row " + std::to_string(row) + " outside [0, " +
                     std::to_string(H) + ")");
  TensorF out({C, W, T});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t x = 0; x < W; ++x)
      for (int64_t t = 0; t < T; ++t)
        out.data[(c * W + x) * T + t] = clip.data.data[((t * C + c) * H + row) * W + x];
  return out;
}

MetricReport evaluate(Student& student, const std::vector<ClipPair>& dataset,
                      const std::vector<Flow>& flows) {
  if (dataset.empty()) throw UsageError("evaluate: empty dataset");
  if (!flows.empty() && flows.size() != dataset.size())
    throw UsageError("evaluate: expected no flows or one per clip, got " +
                     std::to_string(flows.size()) + " for " + std::to_string(dataset.size()) +
                     " clips");

  MetricReport report;
  double warp_acc = 0.0;
  int64_t warp_count = 0;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const ClipPair& pair = dataset[i];
    const int frames = int(pair.lr.frames());
    VarT<float> y = student_forward(student, constant(to_signed(pair.lr.data)), frames);
    TensorF unit = to_unit(y->value);
    for (auto& v : unit.data) v = std::clamp(v, 0.0f, 1.0f);
    Clip out;
    out.id = pair.hr.id;
    out.data = std::move(unit);

    ClipMetrics m;
    m.id = pair.hr.id.empty() ? "clip_" + std::to_string(i) : pair.hr.id;
    m.psnr = psnr(out, pair.hr);
    m.ssim = ssim(out, pair.hr);
    if (i < flows.size() && !flows[i].empty()) {
      m.e_warp_star = warping_error(out, flows[i]);
      warp_acc += *m.e_warp_star;
      ++warp_count;
    }
    report.psnr += m.psnr / double(dataset.size());
    report.ssim += m.ssim / double(dataset.size());
    report.per_clip.push_back(std::move(m));
  }
  if (warp_count > 0) report.e_warp_star = warp_acc / double(warp_count);

  std::string widths;
  for (size_t i = 0; i < student.widths.size(); ++i)
    widths += (i ? "," : "") + std::to_string(student.widths[i]);
  const char* mode = student.cfg.temporal_mode == TemporalMode::none            ? "none"
                     : student.cfg.temporal_mode == TemporalMode::conv_rb       ? "conv_rb"
                     : student.cfg.temporal_mode == TemporalMode::conv_rb_doubled
                         ? "conv_rb_doubled"
                         : "temporal_attention";
  report.config_echo = "scale_factor=" + std::to_string(student.cfg.scale_factor) + " widths=" +
                       widths + " temporal_mode=" + mode;
  return report;
}

nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json metrics = {{"psnr", r.psnr}, {"ssim", r.ssim}};
  metrics["e_warp_star"] = r.e_warp_star ? nlohmann::json(*r.e_warp_star) : nlohmann::json();
  nlohmann::json per_clip = nlohmann::json::array();
  for (const auto& m : r.per_clip) {
    nlohmann::json row = {{"id", m.id}, {"psnr", m.psnr}, {"ssim", m.ssim}};
    row["e_warp_star"] = m.e_warp_star ? nlohmann::json(*m.e_warp_star) : nlohmann::json();
    per_clip.push_back(std::move(row));
  }
  return nlohmann::json{{"dataset", r.dataset},
                        {"checkpoint", r.checkpoint},
                        {"metrics", std::move(metrics)},
                        {"per_clip", std::move(per_clip)},
                        {"config_echo", r.config_echo}};
}

void save_report(const MetricReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("save_report: cannot open " + path + " for writing");
  out << report_to_json(r).dump(2) << "\n";
  if (!out) throw IoError("save_report: write to " + path + " failed");
}

}  // namespace vsr
