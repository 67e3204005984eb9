// Clip synthesis and the clip store. Every texture is a pure function of
// continuous plane coordinates, so a moving frame is just the same function
// sampled at displaced positions and the returned flow field is exact.
#include "vsr/video.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>

#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/image_io.hpp"
#include "vsr/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vsr {

TensorF Clip::frame(int64_t t) const {
  if (t < 0 || t >= frames()) throw UsageError("Clip::frame: index out of range");
  int64_t n = 3 * height() * width();
  TensorF out({3, height(), width()});
  std::copy(data.ptr() + t * n, data.ptr() + (t + 1) * n, out.ptr());
  return out;
}

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// deterministic lattice value in [0,1) at integer coordinates
double lattice(uint64_t seed, int64_t ix, int64_t iy) {
  uint64_t key = (uint64_t(ix) * 0x9e3779b97f4a7c15ull) ^ (uint64_t(iy) * 0xc2b2ae3d27d4eb4full);
  return double(Rng::mix(seed, key) >> 11) * 0x1.0p-53;
}

double value_noise(uint64_t seed, double x, double y, double cell) {
  double fx = x / cell, fy = y / cell;
  int64_t ix = int64_t(std::floor(fx)), iy = int64_t(std::floor(fy));
  double tx = smoothstep(fx - double(ix)), ty = smoothstep(fy - double(iy));
  double v00 = lattice(seed, ix, iy), v10 = lattice(seed, ix + 1, iy);
  double v01 = lattice(seed, ix, iy + 1), v11 = lattice(seed, ix + 1, iy + 1);
  return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}

struct CheckerParams {
  double cell = 8.0, ox = 0.0, oy = 0.0;
  double col_a[3] = {}, col_b[3] = {};
};
struct NoiseParams {
  uint64_t seeds[3] = {};
  double base_cell = 8.0;
  int octaves = 3;
};
struct WaveParams {
  static constexpr int kWaves = 4;
  double kx[kWaves] = {}, ky[kWaves] = {}, phase[kWaves] = {};
  double amp[3][kWaves] = {}, norm[3] = {1, 1, 1};
};
struct BlobParams {
  static constexpr int kMax = 12;
  int count = 0;
  double cx[kMax] = {}, cy[kMax] = {}, inv2r2[kMax] = {};
  double amp[3][kMax] = {}, bg[3] = {};
};

struct Texture {
  TextureKind kind = TextureKind::checker;
  CheckerParams checker;
  NoiseParams noise;
  WaveParams waves;
  BlobParams blobs;

  double eval(int c, double x, double y) const {
    switch (kind) {
      case TextureKind::checker: {
        int64_t qx = int64_t(std::floor((x - checker.ox) / checker.cell));
        int64_t qy = int64_t(std::floor((y - checker.oy) / checker.cell));
        return ((qx + qy) & 1) ? checker.col_b[c] : checker.col_a[c];
      }
      case TextureKind::value_noise: {
        double acc = 0.0, amp = 1.0, norm = 0.0, cell = noise.base_cell;
        for (int o = 0; o < noise.octaves; ++o) {
          acc += amp * (value_noise(noise.seeds[c] + uint64_t(o) * 0x9e37ull, x, y, cell) - 0.5);
          norm += amp;
          amp *= 0.5;
          cell *= 0.5;
        }
        return 0.5 + acc / norm;  // stays inside [0,1]
      }
      case TextureKind::sinusoid_mix: {
        double acc = 0.0;
        for (int i = 0; i < WaveParams::kWaves; ++i)
          acc += waves.amp[c][i] * std::sin(waves.kx[i] * x + waves.ky[i] * y + waves.phase[i]);
        return 0.5 + 0.5 * acc / waves.norm[c];
      }
      case TextureKind::blobs: {
        double acc = blobs.bg[c];
        for (int i = 0; i < blobs.count; ++i) {
          double dx = x - blobs.cx[i], dy = y - blobs.cy[i];
          acc += blobs.amp[c][i] * std::exp(-(dx * dx + dy * dy) * blobs.inv2r2[i]);
        }
        return std::clamp(acc, 0.0, 1.0);
      }
    }
    return 0.0;
  }
};

// Wavelength bounds are in pixels; the finer "detail" family just passes a
// smaller range to the same generators.
Texture draw_texture(Rng& rng, TextureKind kind, double wl_lo, double wl_hi, int64_t H, int64_t W) {
  Texture tex;
  tex.kind = kind;
  switch (kind) {
    case TextureKind::checker: {
      tex.checker.cell = rng.uniform(wl_lo, wl_hi);
      tex.checker.ox = rng.uniform(0.0, tex.checker.cell);
      tex.checker.oy = rng.uniform(0.0, tex.checker.cell);
      for (int c = 0; c < 3; ++c) {
        double a = rng.uniform(0.1, 0.9), b = rng.uniform(0.1, 0.9);
        if (std::abs(a - b) < 0.25) b = a > 0.5 ? a - 0.35 : a + 0.35;
        tex.checker.col_a[c] = a;
        tex.checker.col_b[c] = b;
      }
      break;
    }
    case TextureKind::value_noise: {
      for (int c = 0; c < 3; ++c) tex.noise.seeds[c] = rng.next_u64();
      tex.noise.base_cell = rng.uniform(wl_lo, wl_hi);
      tex.noise.octaves = 3;
      break;
    }
    case TextureKind::sinusoid_mix: {
      for (int i = 0; i < WaveParams::kWaves; ++i) {
        double k = 2.0 * M_PI / rng.uniform(wl_lo, wl_hi);
        double theta = rng.uniform(0.0, 2.0 * M_PI);
        tex.waves.kx[i] = k * std::cos(theta);
        tex.waves.ky[i] = k * std::sin(theta);
        tex.waves.phase[i] = rng.uniform(0.0, 2.0 * M_PI);
      }
      for (int c = 0; c < 3; ++c) {
        double norm = 0.0;
        for (int i = 0; i < WaveParams::kWaves; ++i) {
          tex.waves.amp[c][i] = rng.uniform(0.2, 1.0);
          norm += tex.waves.amp[c][i];
        }
        tex.waves.norm[c] = norm;
      }
      break;
    }
    case TextureKind::blobs: {
      tex.blobs.count = int(rng.uniform_int(6, BlobParams::kMax));
      for (int c = 0; c < 3; ++c) tex.blobs.bg[c] = rng.uniform(0.3, 0.7);
      for (int i = 0; i < tex.blobs.count; ++i) {
        tex.blobs.cx[i] = rng.uniform(-0.2, 1.2) * double(W);
        tex.blobs.cy[i] = rng.uniform(-0.2, 1.2) * double(H);
        double r = rng.uniform(wl_lo * 0.5, wl_hi * 0.75);
        tex.blobs.inv2r2[i] = 1.0 / (2.0 * r * r);
        for (int c = 0; c < 3; ++c) tex.blobs.amp[c][i] = rng.uniform(-0.5, 0.5);
      }
      break;
    }
  }
  return tex;
}

void render_frame(const Texture& tex, float* base, int64_t H, int64_t W,
                  const std::function<void(double, double, double&, double&)>& to_tex_coords) {
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double sx, sy;
      to_tex_coords(double(x), double(y), sx, sy);
      for (int64_t c = 0; c < 3; ++c) base[c * H * W + y * W + x] = float(tex.eval(int(c), sx, sy));
    }
}

}  // namespace

Clip synth_clip(uint64_t seed, const SynthOptions& opt, Flow* flow_out) {
  const int64_t T = opt.frames, H = opt.height, W = opt.width;
  if (T < 1 || H < 4 || W < 4) throw ConfigError("synth_clip: need frames >= 1 and sizes >= 4");
  Rng rng(Rng::mix(seed, 0x636c6970ull));

  TextureKind kind = opt.force_texture ? *opt.force_texture : TextureKind(rng.uniform_int(0, 3));
  Texture tex = draw_texture(rng, kind, 6.0, 18.0, H, W);
  MotionKind motion =
      opt.force_motion ? *opt.force_motion : (rng.next_unit() < 0.7 ? MotionKind::translate : MotionKind::rotate);

  // total displacement across the clip stays within a quarter of the frame
  double vx = 0.0, vy = 0.0, theta = 0.0;
  const double cx = double(W - 1) / 2.0, cy = double(H - 1) / 2.0;
  if (motion == MotionKind::translate) {
    int64_t steps = std::max<int64_t>(1, T - 1);
    int64_t vmax = std::max<int64_t>(1, std::min(H, W) / (4 * steps));
    if (opt.integer_velocity) {
      vx = double(rng.uniform_int(1, vmax)) * (rng.next_unit() < 0.5 ? -1.0 : 1.0);
      vy = double(rng.uniform_int(1, vmax)) * (rng.next_unit() < 0.5 ? -1.0 : 1.0);
    } else {
      vx = rng.uniform(0.5, double(vmax)) * (rng.next_unit() < 0.5 ? -1.0 : 1.0);
      vy = rng.uniform(0.5, double(vmax)) * (rng.next_unit() < 0.5 ? -1.0 : 1.0);
    }
  } else {
    theta = rng.uniform(0.02, 0.08) * (rng.next_unit() < 0.5 ? -1.0 : 1.0);
  }

  Clip clip;
  char idbuf[32];
  std::snprintf(idbuf, sizeof idbuf, "synth-%016llx", (unsigned long long)seed);
  clip.id = idbuf;
  clip.data = TensorF({T, 3, H, W});
  for (int64_t t = 0; t < T; ++t) {
    float* base = clip.data.ptr() + t * 3 * H * W;
    if (motion == MotionKind::translate) {
      double ox = double(t) * vx, oy = double(t) * vy;
      render_frame(tex, base, H, W, [ox, oy](double x, double y, double& sx, double& sy) {
        sx = x - ox;
        sy = y - oy;
      });
    } else {
      double a = -theta * double(t), ca = std::cos(a), sa = std::sin(a);
      render_frame(tex, base, H, W, [ca, sa, cx, cy](double x, double y, double& sx, double& sy) {
        sx = ca * (x - cx) - sa * (y - cy) + cx;
        sy = sa * (x - cx) + ca * (y - cy) + cy;
      });
    }
  }

  if (flow_out) {
    flow_out->data = TensorF({std::max<int64_t>(T - 1, 0), 2, H, W});
    float* fp = flow_out->data.ptr();
    for (int64_t t = 0; t + 1 < T; ++t) {
      float* dx = fp + (t * 2 + 0) * H * W;
      float* dy = fp + (t * 2 + 1) * H * W;
      if (motion == MotionKind::translate) {
        std::fill(dx, dx + H * W, float(vx));
        std::fill(dy, dy + H * W, float(vy));
      } else {
        double ca = std::cos(theta), sa = std::sin(theta);
        for (int64_t y = 0; y < H; ++y)
          for (int64_t x = 0; x < W; ++x) {
            double rx = double(x) - cx, ry = double(y) - cy;
            dx[y * W + x] = float(ca * rx - sa * ry - rx);
            dy[y * W + x] = float(sa * rx + ca * ry - ry);
          }
      }
    }
  }
  return clip;
}

TensorF sample_detail_frame(uint64_t seed, int64_t height, int64_t width) {
  if (height < 4 || width < 4) throw ConfigError("sample_detail_frame: sizes must be >= 4");
  Rng rng(Rng::mix(seed, 0x64657461696cull));
  Texture fine_noise = draw_texture(rng, TextureKind::value_noise, 2.0, 5.0, height, width);
  Texture fine_waves = draw_texture(rng, TextureKind::sinusoid_mix, 2.5, 6.0, height, width);
  double wmix = rng.uniform(0.35, 0.65);
  TensorF out({3, height, width});
  for (int64_t y = 0; y < height; ++y)
    for (int64_t x = 0; x < width; ++x)
      for (int64_t c = 0; c < 3; ++c)
        out.ptr()[c * height * width + y * width + x] =
            float(wmix * fine_noise.eval(int(c), double(x), double(y)) +
                  (1.0 - wmix) * fine_waves.eval(int(c), double(x), double(y)));
  return out;
}

TensorF gaussian_blur_frame(const TensorF& chw, double sigma) {
  if (chw.rank() != 3) throw DimensionError("gaussian_blur_frame: expected [C,H,W]");
  if (sigma <= 0.0) return chw;
  const int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  int64_t radius = std::max<int64_t>(1, int64_t(std::ceil(3.0 * sigma)));
  std::vector<double> kern(size_t(2 * radius + 1));
  double norm = 0.0;
  for (int64_t i = -radius; i <= radius; ++i) {
    kern[size_t(i + radius)] = std::exp(-double(i * i) / (2.0 * sigma * sigma));
    norm += kern[size_t(i + radius)];
  }
  for (auto& k : kern) k /= norm;

  TensorF out(chw.shape);
  std::vector<double> tmp(size_t(H * W));
  for (int64_t c = 0; c < C; ++c) {
    const float* src = chw.ptr() + c * H * W;
    // horizontal pass with replicate borders
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int64_t i = -radius; i <= radius; ++i)
          acc += kern[size_t(i + radius)] * double(src[y * W + std::clamp(x + i, int64_t(0), W - 1)]);
        tmp[size_t(y * W + x)] = acc;
      }
    float* dst = out.ptr() + c * H * W;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int64_t i = -radius; i <= radius; ++i)
          acc += kern[size_t(i + radius)] * tmp[size_t(std::clamp(y + i, int64_t(0), H - 1) * W + x)];
        dst[y * W + x] = float(acc);
      }
  }
  return out;
}

Clip degrade(const Clip& hr, uint64_t seed, const DegradeOptions& opt) {
  const int64_t T = hr.frames(), H = hr.height(), W = hr.width();
  if (T < 1) throw UsageError("degrade: empty clip");
  if (opt.scale < 1) throw ConfigError("degrade: scale must be >= 1");
  if (H % opt.scale != 0 || W % opt.scale != 0)
    throw DimensionError("degrade: clip size " + shape_str({H, W}) + " not divisible by scale " +
                         std::to_string(opt.scale));
  if (opt.blur_sigma_lo > opt.blur_sigma_hi || opt.noise_sigma_lo > opt.noise_sigma_hi ||
      opt.levels_lo > opt.levels_hi || opt.blur_sigma_lo < 0.0 || opt.noise_sigma_lo < 0.0)
    throw ConfigError("degrade: malformed parameter ranges");
  if (opt.levels_lo < 2) throw ConfigError("degrade: need at least 2 quantization levels");

  Rng rng(Rng::mix(seed, 0x646772616465ull));
  const double sigma = rng.uniform(opt.blur_sigma_lo, opt.blur_sigma_hi);
  const double noise_sigma = rng.uniform(opt.noise_sigma_lo, opt.noise_sigma_hi);
  const int64_t levels = rng.uniform_int(opt.levels_lo, opt.levels_hi);

  const int64_t h = H / opt.scale, w = W / opt.scale, s = opt.scale;
  Clip out;
  out.id = hr.id;
  out.data = TensorF({T, 3, h, w});
  for (int64_t t = 0; t < T; ++t) {
    TensorF blurred = gaussian_blur_frame(hr.frame(t), sigma);
    float* dst = out.data.ptr() + t * 3 * h * w;
    for (int64_t c = 0; c < 3; ++c) {
      const float* src = blurred.ptr() + c * H * W;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int64_t dy = 0; dy < s; ++dy)
            for (int64_t dx = 0; dx < s; ++dx) acc += double(src[(y * s + dy) * W + (x * s + dx)]);
          double v = acc / double(s * s);
          if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
          v = std::clamp(v, 0.0, 1.0);
          v = std::round(v * double(levels - 1)) / double(levels - 1);
          dst[c * h * w + y * w + x] = float(v);
        }
    }
  }
  return out;
}

Clip shuffle_frames(const Clip& clip, uint64_t seed) {
  const int64_t T = clip.frames();
  if (T < 2) throw UsageError("shuffle_frames: need at least 2 frames");
  Rng rng(Rng::mix(seed, 0x73687566666cull));
  std::vector<int64_t> perm(static_cast<size_t>(T));
  auto redraw = [&] {
    for (int64_t i = 0; i < T; ++i) perm[size_t(i)] = i;
    for (int64_t i = T - 1; i > 0; --i) std::swap(perm[size_t(i)], perm[size_t(rng.uniform_int(0, i))]);
  };
  auto is_identity = [&] {
    for (int64_t i = 0; i < T; ++i)
      if (perm[size_t(i)] != i) return false;
    return true;
  };
  redraw();
  // two frames can only stay put or swap, so identity must stay drawable there
  while (T >= 3 && is_identity()) redraw();

  const int64_t n = 3 * clip.height() * clip.width();
  Clip out;
  out.id = clip.id + "-shuffled";
  out.data = TensorF(clip.data.shape);
  for (int64_t t = 0; t < T; ++t)
    std::copy(clip.data.ptr() + perm[size_t(t)] * n, clip.data.ptr() + (perm[size_t(t)] + 1) * n,
              out.data.ptr() + t * n);
  return out;
}

Clip repeat_image(const TensorF& frame, int64_t frames) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw DimensionError("repeat_image: expected [3,H,W]");
  if (frames < 1) throw UsageError("repeat_image: need at least 1 frame");
  Clip out;
  out.id = "still";
  out.data = TensorF({frames, 3, frame.dim(1), frame.dim(2)});
  for (int64_t t = 0; t < frames; ++t) std::copy(frame.data.begin(), frame.data.end(), out.data.ptr() + t * frame.numel());
  return out;
}

Clip assemble_images(const std::vector<TensorF>& frames) {
  if (frames.empty()) throw UsageError("assemble_images: need at least 1 frame");
  for (const auto& f : frames)
    if (f.rank() != 3 || f.dim(0) != 3 || !f.same_shape(frames[0]))
      throw DimensionError("assemble_images: frames must all be [3,H,W] with equal sizes");
  Clip out;
  out.id = "assembled";
  out.data = TensorF({int64_t(frames.size()), 3, frames[0].dim(1), frames[0].dim(2)});
  for (size_t t = 0; t < frames.size(); ++t)
    std::copy(frames[t].data.begin(), frames[t].data.end(), out.data.ptr() + int64_t(t) * frames[0].numel());
  return out;
}

TensorF to_signed(const TensorF& unit) {
  TensorF out(unit.shape);
  for (size_t i = 0; i < unit.data.size(); ++i) out.data[i] = unit.data[i] * 2.0f - 1.0f;
  return out;
}

TensorF to_unit(const TensorF& sgn) {
  TensorF out(sgn.shape);
  for (size_t i = 0; i < sgn.data.size(); ++i) out.data[i] = (sgn.data[i] + 1.0f) * 0.5f;
  return out;
}

static const char kFlowMagic[8] = {'A', 'V', 'S', 'R', 'F', 'L', 'W', '1'};

void save_clip(const std::string& dir, const Clip& clip, const Flow* flow) {
  if (clip.frames() < 1) throw UsageError("save_clip: empty clip");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("save_clip: cannot create " + dir + ": " + ec.message());

  json m{{"clip_id", clip.id},
         {"frames", clip.frames()},
         {"height", clip.height()},
         {"width", clip.width()},
         {"value_range", "unit"}};
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw IoError("save_clip: cannot write manifest in " + dir);
  mf << m.dump(2) << "\n";
  mf.close();
  if (!mf) throw IoError("save_clip: failed writing manifest in " + dir);

  char name[32];
  for (int64_t t = 0; t < clip.frames(); ++t) {
    std::snprintf(name, sizeof name, "frame_%03d.png", int(t));
    write_png(dir + "/" + name, clip.frame(t));
  }

  if (flow && !flow->empty()) {
    const auto& f = flow->data;
    if (f.rank() != 4 || f.dim(0) != clip.frames() - 1 || f.dim(1) != 2 || f.dim(2) != clip.height() ||
        f.dim(3) != clip.width())
      throw DimensionError("save_clip: flow shape " + shape_str(f.shape) + " does not match clip");
    std::ofstream bf(dir + "/flow.bin", std::ios::binary);
    if (!bf) throw IoError("save_clip: cannot write flow.bin in " + dir);
    bf.write(kFlowMagic, 8);
    uint32_t hdr[3] = {uint32_t(f.dim(0)), uint32_t(clip.height()), uint32_t(clip.width())};
    bf.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    bf.write(reinterpret_cast<const char*>(f.ptr()), std::streamsize(f.data.size() * sizeof(float)));
    bf.close();
    if (!bf) throw IoError("save_clip: failed writing flow.bin in " + dir);
  }
}

Clip load_clip(const std::string& dir, Flow* flow_out) {
  const std::string mpath = dir + "/manifest.json";
  std::ifstream mf(mpath);
  if (!mf) throw IoError("load_clip: cannot open " + mpath);
  json m;
  try {
    mf >> m;
  } catch (const json::exception& e) {
    throw FormatError("load_clip: bad manifest " + mpath + ": " + e.what());
  }
  int64_t T, H, W;
  std::string id, range;
  try {
    id = m.at("clip_id").get<std::string>();
    T = m.at("frames").get<int64_t>();
    H = m.at("height").get<int64_t>();
    W = m.at("width").get<int64_t>();
    range = m.at("value_range").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("load_clip: manifest " + mpath + " missing fields: " + e.what());
  }
  if (T < 1 || H < 1 || W < 1) throw FormatError("load_clip: manifest " + mpath + " has non-positive sizes");
  if (range != "unit") throw FormatError("load_clip: unsupported value_range '" + range + "' in " + mpath);

  Clip clip;
  clip.id = id;
  clip.data = TensorF({T, 3, H, W});
  char name[32];
  for (int64_t t = 0; t < T; ++t) {
    std::snprintf(name, sizeof name, "frame_%03d.png", int(t));
    TensorF f = read_png(dir + "/" + name);
    if (f.dim(1) != H || f.dim(2) != W)
      throw FormatError("load_clip: " + dir + "/" + name + " is " + shape_str(f.shape) + ", manifest says " +
                        shape_str({3, H, W}));
    std::copy(f.data.begin(), f.data.end(), clip.data.ptr() + t * f.numel());
  }

  if (flow_out) {
    *flow_out = Flow{};
    const std::string fpath = dir + "/flow.bin";
    std::ifstream bf(fpath, std::ios::binary);
    if (bf) {
      char magic[8];
      uint32_t hdr[3];
      if (!bf.read(magic, 8) || std::memcmp(magic, kFlowMagic, 8) != 0)
        throw FormatError("load_clip: " + fpath + " has a bad magic header");
      if (!bf.read(reinterpret_cast<char*>(hdr), sizeof hdr))
        throw FormatError("load_clip: " + fpath + " is truncated");
      if (int64_t(hdr[0]) != T - 1 || int64_t(hdr[1]) != H || int64_t(hdr[2]) != W)
        throw FormatError("load_clip: " + fpath + " header disagrees with the manifest");
      TensorF f({T - 1, 2, H, W});
      if (!bf.read(reinterpret_cast<char*>(f.ptr()), std::streamsize(f.data.size() * sizeof(float))))
        throw FormatError("load_clip: " + fpath + " is truncated");
      flow_out->data = std::move(f);
    }
  }
  return clip;
}

}  // namespace vsr
