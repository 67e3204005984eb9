// Direct-summation reference convolutions: straightforward nested loops with
// no im2col, no GEMM, no shared code with the production kernels. These are
// the ground truth the fast paths are checked against.
#pragma once

#include <algorithm>
#include <cstdint>

#include <vsr/rng.hpp>
#include <vsr/tensor.hpp>

namespace vsrtest {

inline vsr::TensorD ref_conv2d(const vsr::TensorD& x, const vsr::TensorD& w, const vsr::TensorD* b, int stride,
                               int pad) {
  int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int64_t OH = (H + 2 * pad - kh) / stride + 1;
  int64_t OW = (W + 2 * pad - kw) / stride + 1;
  vsr::TensorD y({B, Cout, OH, OW});
  for (int64_t n = 0; n < B; ++n)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oy = 0; oy < OH; ++oy)
        for (int64_t ox = 0; ox < OW; ++ox) {
          double acc = b ? b->data[size_t(co)] : 0.0;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                int64_t iy = oy * stride + ky - pad;
                int64_t ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x.data[size_t(((n * Cin + ci) * H + iy) * W + ix)] *
                       w.data[size_t(((co * Cin + ci) * kh + ky) * kw + kx)];
              }
          y.data[size_t(((n * Cout + co) * OH + oy) * OW + ox)] = acc;
        }
  return y;
}

inline vsr::TensorD ref_conv1d_time(const vsr::TensorD& x, const vsr::TensorD& w, const vsr::TensorD* b,
                                    int frames) {
  int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t Cout = w.dim(0), k = w.dim(2), r = k / 2;
  int64_t N = B / frames;
  vsr::TensorD y({B, Cout, H, W});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t t = 0; t < frames; ++t)
      for (int64_t co = 0; co < Cout; ++co)
        for (int64_t p = 0; p < H * W; ++p) {
          double acc = b ? b->data[size_t(co)] : 0.0;
          for (int64_t ki = 0; ki < k; ++ki) {
            int64_t ts = std::clamp(t + ki - r, int64_t(0), int64_t(frames - 1));
            for (int64_t ci = 0; ci < Cin; ++ci)
              acc += x.data[size_t(((n * frames + ts) * Cin + ci) * H * W + p)] *
                     w.data[size_t((co * Cin + ci) * k + ki)];
          }
          y.data[size_t(((n * frames + t) * Cout + co) * H * W + p)] = acc;
        }
  return y;
}

inline vsr::TensorD rand_tensor(std::vector<int64_t> shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  vsr::Rng rng(seed);
  vsr::TensorD t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace vsrtest
