// Op implementations. Convolutions lower to im2col + a single Eigen GEMM per
// frame; every reduction accumulates in double. All loops use fixed iteration
// order so results are bit-reproducible run to run.
#include "vsr/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace vsr {

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatR<T>>;
template <class T>
using MapC = Eigen::Map<const MatR<T>>;

template <class T>
void check_same_shape(const VarT<T>& a, const VarT<T>& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a->value.shape) + " vs " +
                         shape_str(b->value.shape));
}

template <class T>
void check_rank4(const VarT<T>& x, const char* op) {
  if (x->value.rank() != 4) throw DimensionError(std::string(op) + ": expected rank-4 input, got " + shape_str(x->value.shape));
}

// im2col for one frame: col[(c*kh+ky)*kw+kx][oy*OW+ox] = padded x
template <class T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, int OH, int OW, T* col) {
  for (int c = 0; c < C; ++c) {
    const T* xc = x + int64_t(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + (int64_t(c) * kh + ky) * kw * int64_t(OH) * OW + int64_t(kx) * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride + ky - pad;
          T* dst = row + int64_t(oy) * OW;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + OW, T(0));
            continue;
          }
          const T* src = xc + int64_t(iy) * W;
          if (stride == 1) {
            int ix0 = kx - pad;  // input col for ox = 0
            int lo = std::max(0, -ix0);
            int hi = std::min(OW, W - ix0);
            if (lo > 0) std::fill(dst, dst + lo, T(0));
            if (hi > lo) std::copy(src + ix0 + lo, src + ix0 + hi, dst + lo);
            if (hi < OW) std::fill(dst + std::max(hi, lo), dst + OW, T(0));
          } else {
            for (int ox = 0; ox < OW; ++ox) {
              int ix = ox * stride + kx - pad;
              dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

// scatter-add transpose of im2col
template <class T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, int OH, int OW, T* dx) {
  for (int c = 0; c < C; ++c) {
    T* dxc = dx + int64_t(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + (int64_t(c) * kh + ky) * kw * int64_t(OH) * OW + int64_t(kx) * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          const T* src = row + int64_t(oy) * OW;
          T* dst = dxc + int64_t(iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T, class Fwd, class Bwd>
VarT<T> unary_op(const VarT<T>& a, Fwd f, Bwd dfdx_from_io) {
  TensorT<T> out(a->value.shape);
  for (int64_t i = 0; i < a->value.numel(); ++i) out.data[size_t(i)] = f(a->value.data[size_t(i)]);
  return make_op<T>(std::move(out), {a}, [a, dfdx_from_io](NodeT<T>& n) {
    if (!a->needs_grad) return;
    auto& ga = a->ensure_grad();
    for (int64_t i = 0; i < n.value.numel(); ++i)
      ga.data[size_t(i)] += n.grad.data[size_t(i)] * dfdx_from_io(a->value.data[size_t(i)], n.value.data[size_t(i)]);
  });
}

}  // namespace

// -- elementwise --------------------------------------------------------------

template <class T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
  check_same_shape(a, b, "add");
  TensorT<T> out(a->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out.data[size_t(i)] = a->value.data[size_t(i)] + b->value.data[size_t(i)];
  return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& n) {
    if (a->needs_grad) {
      auto& g = a->ensure_grad();
      for (int64_t i = 0; i < n.value.numel(); ++i) g.data[size_t(i)] += n.grad.data[size_t(i)];
    }
    if (b->needs_grad) {
      auto& g = b->ensure_grad();
      for (int64_t i = 0; i < n.value.numel(); ++i) g.data[size_t(i)] += n.grad.data[size_t(i)];
    }
  });
}

template <class T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) {
  check_same_shape(a, b, "sub");
  TensorT<T> out(a->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out.data[size_t(i)] = a->value.data[size_t(i)] - b->value.data[size_t(i)];
  return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& n) {
    if (a->needs_grad) {
      auto& g = a->ensure_grad();
      for (int64_t i = 0; i < n.value.numel(); ++i) g.data[size_t(i)] += n.grad.data[size_t(i)];
    }
    if (b->needs_grad) {
      auto& g = b->ensure_grad();
      for (int64_t i = 0; i < n.value.numel(); ++i) g.data[size_t(i)] -= n.grad.data[size_t(i)];
    }
  });
}

template <class T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
  check_same_shape(a, b, "mul");
  TensorT<T> out(a->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out.data[size_t(i)] = a->value.data[size_t(i)] * b->value.data[size_t(i)];
  return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& n) {
    if (a->needs_grad) {
      auto& g = a->ensure_grad();
      for (int64_t i = 0; i < n.value.numel(); ++i) g.data[size_t(i)] += n.grad.data[size_t(i)] * b->value.data[size_t(i)];
    }
    if (b->needs_grad) {
      auto& g = b->ensure_grad();
      for (int64_t i = 0; i < n.value.numel(); ++i) g.data[size_t(i)] += n.grad.data[size_t(i)] * a->value.data[size_t(i)];
    }
  });
}

template <class T>
VarT<T> div_(const VarT<T>& a, const VarT<T>& b) {
  check_same_shape(a, b, "div");
  TensorT<T> out(a->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out.data[size_t(i)] = a->value.data[size_t(i)] / b->value.data[size_t(i)];
  return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& n) {
    if (a->needs_grad) {
      auto& g = a->ensure_grad();
      for (int64_t i = 0; i < n.value.numel(); ++i) g.data[size_t(i)] += n.grad.data[size_t(i)] / b->value.data[size_t(i)];
    }
    if (b->needs_grad) {
      auto& g = b->ensure_grad();
      for (int64_t i = 0; i < n.value.numel(); ++i) {
        T bv = b->value.data[size_t(i)];
        g.data[size_t(i)] -= n.grad.data[size_t(i)] * a->value.data[size_t(i)] / (bv * bv);
      }
    }
  });
}

template <class T>
VarT<T> neg(const VarT<T>& a) {
  return unary_op(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <class T>
VarT<T> abs_(const VarT<T>& a) {
  return unary_op(a, [](T x) { return std::abs(x); },
                  [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
VarT<T> scale(const VarT<T>& a, double s) {
  return unary_op(a, [s](T x) { return T(x * T(s)); }, [s](T, T) { return T(s); });
}

template <class T>
VarT<T> add_scalar(const VarT<T>& a, double s) {
  return unary_op(a, [s](T x) { return T(x + T(s)); }, [](T, T) { return T(1); });
}

template <class T>
VarT<T> relu(const VarT<T>& a) {
  return unary_op(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
VarT<T> leaky_relu(const VarT<T>& a, double slope) {
  T s = T(slope);
  return unary_op(a, [s](T x) { return x > T(0) ? x : s * x; }, [s](T x, T) { return x > T(0) ? T(1) : s; });
}

template <class T>
VarT<T> softplus(const VarT<T>& a) {
  // overflow-safe: softplus(x) = max(x,0) + log1p(exp(-|x|)), evaluated in double
  return unary_op(
      a, [](T x) { return T(std::max(double(x), 0.0) + std::log1p(std::exp(-std::abs(double(x))))); },
      [](T x, T) { return T(1.0 / (1.0 + std::exp(-double(x)))); });
}

// -- reductions ---------------------------------------------------------------

template <class T>
VarT<T> sum_all(const VarT<T>& a) {
  double acc = 0.0;
  for (T v : a->value.data) acc += double(v);
  TensorT<T> out({1});
  out.data[0] = T(acc);
  return make_op<T>(std::move(out), {a}, [a](NodeT<T>& n) {
    if (!a->needs_grad) return;
    auto& g = a->ensure_grad();
    T gy = n.grad.data[0];
    for (auto& v : g.data) v += gy;
  });
}

template <class T>
VarT<T> mean_all(const VarT<T>& a) {
  int64_t count = a->value.numel();
  if (count == 0) throw DimensionError("mean_all: empty tensor");
  double acc = 0.0;
  for (T v : a->value.data) acc += double(v);
  TensorT<T> out({1});
  out.data[0] = T(acc / double(count));
  return make_op<T>(std::move(out), {a}, [a, count](NodeT<T>& n) {
    if (!a->needs_grad) return;
    auto& g = a->ensure_grad();
    T gy = T(double(n.grad.data[0]) / double(count));
    for (auto& v : g.data) v += gy;
  });
}

template <class T>
VarT<T> l1(const VarT<T>& a, const VarT<T>& b) {
  check_same_shape(a, b, "l1");
  int64_t count = a->value.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < count; ++i) acc += std::abs(double(a->value.data[size_t(i)]) - double(b->value.data[size_t(i)]));
  TensorT<T> out({1});
  out.data[0] = T(acc / double(count));
  return make_op<T>(std::move(out), {a, b}, [a, b, count](NodeT<T>& n) {
    T gy = T(double(n.grad.data[0]) / double(count));
    for (int64_t i = 0; i < count; ++i) {
      T d = a->value.data[size_t(i)] - b->value.data[size_t(i)];
      T s = d > T(0) ? gy : (d < T(0) ? -gy : T(0));
      if (a->needs_grad) a->ensure_grad().data[size_t(i)] += s;
      if (b->needs_grad) b->ensure_grad().data[size_t(i)] -= s;
    }
  });
}

// -- spatial statistics ---------------------------------------------------------

template <class T>
VarT<T> mean_spatial(const VarT<T>& a) {
  check_rank4(a, "mean_spatial");
  int64_t B = a->value.dim(0), C = a->value.dim(1), HW = a->value.dim(2) * a->value.dim(3);
  TensorT<T> out({B, C});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* p = a->value.ptr() + bc * HW;
    double acc = 0.0;
    for (int64_t i = 0; i < HW; ++i) acc += double(p[i]);
    out.data[size_t(bc)] = T(acc / double(HW));
  }
  return make_op<T>(std::move(out), {a}, [a, B, C, HW](NodeT<T>& n) {
    if (!a->needs_grad) return;
    auto& g = a->ensure_grad();
    for (int64_t bc = 0; bc < B * C; ++bc) {
      T gy = T(double(n.grad.data[size_t(bc)]) / double(HW));
      T* p = g.ptr() + bc * HW;
      for (int64_t i = 0; i < HW; ++i) p[i] += gy;
    }
  });
}

template <class T>
VarT<T> bc_sub_spatial(const VarT<T>& a, const VarT<T>& m) {
  check_rank4(a, "bc_sub_spatial");
  int64_t B = a->value.dim(0), C = a->value.dim(1), HW = a->value.dim(2) * a->value.dim(3);
  if (m->value.rank() != 2 || m->value.dim(0) != B || m->value.dim(1) != C)
    throw DimensionError("bc_sub_spatial: mean shape " + shape_str(m->value.shape) + " does not match " +
                         shape_str(a->value.shape));
  TensorT<T> out(a->value.shape);
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* p = a->value.ptr() + bc * HW;
    T mv = m->value.data[size_t(bc)];
    T* q = out.ptr() + bc * HW;
    for (int64_t i = 0; i < HW; ++i) q[i] = p[i] - mv;
  }
  return make_op<T>(std::move(out), {a, m}, [a, m, B, C, HW](NodeT<T>& n) {
    if (a->needs_grad) {
      auto& g = a->ensure_grad();
      for (int64_t i = 0; i < n.value.numel(); ++i) g.data[size_t(i)] += n.grad.data[size_t(i)];
    }
    if (m->needs_grad) {
      auto& g = m->ensure_grad();
      for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* p = n.grad.ptr() + bc * HW;
        double acc = 0.0;
        for (int64_t i = 0; i < HW; ++i) acc += double(p[i]);
        g.data[size_t(bc)] -= T(acc);
      }
    }
  });
}

// -- structure ------------------------------------------------------------------

template <class T>
VarT<T> slice_channels(const VarT<T>& x, int64_t c0, int64_t c1) {
  check_rank4(x, "slice_channels");
  int64_t B = x->value.dim(0), C = x->value.dim(1), HW = x->value.dim(2) * x->value.dim(3);
  if (c0 < 0 || c1 > C || c0 >= c1) throw DimensionError("slice_channels: bad range");
  int64_t Cs = c1 - c0;
  TensorT<T> out({B, Cs, x->value.dim(2), x->value.dim(3)});
  for (int64_t b = 0; b < B; ++b)
    std::copy(x->value.ptr() + (b * C + c0) * HW, x->value.ptr() + (b * C + c1) * HW, out.ptr() + b * Cs * HW);
  return make_op<T>(std::move(out), {x}, [x, B, C, HW, c0, Cs](NodeT<T>& n) {
    if (!x->needs_grad) return;
    auto& g = x->ensure_grad();
    for (int64_t b = 0; b < B; ++b) {
      const T* src = n.grad.ptr() + b * Cs * HW;
      T* dst = g.ptr() + (b * C + c0) * HW;
      for (int64_t i = 0; i < Cs * HW; ++i) dst[i] += src[i];
    }
  });
}

template <class T>
VarT<T> slice_batch(const VarT<T>& x, int64_t b0, int64_t b1) {
  check_rank4(x, "slice_batch");
  int64_t B = x->value.dim(0), CHW = x->value.dim(1) * x->value.dim(2) * x->value.dim(3);
  if (b0 < 0 || b1 > B || b0 >= b1) throw DimensionError("slice_batch: bad range");
  TensorT<T> out({b1 - b0, x->value.dim(1), x->value.dim(2), x->value.dim(3)});
  std::copy(x->value.ptr() + b0 * CHW, x->value.ptr() + b1 * CHW, out.ptr());
  return make_op<T>(std::move(out), {x}, [x, b0, CHW](NodeT<T>& n) {
    if (!x->needs_grad) return;
    auto& g = x->ensure_grad();
    T* dst = g.ptr() + b0 * CHW;
    for (int64_t i = 0; i < n.value.numel(); ++i) dst[i] += n.grad.data[size_t(i)];
  });
}

template <class T>
TensorT<T> tensor_slice_batch(const TensorT<T>& x, int64_t b0, int64_t b1) {
  if (x.rank() != 4) throw DimensionError("tensor_slice_batch: expected rank-4");
  int64_t B = x.dim(0), CHW = x.dim(1) * x.dim(2) * x.dim(3);
  if (b0 < 0 || b1 > B || b0 >= b1) throw DimensionError("tensor_slice_batch: bad range");
  TensorT<T> out({b1 - b0, x.dim(1), x.dim(2), x.dim(3)});
  std::copy(x.ptr() + b0 * CHW, x.ptr() + b1 * CHW, out.ptr());
  return out;
}

template <class T>
VarT<T> upsample_nearest2(const VarT<T>& x) {
  check_rank4(x, "upsample_nearest2");
  int64_t B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  TensorT<T> out({B, C, 2 * H, 2 * W});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* src = x->value.ptr() + bc * H * W;
    T* dst = out.ptr() + bc * 4 * H * W;
    for (int64_t y = 0; y < H; ++y) {
      T* r0 = dst + (2 * y) * 2 * W;
      for (int64_t xx = 0; xx < W; ++xx) {
        r0[2 * xx] = r0[2 * xx + 1] = src[y * W + xx];
      }
      std::copy(r0, r0 + 2 * W, r0 + 2 * W);
    }
  }
  return make_op<T>(std::move(out), {x}, [x, B, C, H, W](NodeT<T>& n) {
    if (!x->needs_grad) return;
    auto& g = x->ensure_grad();
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const T* src = n.grad.ptr() + bc * 4 * H * W;
      T* dst = g.ptr() + bc * H * W;
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xx = 0; xx < W; ++xx)
          dst[y * W + xx] += src[(2 * y) * 2 * W + 2 * xx] + src[(2 * y) * 2 * W + 2 * xx + 1] +
                             src[(2 * y + 1) * 2 * W + 2 * xx] + src[(2 * y + 1) * 2 * W + 2 * xx + 1];
    }
  });
}

template <class T>
VarT<T> avgpool2(const VarT<T>& x) {
  check_rank4(x, "avgpool2");
  int64_t B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (H % 2 || W % 2) throw DimensionError("avgpool2: odd spatial size " + shape_str(x->value.shape));
  int64_t OH = H / 2, OW = W / 2;
  TensorT<T> out({B, C, OH, OW});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* src = x->value.ptr() + bc * H * W;
    T* dst = out.ptr() + bc * OH * OW;
    for (int64_t y = 0; y < OH; ++y)
      for (int64_t xx = 0; xx < OW; ++xx)
        dst[y * OW + xx] = T(0.25) * (src[2 * y * W + 2 * xx] + src[2 * y * W + 2 * xx + 1] +
                                      src[(2 * y + 1) * W + 2 * xx] + src[(2 * y + 1) * W + 2 * xx + 1]);
  }
  return make_op<T>(std::move(out), {x}, [x, B, C, H, W, OH, OW](NodeT<T>& n) {
    if (!x->needs_grad) return;
    auto& g = x->ensure_grad();
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const T* src = n.grad.ptr() + bc * OH * OW;
      T* dst = g.ptr() + bc * H * W;
      for (int64_t y = 0; y < OH; ++y)
        for (int64_t xx = 0; xx < OW; ++xx) {
          T gv = T(0.25) * src[y * OW + xx];
          dst[2 * y * W + 2 * xx] += gv;
          dst[2 * y * W + 2 * xx + 1] += gv;
          dst[(2 * y + 1) * W + 2 * xx] += gv;
          dst[(2 * y + 1) * W + 2 * xx + 1] += gv;
        }
    }
  });
}

// -- conv2d ---------------------------------------------------------------------

template <class T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b, int stride, int pad) {
  check_rank4(x, "conv2d");
  if (w->value.rank() != 4) throw DimensionError("conv2d: weight must be rank-4");
  int64_t B = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  int64_t Cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (w->value.dim(1) != Cin)
    throw DimensionError("conv2d: weight expects " + std::to_string(w->value.dim(1)) + " input channels, got " +
                         std::to_string(Cin));
  if (b && b->value.numel() != Cout) throw DimensionError("conv2d: bias size mismatch");
  int64_t OH = (H + 2 * pad - kh) / stride + 1;
  int64_t OW = (W + 2 * pad - kw) / stride + 1;
  if (OH < 1 || OW < 1) throw DimensionError("conv2d: output would be empty for input " + shape_str(x->value.shape));
  int64_t K = Cin * kh * kw, OHW = OH * OW;

  TensorT<T> out({B, Cout, OH, OW});
  {
    std::vector<T> col(size_t(K * OHW));
    MapC<T> Wm(w->value.ptr(), Cout, K);
    for (int64_t f = 0; f < B; ++f) {
      im2col(x->value.ptr() + f * Cin * H * W, int(Cin), int(H), int(W), int(kh), int(kw), stride, pad, int(OH),
             int(OW), col.data());
      MapC<T> Cm(col.data(), K, OHW);
      MapM<T> Ym(out.ptr() + f * Cout * OHW, Cout, OHW);
      Ym.noalias() = Wm * Cm;
      if (b)
        for (int64_t c = 0; c < Cout; ++c) Ym.row(c).array() += b->value.data[size_t(c)];
    }
  }

  std::vector<VarT<T>> parents = b ? std::vector<VarT<T>>{x, w, b} : std::vector<VarT<T>>{x, w};
  return make_op<T>(std::move(out), std::move(parents),
                    [x, w, b, stride, pad, B, Cin, H, W, Cout, kh, kw, OH, OW, K, OHW](NodeT<T>& n) {
                      std::vector<T> col(size_t(K * OHW));
                      std::vector<T> dcol;
                      if (x->needs_grad) dcol.resize(size_t(K * OHW));
                      MapC<T> Wm(w->value.ptr(), Cout, K);
                      for (int64_t f = 0; f < B; ++f) {
                        MapC<T> dYm(n.grad.ptr() + f * Cout * OHW, Cout, OHW);
                        if (w->needs_grad || x->needs_grad)
                          im2col(x->value.ptr() + f * Cin * H * W, int(Cin), int(H), int(W), int(kh), int(kw), stride,
                                 pad, int(OH), int(OW), col.data());
                        if (w->needs_grad) {
                          MapM<T> dWm(w->ensure_grad().ptr(), Cout, K);
                          MapC<T> Cm(col.data(), K, OHW);
                          dWm.noalias() += dYm * Cm.transpose();
                        }
                        if (b && b->needs_grad) {
                          auto& gb = b->ensure_grad();
                          for (int64_t c = 0; c < Cout; ++c) {
                            double acc = 0.0;
                            const T* row = n.grad.ptr() + (f * Cout + c) * OHW;
                            for (int64_t i = 0; i < OHW; ++i) acc += double(row[i]);
                            gb.data[size_t(c)] += T(acc);
                          }
                        }
                        if (x->needs_grad) {
                          MapM<T> dCm(dcol.data(), K, OHW);
                          dCm.noalias() = Wm.transpose() * dYm;
                          col2im_add(dcol.data(), int(Cin), int(H), int(W), int(kh), int(kw), stride, pad, int(OH),
                                     int(OW), x->ensure_grad().ptr() + f * Cin * H * W);
                        }
                      }
                    });
}

// -- conv1d over frames -----------------------------------------------------------

template <class T>
VarT<T> conv1d_time(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b, int frames) {
  check_rank4(x, "conv1d_time");
  if (w->value.rank() != 3) throw DimensionError("conv1d_time: weight must be rank-3 [Cout,Cin,k]");
  int64_t B = x->value.dim(0), Cin = x->value.dim(1), HW = x->value.dim(2) * x->value.dim(3);
  int64_t Cout = w->value.dim(0), k = w->value.dim(2);
  if (w->value.dim(1) != Cin) throw DimensionError("conv1d_time: channel mismatch");
  if (k % 2 == 0) throw DimensionError("conv1d_time: kernel must be odd");
  if (frames < 1 || B % frames != 0) throw DimensionError("conv1d_time: batch not divisible into clips of " + std::to_string(frames));
  if (b && b->value.numel() != Cout) throw DimensionError("conv1d_time: bias size mismatch");
  int64_t N = B / frames, r = k / 2;

  // per-tap weight matrices are tiny; materialize them densely for GEMM
  auto tap = [Cout, Cin, k](const TensorT<T>& wt, int64_t ki, MatR<T>& m) {
    m.resize(Cout, Cin);
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t ci = 0; ci < Cin; ++ci) m(co, ci) = wt.data[size_t((co * Cin + ci) * k + ki)];
  };

  TensorT<T> out({B, Cout, x->value.dim(2), x->value.dim(3)});
  {
    std::vector<MatR<T>> wk(static_cast<size_t>(k));
    for (int64_t ki = 0; ki < k; ++ki) tap(w->value, ki, wk[size_t(ki)]);
    for (int64_t nci = 0; nci < N; ++nci) {
      for (int64_t t = 0; t < frames; ++t) {
        MapM<T> Ym(out.ptr() + ((nci * frames + t) * Cout) * HW, Cout, HW);
        if (b) {
          for (int64_t c = 0; c < Cout; ++c) Ym.row(c).setConstant(b->value.data[size_t(c)]);
        } else {
          Ym.setZero();
        }
        for (int64_t ki = 0; ki < k; ++ki) {
          int64_t ts = std::clamp(t + ki - r, int64_t(0), int64_t(frames - 1));  // replicate padding
          MapC<T> Xm(x->value.ptr() + ((nci * frames + ts) * Cin) * HW, Cin, HW);
          Ym.noalias() += wk[size_t(ki)] * Xm;
        }
      }
    }
  }

  std::vector<VarT<T>> parents = b ? std::vector<VarT<T>>{x, w, b} : std::vector<VarT<T>>{x, w};
  return make_op<T>(std::move(out), std::move(parents), [x, w, b, frames, Cin, Cout, k, HW, N, r, tap](NodeT<T>& n) {
    std::vector<MatR<T>> wk(static_cast<size_t>(k));
    for (int64_t ki = 0; ki < k; ++ki) tap(w->value, ki, wk[size_t(ki)]);
    std::vector<MatR<T>> dwk;
    if (w->needs_grad) {
      dwk.resize(size_t(k));
      for (auto& m : dwk) {
        m.resize(Cout, Cin);
        m.setZero();
      }
    }
    for (int64_t nci = 0; nci < N; ++nci) {
      for (int64_t t = 0; t < frames; ++t) {
        MapC<T> dYm(n.grad.ptr() + ((nci * frames + t) * Cout) * HW, Cout, HW);
        if (b && b->needs_grad) {
          auto& gb = b->ensure_grad();
          for (int64_t c = 0; c < Cout; ++c) {
            double acc = 0.0;
            const T* row = n.grad.ptr() + ((nci * frames + t) * Cout + c) * HW;
            for (int64_t i = 0; i < HW; ++i) acc += double(row[i]);
            gb.data[size_t(c)] += T(acc);
          }
        }
        for (int64_t ki = 0; ki < k; ++ki) {
          int64_t ts = std::clamp(t + ki - r, int64_t(0), int64_t(frames - 1));
          if (w->needs_grad) {
            MapC<T> Xm(x->value.ptr() + ((nci * frames + ts) * Cin) * HW, Cin, HW);
            dwk[size_t(ki)].noalias() += dYm * Xm.transpose();
          }
          if (x->needs_grad) {
            MapM<T> dXm(x->ensure_grad().ptr() + ((nci * frames + ts) * Cin) * HW, Cin, HW);
            dXm.noalias() += wk[size_t(ki)].transpose() * dYm;
          }
        }
      }
    }
    if (w->needs_grad) {
      auto& gw = w->ensure_grad();
      for (int64_t co = 0; co < Cout; ++co)
        for (int64_t ci = 0; ci < Cin; ++ci)
          for (int64_t ki = 0; ki < k; ++ki) gw.data[size_t((co * Cin + ci) * k + ki)] += dwk[size_t(ki)](co, ci);
    }
  });
}

// -- group norm -------------------------------------------------------------------

template <class T>
VarT<T> group_norm(const VarT<T>& x, const VarT<T>& gamma, const VarT<T>& beta, int groups, double eps) {
  check_rank4(x, "group_norm");
  int64_t B = x->value.dim(0), C = x->value.dim(1), HW = x->value.dim(2) * x->value.dim(3);
  if (groups < 1 || C % groups != 0)
    throw DimensionError("group_norm: " + std::to_string(groups) + " groups do not divide " + std::to_string(C) + " channels");
  if (gamma->value.numel() != C || beta->value.numel() != C) throw DimensionError("group_norm: affine size mismatch");
  int64_t Cg = C / groups, Ng = Cg * HW;

  auto stats = std::make_shared<std::vector<double>>(size_t(B * groups * 2));  // [mean, inv_std] pairs
  TensorT<T> out(x->value.shape);
  for (int64_t bg = 0; bg < B * groups; ++bg) {
    int64_t bi = bg / groups, gi = bg % groups;
    const T* src = x->value.ptr() + (bi * C + gi * Cg) * HW;
    double m = 0.0;
    for (int64_t i = 0; i < Ng; ++i) m += double(src[i]);
    m /= double(Ng);
    double v = 0.0;
    for (int64_t i = 0; i < Ng; ++i) {
      double d = double(src[i]) - m;
      v += d * d;
    }
    v /= double(Ng);
    double inv = 1.0 / std::sqrt(v + eps);
    (*stats)[size_t(bg * 2)] = m;
    (*stats)[size_t(bg * 2 + 1)] = inv;
    T* dst = out.ptr() + (bi * C + gi * Cg) * HW;
    for (int64_t cc = 0; cc < Cg; ++cc) {
      int64_t c = gi * Cg + cc;
      T gm = gamma->value.data[size_t(c)], bt = beta->value.data[size_t(c)];
      const T* s = src + cc * HW;
      T* d = dst + cc * HW;
      for (int64_t i = 0; i < HW; ++i) d[i] = T((double(s[i]) - m) * inv) * gm + bt;
    }
  }

  return make_op<T>(std::move(out), {x, gamma, beta}, [x, gamma, beta, stats, B, C, HW, groups, Cg, Ng](NodeT<T>& n) {
    for (int64_t bg = 0; bg < B * groups; ++bg) {
      int64_t bi = bg / groups, gi = bg % groups;
      double m = (*stats)[size_t(bg * 2)], inv = (*stats)[size_t(bg * 2 + 1)];
      const T* src = x->value.ptr() + (bi * C + gi * Cg) * HW;
      const T* gsrc = n.grad.ptr() + (bi * C + gi * Cg) * HW;
      // accumulate the two group-wide sums needed by the normalization gradient
      double s1 = 0.0, s2 = 0.0;
      for (int64_t cc = 0; cc < Cg; ++cc) {
        double gm = double(gamma->value.data[size_t(gi * Cg + cc)]);
        const T* gp = gsrc + cc * HW;
        const T* xp = src + cc * HW;
        for (int64_t i = 0; i < HW; ++i) {
          double dyg = double(gp[i]) * gm;
          s1 += dyg;
          s2 += dyg * (double(xp[i]) - m) * inv;
        }
      }
      if (x->needs_grad) {
        auto& gx = x->ensure_grad();
        T* dst = gx.ptr() + (bi * C + gi * Cg) * HW;
        for (int64_t cc = 0; cc < Cg; ++cc) {
          double gm = double(gamma->value.data[size_t(gi * Cg + cc)]);
          const T* gp = gsrc + cc * HW;
          const T* xp = src + cc * HW;
          T* dp = dst + cc * HW;
          for (int64_t i = 0; i < HW; ++i) {
            double xhat = (double(xp[i]) - m) * inv;
            dp[i] += T(inv * (double(gp[i]) * gm - (s1 + xhat * s2) / double(Ng)));
          }
        }
      }
      if (gamma->needs_grad || beta->needs_grad) {
        for (int64_t cc = 0; cc < Cg; ++cc) {
          int64_t c = gi * Cg + cc;
          const T* gp = gsrc + cc * HW;
          const T* xp = src + cc * HW;
          double dg = 0.0, db = 0.0;
          for (int64_t i = 0; i < HW; ++i) {
            dg += double(gp[i]) * (double(xp[i]) - m) * inv;
            db += double(gp[i]);
          }
          if (gamma->needs_grad) gamma->ensure_grad().data[size_t(c)] += T(dg);
          if (beta->needs_grad) beta->ensure_grad().data[size_t(c)] += T(db);
        }
      }
    }
  });
}

// -- temporal attention --------------------------------------------------------

template <class T>
VarT<T> temporal_attention(const VarT<T>& x, const VarT<T>& wq, const VarT<T>& wk, const VarT<T>& wv,
                           const VarT<T>& wo, int frames) {
  check_rank4(x, "temporal_attention");
  int64_t B = x->value.dim(0), C = x->value.dim(1), HW = x->value.dim(2) * x->value.dim(3);
  if (frames < 1 || B % frames != 0) throw DimensionError("temporal_attention: batch not divisible into clips");
  for (const auto& wp : {wq, wk, wv, wo})
    if (wp->value.rank() != 2 || wp->value.dim(0) != C || wp->value.dim(1) != C)
      throw DimensionError("temporal_attention: projection weights must be [C,C]");
  int64_t N = B / frames, Tn = frames;
  double inv_sqrt_c = 1.0 / std::sqrt(double(C));

  MapC<T> Wq(wq->value.ptr(), C, C), Wk(wk->value.ptr(), C, C), Wv(wv->value.ptr(), C, C), Wo(wo->value.ptr(), C, C);

  TensorT<T> out(x->value.shape);
  std::copy(x->value.data.begin(), x->value.data.end(), out.data.begin());

  auto gather = [Tn, C, HW](const TensorT<T>& src, int64_t nci, int64_t p, MatR<T>& X) {
    X.resize(Tn, C);
    for (int64_t t = 0; t < Tn; ++t)
      for (int64_t c = 0; c < C; ++c) X(t, c) = src.data[size_t(((nci * Tn + t) * C + c) * HW + p)];
  };

  {
    MatR<T> X, Q, Kt, V, S, A, Y;
    for (int64_t nci = 0; nci < N; ++nci) {
      for (int64_t p = 0; p < HW; ++p) {
        gather(x->value, nci, p, X);
        Q.noalias() = X * Wq.transpose();
        Kt.noalias() = X * Wk.transpose();
        V.noalias() = X * Wv.transpose();
        S.noalias() = Q * Kt.transpose();
        S *= T(inv_sqrt_c);
        A.resize(Tn, Tn);
        for (int64_t t = 0; t < Tn; ++t) {
          double mx = -1e300;
          for (int64_t u = 0; u < Tn; ++u) mx = std::max(mx, double(S(t, u)));
          double den = 0.0;
          for (int64_t u = 0; u < Tn; ++u) den += std::exp(double(S(t, u)) - mx);
          for (int64_t u = 0; u < Tn; ++u) A(t, u) = T(std::exp(double(S(t, u)) - mx) / den);
        }
        Y.noalias() = A * V;
        // residual write-back: out += Y * Wo^T
        for (int64_t t = 0; t < Tn; ++t)
          for (int64_t c = 0; c < C; ++c) {
            T acc = T(0);
            for (int64_t j = 0; j < C; ++j) acc += Y(t, j) * Wo(c, j);
            out.data[size_t(((nci * Tn + t) * C + c) * HW + p)] += acc;
          }
      }
    }
  }

  return make_op<T>(
      std::move(out), {x, wq, wk, wv, wo}, [x, wq, wk, wv, wo, B, C, HW, N, Tn, inv_sqrt_c, gather](NodeT<T>& n) {
        (void)B;
        MapC<T> Wq(wq->value.ptr(), C, C), Wk(wk->value.ptr(), C, C), Wv(wv->value.ptr(), C, C),
            Wo(wo->value.ptr(), C, C);
        MatR<T> dWq = MatR<T>::Zero(C, C), dWk = MatR<T>::Zero(C, C), dWv = MatR<T>::Zero(C, C),
                dWo = MatR<T>::Zero(C, C);
        MatR<T> X, Q, Kt, V, S, A, Y, dOut, dY, dA, dS, dQ, dKt, dV, dX;
        for (int64_t nci = 0; nci < N; ++nci) {
          for (int64_t p = 0; p < HW; ++p) {
            gather(x->value, nci, p, X);
            gather(n.grad, nci, p, dOut);
            Q.noalias() = X * Wq.transpose();
            Kt.noalias() = X * Wk.transpose();
            V.noalias() = X * Wv.transpose();
            S.noalias() = Q * Kt.transpose();
            S *= T(inv_sqrt_c);
            A.resize(Tn, Tn);
            for (int64_t t = 0; t < Tn; ++t) {
              double mx = -1e300;
              for (int64_t u = 0; u < Tn; ++u) mx = std::max(mx, double(S(t, u)));
              double den = 0.0;
              for (int64_t u = 0; u < Tn; ++u) den += std::exp(double(S(t, u)) - mx);
              for (int64_t u = 0; u < Tn; ++u) A(t, u) = T(std::exp(double(S(t, u)) - mx) / den);
            }
            Y.noalias() = A * V;
            dWo.noalias() += dOut.transpose() * Y;
            dY.noalias() = dOut * Wo;
            dA.noalias() = dY * V.transpose();
            dV.noalias() = A.transpose() * dY;
            dS.resize(Tn, Tn);
            for (int64_t t = 0; t < Tn; ++t) {
              double dot = 0.0;
              for (int64_t u = 0; u < Tn; ++u) dot += double(dA(t, u)) * double(A(t, u));
              for (int64_t u = 0; u < Tn; ++u) dS(t, u) = T((double(dA(t, u)) - dot) * double(A(t, u)) * inv_sqrt_c);
            }
            dQ.noalias() = dS * Kt;
            dKt.noalias() = dS.transpose() * Q;
            dWq.noalias() += dQ.transpose() * X;
            dWk.noalias() += dKt.transpose() * X;
            dWv.noalias() += dV.transpose() * X;
            if (x->needs_grad) {
              dX.noalias() = dQ * Wq + dKt * Wk + dV * Wv;
              dX += dOut;  // residual branch
              auto& gx = x->ensure_grad();
              for (int64_t t = 0; t < Tn; ++t)
                for (int64_t c = 0; c < C; ++c) gx.data[size_t(((nci * Tn + t) * C + c) * HW + p)] += dX(t, c);
            }
          }
        }
        auto flush = [&](const VarT<T>& wvar, const MatR<T>& dm) {
          if (!wvar->needs_grad) return;
          auto& g = wvar->ensure_grad();
          for (int64_t i = 0; i < C; ++i)
            for (int64_t j = 0; j < C; ++j) g.data[size_t(i * C + j)] += dm(i, j);
        };
        flush(wq, dWq);
        flush(wk, dWk);
        flush(wv, dWv);
        flush(wo, dWo);
      });
}

// -- explicit instantiation ------------------------------------------------------

#define VSR_INSTANTIATE_OPS(T)                                                                              \
  template VarT<T> add<T>(const VarT<T>&, const VarT<T>&);                                                  \
  template VarT<T> sub<T>(const VarT<T>&, const VarT<T>&);                                                  \
  template VarT<T> mul<T>(const VarT<T>&, const VarT<T>&);                                                  \
  template VarT<T> div_<T>(const VarT<T>&, const VarT<T>&);                                                 \
  template VarT<T> neg<T>(const VarT<T>&);                                                                  \
  template VarT<T> abs_<T>(const VarT<T>&);                                                                 \
  template VarT<T> scale<T>(const VarT<T>&, double);                                                        \
  template VarT<T> add_scalar<T>(const VarT<T>&, double);                                                   \
  template VarT<T> relu<T>(const VarT<T>&);                                                                 \
  template VarT<T> leaky_relu<T>(const VarT<T>&, double);                                                   \
  template VarT<T> softplus<T>(const VarT<T>&);                                                             \
  template VarT<T> sum_all<T>(const VarT<T>&);                                                              \
  template VarT<T> mean_all<T>(const VarT<T>&);                                                             \
  template VarT<T> l1<T>(const VarT<T>&, const VarT<T>&);                                                   \
  template VarT<T> mean_spatial<T>(const VarT<T>&);                                                         \
  template VarT<T> bc_sub_spatial<T>(const VarT<T>&, const VarT<T>&);                                       \
  template VarT<T> slice_channels<T>(const VarT<T>&, int64_t, int64_t);                                     \
  template VarT<T> slice_batch<T>(const VarT<T>&, int64_t, int64_t);                                        \
  template TensorT<T> tensor_slice_batch<T>(const TensorT<T>&, int64_t, int64_t);                           \
  template VarT<T> upsample_nearest2<T>(const VarT<T>&);                                                    \
  template VarT<T> avgpool2<T>(const VarT<T>&);                                                             \
  template VarT<T> conv2d<T>(const VarT<T>&, const VarT<T>&, const VarT<T>&, int, int);                     \
  template VarT<T> conv1d_time<T>(const VarT<T>&, const VarT<T>&, const VarT<T>&, int);                     \
  template VarT<T> group_norm<T>(const VarT<T>&, const VarT<T>&, const VarT<T>&, int, double);              \
  template VarT<T> temporal_attention<T>(const VarT<T>&, const VarT<T>&, const VarT<T>&, const VarT<T>&,   \
                                         const VarT<T>&, int);

VSR_INSTANTIATE_OPS(float)
VSR_INSTANTIATE_OPS(double)

}  // namespace vsr
