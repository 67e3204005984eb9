// Differentiable op library. All 2D ops treat the batch axis as independent
// frames ([B,C,H,W] with B = clips x frames); the only temporal mixing happens
// in conv1d_time and temporal_attention, which take frames_per_clip and work
// on groups of consecutive frames. Instantiated for float and double.
#pragma once

#include "vsr/autograd.hpp"

namespace vsr {

// -- elementwise ------------------------------------------------------------
template <class T> VarT<T> add(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> sub(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> mul(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> div_(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> neg(const VarT<T>& a);
template <class T> VarT<T> abs_(const VarT<T>& a);
template <class T> VarT<T> scale(const VarT<T>& a, double s);
template <class T> VarT<T> add_scalar(const VarT<T>& a, double s);
template <class T> VarT<T> relu(const VarT<T>& a);
template <class T> VarT<T> leaky_relu(const VarT<T>& a, double slope);
template <class T> VarT<T> softplus(const VarT<T>& a);

// -- reductions (double accumulation, scalar [1] results) --------------------
template <class T> VarT<T> sum_all(const VarT<T>& a);
template <class T> VarT<T> mean_all(const VarT<T>& a);
// mean |a-b|; exactly zero for bitwise-identical inputs
template <class T> VarT<T> l1(const VarT<T>& a, const VarT<T>& b);

// -- spatial statistics ([B,C,H,W] -> [B,C]) ---------------------------------
template <class T> VarT<T> mean_spatial(const VarT<T>& a);
// a[b,c,h,w] - m[b,c]; used to center features before moment computation
template <class T> VarT<T> bc_sub_spatial(const VarT<T>& a, const VarT<T>& m);

// -- structure --------------------------------------------------------------
template <class T> VarT<T> slice_channels(const VarT<T>& x, int64_t c0, int64_t c1);
template <class T> VarT<T> slice_batch(const VarT<T>& x, int64_t b0, int64_t b1);
template <class T> VarT<T> upsample_nearest2(const VarT<T>& x);
template <class T> VarT<T> avgpool2(const VarT<T>& x);

// -- convolutions -----------------------------------------------------------
// x [B,Cin,H,W], w [Cout,Cin,kh,kw], optional bias [Cout]; zero padding
template <class T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b, int stride, int pad);

// 1D convolution along the frame axis at every spatial location.
// x [B,C,H,W] with B = N*frames, w [Cout,Cin,k] (k odd), replicate padding in
// time within each clip.
template <class T>
VarT<T> conv1d_time(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b, int frames);

// -- normalization ----------------------------------------------------------
// Per-frame group normalization: statistics over (C/groups, H, W) for each
// (frame, group), so 2D paths stay frame-independent.
template <class T>
VarT<T> group_norm(const VarT<T>& x, const VarT<T>& gamma, const VarT<T>& beta, int groups, double eps);

// -- attention --------------------------------------------------------------
// Single-head self-attention over the frame axis at each spatial location:
// out = x + softmax(QK^T/sqrt(C)) V Wo^T, with Q/K/V = x Wq^T / Wk^T / Wv^T.
// All weights are [C,C]; a zero Wo makes the block an exact identity.
template <class T>
VarT<T> temporal_attention(const VarT<T>& x, const VarT<T>& wq, const VarT<T>& wk, const VarT<T>& wv,
                           const VarT<T>& wo, int frames);

// -- non-autograd tensor helpers ---------------------------------------------
template <class T> TensorT<T> tensor_slice_batch(const TensorT<T>& x, int64_t b0, int64_t b1);

}  // namespace vsr
