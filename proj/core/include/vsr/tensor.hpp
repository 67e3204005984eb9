// Dense row-major tensor with an explicit shape. The scalar type is a
// template parameter: training state runs in float (and serializes as f32),
// while gradient oracles instantiate double for clean finite differences.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsr/errors.hpp"

namespace vsr {

template <class T>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> s) : shape(std::move(s)), data(size_t(numel_of(shape)), T(0)) {}
  TensorT(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (int64_t(data.size()) != numel_of(shape)) throw DimensionError("tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  int64_t numel() const { return int64_t(data.size()); }
  int rank() const { return int(shape.size()); }
  int64_t dim(int i) const { return shape[size_t(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }

  static TensorT full(std::vector<int64_t> s, T v) {
    TensorT t(std::move(s));
    for (T& x : t.data) x = v;
    return t;
  }
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace vsr
