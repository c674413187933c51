#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "unetkit/errors.hpp"

namespace unetkit {

// Rank-4 tensor in NCHW layout, row-major, contiguous. The gradient buffer is
// allocated on demand and accumulates across backward passes until
// zero_grad(); that allows parameters shared between graph positions.
template <typename T>
struct BasicTensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;
  std::vector<T> grad;  // empty, or exactly data.size()

  BasicTensor() = default;

  BasicTensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
    if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1) {
      throw DimensionError("tensor dims must all be >= 1, got (" + std::to_string(n_) + ", " +
                           std::to_string(c_) + ", " + std::to_string(h_) + ", " +
                           std::to_string(w_) + ")");
    }
    data.assign(size(), T(0));
  }

  BasicTensor(int n_, int c_, int h_, int w_, std::vector<T> values)
      : BasicTensor(n_, c_, h_, w_) {
    if (values.size() != size()) {
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " != n*c*h*w = " + std::to_string(size()));
    }
    data = std::move(values);
  }

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * static_cast<std::size_t>(h) * w;
  }

  std::size_t offset(int ni, int ci, int yi, int xi) const {
    return ((static_cast<std::size_t>(ni) * c + ci) * h + yi) * w + xi;
  }

  T& at(int ni, int ci, int yi, int xi) { return data[offset(ni, ci, yi, xi)]; }
  const T& at(int ni, int ci, int yi, int xi) const { return data[offset(ni, ci, yi, xi)]; }

  // Pointer to the (ni, ci) plane, h*w contiguous values.
  T* plane(int ni, int ci) { return data.data() + offset(ni, ci, 0, 0); }
  const T* plane(int ni, int ci) const { return data.data() + offset(ni, ci, 0, 0); }

  bool has_grad() const { return grad.size() == data.size() && !data.empty(); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const BasicTensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
           std::to_string(w) + ")";
  }
};

using Tensor = BasicTensor<float>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
  BasicTensor<To> out(t.n, t.c, t.h, t.w);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

}  // namespace unetkit
