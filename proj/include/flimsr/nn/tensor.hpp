#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace flimsr::nn {

/// Dense NCHW activation tensor.
template <class T>
struct Tensor {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return h * w; }
  std::size_t sample_size() const { return c * h * w; }

  T* sample(std::size_t i) { return data.data() + i * sample_size(); }
  const T* sample(std::size_t i) const { return data.data() + i * sample_size(); }
  T* channel(std::size_t i, std::size_t ch) { return sample(i) + ch * plane(); }
  const T* channel(std::size_t i, std::size_t ch) const { return sample(i) + ch * plane(); }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  std::string shape_string() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }
};

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  }
}

}  // namespace flimsr::nn
