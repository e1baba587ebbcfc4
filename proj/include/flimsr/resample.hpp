#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace flimsr {

/// One output coordinate of a half-pixel-aligned linear interpolation:
/// out[i] = (1 - frac) * in[lo] + frac * in[hi].
struct LerpTap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double frac = 0.0;
};

/// Source taps for resampling an axis of length in_len to out_len with
/// half-pixel centers: src = (dst + 0.5) * in_len / out_len - 0.5, clamped to the edge.
inline std::vector<LerpTap> lerp_taps(std::size_t in_len, std::size_t out_len) {
  std::vector<LerpTap> taps(out_len);
  const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_len - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[i].lo = lo;
    taps[i].hi = std::min(lo + 1, in_len - 1);
    taps[i].frac = src - static_cast<double>(lo);
  }
  return taps;
}

/// Separable bilinear resize of one row-major plane.
template <class T>
void bilinear_resize_plane(const T* in, std::size_t h, std::size_t w, T* out, std::size_t out_h,
                           std::size_t out_w) {
  const auto ty = lerp_taps(h, out_h);
  const auto tx = lerp_taps(w, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const T* r0 = in + ty[y].lo * w;
    const T* r1 = in + ty[y].hi * w;
    const T fy = static_cast<T>(ty[y].frac);
    for (std::size_t x = 0; x < out_w; ++x) {
      const T fx = static_cast<T>(tx[x].frac);
      const T top = r0[tx[x].lo] + fx * (r0[tx[x].hi] - r0[tx[x].lo]);
      const T bot = r1[tx[x].lo] + fx * (r1[tx[x].hi] - r1[tx[x].lo]);
      out[y * out_w + x] = top + fy * (bot - top);
    }
  }
}

/// Adjoint of bilinear_resize_plane: accumulates grad_out into grad_in.
template <class T>
void bilinear_resize_plane_adjoint(const T* grad_out, std::size_t out_h, std::size_t out_w, T* grad_in,
                                   std::size_t h, std::size_t w) {
  const auto ty = lerp_taps(h, out_h);
  const auto tx = lerp_taps(w, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const T fy = static_cast<T>(ty[y].frac);
    T* r0 = grad_in + ty[y].lo * w;
    T* r1 = grad_in + ty[y].hi * w;
    for (std::size_t x = 0; x < out_w; ++x) {
      const T g = grad_out[y * out_w + x];
      const T fx = static_cast<T>(tx[x].frac);
      const T g0 = g * (1 - fy);
      const T g1 = g * fy;
      r0[tx[x].lo] += g0 * (1 - fx);
      r0[tx[x].hi] += g0 * fx;
      r1[tx[x].lo] += g1 * (1 - fx);
      r1[tx[x].hi] += g1 * fx;
    }
  }
}

}  // namespace flimsr
