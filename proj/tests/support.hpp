#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flimsr/image.hpp"
#include "flimsr/nn/tensor.hpp"
#include "flimsr/rng.hpp"

namespace flimsr::test {

inline FlimImage random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed, double lo = 0.0,
                              double hi = 1.0) {
  Rng rng(seed);
  std::vector<float> data(c * h * w);
  for (auto& v : data) v = static_cast<float>(rng.uniform(lo, hi));
  std::vector<ChannelDesc> channels;
  if (c == 6) {
    channels = standard_channels();
  } else {
    for (std::size_t i = 0; i < c; ++i) channels.push_back({"LT" + std::to_string(i + 1), ChannelKind::lifetime});
  }
  return FlimImage(channels, h, w, FlimImage::kHrPixelSizeUm, std::move(data));
}

template <class T>
nn::Tensor<T> random_tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed,
                            double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  nn::Tensor<T> t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Relative error used by the gradient checks: |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("flimsr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace flimsr::test
