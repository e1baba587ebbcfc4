#include "flimsr/metrics.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace flimsr {

std::string to_string(SsimMode mode) { return mode == SsimMode::global ? "global" : "windowed"; }

SsimMode ssim_mode_from_string(const std::string& s) {
  if (s == "global") return SsimMode::global;
  if (s == "windowed") return SsimMode::windowed;
  throw std::invalid_argument("unknown SSIM mode: " + s);
}

namespace {

void require_same_size(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("shape mismatch");
  if (a.empty()) throw std::invalid_argument("empty input");
}

double ssim_from_moments(double mu_a, double mu_b, double var_a, double var_b, double cov,
                         const MetricConstants& k) {
  return ((2.0 * mu_a * mu_b + k.c1()) * (2.0 * cov + k.c2())) /
         ((mu_a * mu_a + mu_b * mu_b + k.c1()) * (var_a + var_b + k.c2()));
}

double ssim_global(std::span<const float> a, std::span<const float> b, const MetricConstants& k) {
  const auto n = static_cast<double>(a.size());
  double mu_a = 0.0, mu_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mu_a += a[i];
    mu_b += b[i];
  }
  mu_a /= n;
  mu_b /= n;
  double var_a = 0.0, var_b = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mu_a;
    const double db = b[i] - mu_b;
    var_a += da * da;
    var_b += db * db;
    cov += da * db;
  }
  return ssim_from_moments(mu_a, mu_b, var_a / n, var_b / n, cov / n, k);
}

double ssim_windowed(std::span<const float> a, std::span<const float> b, std::size_t h, std::size_t w,
                     const MetricConstants& k) {
  constexpr std::size_t win = 11;
  constexpr double sigma = 1.5;
  if (h < win || w < win) throw std::invalid_argument("windowed SSIM needs images of at least 11x11");
  double g[win];
  double gsum = 0.0;
  for (std::size_t i = 0; i < win; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    g[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + win <= h; ++y0) {
    for (std::size_t x0 = 0; x0 + win <= w; ++x0) {
      double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
      for (std::size_t dy = 0; dy < win; ++dy) {
        for (std::size_t dx = 0; dx < win; ++dx) {
          const double wt = g[dy] * g[dx];
          const double va = a[(y0 + dy) * w + x0 + dx];
          const double vb = b[(y0 + dy) * w + x0 + dx];
          mu_a += wt * va;
          mu_b += wt * vb;
          aa += wt * va * va;
          bb += wt * vb * vb;
          ab += wt * va * vb;
        }
      }
      total += ssim_from_moments(mu_a, mu_b, aa - mu_a * mu_a, bb - mu_b * mu_b, ab - mu_a * mu_b, k);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// 1-D DFT along `n` samples with stride, using a precomputed twiddle table of length n.
void dft_line(const std::complex<double>* in, std::size_t stride, std::size_t n,
              const std::vector<std::complex<double>>& twiddle, std::complex<double>* out) {
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += in[j * stride] * twiddle[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    out[k] = acc;
  }
}

std::vector<std::complex<double>> twiddles(std::size_t n) {
  std::vector<std::complex<double>> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    t[i] = {std::cos(angle), std::sin(angle)};
  }
  return t;
}

}  // namespace

double mse(std::span<const float> pred, std::span<const float> target) {
  require_same_size(pred, target);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

double psnr_from_mse(double mse_value, double L) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(L * L / mse_value);
}

double psnr(std::span<const float> pred, std::span<const float> target, double L) {
  return psnr_from_mse(mse(pred, target), L);
}

double ssim(std::span<const float> pred, std::span<const float> target, std::size_t h, std::size_t w,
            const MetricConstants& constants, SsimMode mode) {
  require_same_size(pred, target);
  if (pred.size() != h * w) throw std::invalid_argument("shape mismatch");
  return mode == SsimMode::global ? ssim_global(pred, target, constants)
                                  : ssim_windowed(pred, target, h, w, constants);
}

std::vector<double> dft_power(std::span<const float> image, std::size_t h, std::size_t w) {
  if (image.size() != h * w) throw std::invalid_argument("shape mismatch");
  const auto tw_row = twiddles(w);
  const auto tw_col = twiddles(h);
  std::vector<std::complex<double>> buf(image.begin(), image.end());
  std::vector<std::complex<double>> tmp(h * w);
  for (std::size_t y = 0; y < h; ++y) dft_line(&buf[y * w], 1, w, tw_row, &tmp[y * w]);
  std::vector<std::complex<double>> col(h);
  std::vector<double> power(h * w);
  for (std::size_t x = 0; x < w; ++x) {
    dft_line(&tmp[x], w, h, tw_col, col.data());
    for (std::size_t y = 0; y < h; ++y) power[y * w + x] = std::norm(col[y]);
  }
  return power;
}

RadialSpectrum radial_power_spectrum(std::span<const float> image, std::size_t h, std::size_t w) {
  if (h < 8 || w < 8) throw std::invalid_argument("spectrum needs images of at least 8x8");
  const auto power = dft_power(image, h, w);
  const auto n = static_cast<double>(std::min(h, w));
  const auto bins = static_cast<std::size_t>(std::floor(0.5 * std::numbers::sqrt2 * n + 0.5)) + 1;

  RadialSpectrum spec;
  spec.bin_centers.resize(bins);
  spec.mean_power.assign(bins, 0.0);
  spec.counts.assign(bins, 0);
  for (std::size_t b = 0; b < bins; ++b) spec.bin_centers[b] = static_cast<double>(b) / n;

  for (std::size_t y = 0; y < h; ++y) {
    const double fy = (y <= h / 2 ? static_cast<double>(y) : static_cast<double>(y) - static_cast<double>(h)) /
                      static_cast<double>(h);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = (x <= w / 2 ? static_cast<double>(x) : static_cast<double>(x) - static_cast<double>(w)) /
                        static_cast<double>(w);
      const auto b = std::min(bins - 1, static_cast<std::size_t>(std::floor(std::hypot(fx, fy) * n + 0.5)));
      spec.mean_power[b] += power[y * w + x];
      ++spec.counts[b];
    }
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (spec.counts[b] > 0) spec.mean_power[b] /= static_cast<double>(spec.counts[b]);
  }
  return spec;
}

}  // namespace flimsr
