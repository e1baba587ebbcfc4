#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flimsr {

/// Dynamic range and the SSIM stabilizers C1 = (0.01 L)^2, C2 = (0.03 L)^2.
struct MetricConstants {
  double L = 1.0;
  double c1() const { return (0.01 * L) * (0.01 * L); }
  double c2() const { return (0.03 * L) * (0.03 * L); }
};

enum class SsimMode { global, windowed };

std::string to_string(SsimMode mode);
SsimMode ssim_mode_from_string(const std::string& s);

/// Mean squared error over all elements.
double mse(std::span<const float> pred, std::span<const float> target);

/// 10 log10(L^2 / MSE); returns +infinity when MSE is zero.
double psnr_from_mse(double mse_value, double L = 1.0);
double psnr(std::span<const float> pred, std::span<const float> target, double L = 1.0);

/// Structural similarity of one h x w plane.
///
/// Global mode evaluates the SSIM formula once with whole-image means,
/// (population) variances and covariance. Windowed mode averages it over every
/// fully contained 11x11 Gaussian window (sigma 1.5) and needs h, w >= 11.
double ssim(std::span<const float> pred, std::span<const float> target, std::size_t h, std::size_t w,
            const MetricConstants& constants = {}, SsimMode mode = SsimMode::global);

/// Radially averaged power spectrum with unit-width integer radius bins.
struct RadialSpectrum {
  std::vector<double> bin_centers;  // cycles/pixel
  std::vector<double> mean_power;
  std::vector<std::size_t> counts;  // DFT samples per bin
};

/// |DFT|^2 of an h x w plane binned by radius. A sample at signed frequency
/// indices (v, u) has radius r = sqrt((v/h)^2 + (u/w)^2) cycles/pixel and lands
/// in bin round(r * min(h, w)); bins span [0, 0.5 sqrt(2)] and DC is bin 0.
RadialSpectrum radial_power_spectrum(std::span<const float> image, std::size_t h, std::size_t w);

/// Raw 2-D DFT power |F(v,u)|^2, row-major h x w (unshifted).
std::vector<double> dft_power(std::span<const float> image, std::size_t h, std::size_t w);

}  // namespace flimsr
