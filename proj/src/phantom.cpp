#include "flimsr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "flimsr/rng.hpp"

namespace flimsr {

void PhantomSpec::validate() const {
  if (n_patients == 0 || fovs_per_patient == 0) throw std::invalid_argument("phantom needs patients and fields of view");
  if (fov_size < 64) throw std::invalid_argument("fov_size must be >= 64");
  if (!(lifetime_min_ns < lifetime_max_ns)) throw std::invalid_argument("lifetime_range min must be < max");
  if (structure_scales.empty()) throw std::invalid_argument("structure_scales must be non-empty");
  for (double s : structure_scales) {
    if (!(s >= 1.0)) throw std::invalid_argument("structure scales must be >= 1 pixel");
  }
  if (!(cross_channel_correlation >= 0.0 && cross_channel_correlation <= 1.0)) {
    throw std::invalid_argument("cross_channel_correlation must be in [0,1]");
  }
  if (!(psf_sigma_px >= 0.0)) throw std::invalid_argument("psf_sigma_px must be >= 0");
}

double PhantomSpec::finest_scale() const {
  return *std::min_element(structure_scales.begin(), structure_scales.end());
}

namespace {

using Plane = std::vector<double>;

std::size_t reflect(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * n - 2;
  i = ((i % period) + period) % period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

// Separable Gaussian blur with mirrored borders; weights sum to one, so the
// output stays inside the input's value range.
Plane blur(const Plane& in, std::size_t n, double sigma) {
  if (sigma <= 0.0) return in;
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (auto& w : kernel) w /= sum;

  const long ln = static_cast<long>(n);
  std::vector<std::size_t> src(n + 2 * static_cast<std::size_t>(radius));
  for (long i = -radius; i < ln + radius; ++i) src[static_cast<std::size_t>(i + radius)] = reflect(i, ln);

  Plane tmp(n * n), out(n * n, 0.0);
  std::vector<double> row(src.size());
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = in[y * n + src[i]];
    for (std::size_t x = 0; x < n; ++x) {
      double acc = 0.0;
      for (std::size_t d = 0; d < kernel.size(); ++d) acc += kernel[d] * row[x + d];
      tmp[y * n + x] = acc;
    }
  }
  for (std::size_t y = 0; y < n; ++y) {
    double* dst = out.data() + y * n;
    for (std::size_t d = 0; d < kernel.size(); ++d) {
      const double w = kernel[d];
      const double* line = tmp.data() + src[y + d] * n;
      for (std::size_t x = 0; x < n; ++x) dst[x] += w * line[x];
    }
  }
  return out;
}

void standardize(Plane& p) {
  double mean = 0.0;
  for (double v : p) mean += v;
  mean /= static_cast<double>(p.size());
  double var = 0.0;
  for (double v : p) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(p.size()));
  for (double& v : p) v = sd > 0.0 ? (v - mean) / sd : 0.0;
}

// Sum of smoothed white noise and Gaussian blobs over all structure scales; zero mean, unit variance.
Plane multiscale_field(Rng& rng, std::size_t n, const std::vector<double>& scales) {
  Plane field(n * n, 0.0);
  const double dn = static_cast<double>(n);
  for (double s : scales) {
    Plane noise(n * n);
    for (double& v : noise) v = rng.normal();
    noise = blur(noise, n, 0.5 * s);
    standardize(noise);

    const auto blobs = static_cast<std::size_t>(std::max(1.0, 0.5 * (dn / s) * (dn / s) / 4.0));
    for (std::size_t b = 0; b < blobs; ++b) {
      const double cy = rng.uniform(0.0, dn);
      const double cx = rng.uniform(0.0, dn);
      const double sigma = 0.5 * s * rng.uniform(0.7, 1.3);
      const double amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 1.5);
      const long r = static_cast<long>(std::ceil(3.0 * sigma));
      for (long y = static_cast<long>(cy) - r; y <= static_cast<long>(cy) + r; ++y) {
        if (y < 0 || y >= static_cast<long>(n)) continue;
        for (long x = static_cast<long>(cx) - r; x <= static_cast<long>(cx) + r; ++x) {
          if (x < 0 || x >= static_cast<long>(n)) continue;
          const double dy = static_cast<double>(y) - cy;
          const double dx = static_cast<double>(x) - cx;
          noise[static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x)] +=
              amp * std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
        }
      }
    }
    for (std::size_t i = 0; i < field.size(); ++i) field[i] += noise[i];
  }
  standardize(field);
  return field;
}

// Thin random curves rasterized as a {0,1} mask.
Plane filament_mask(Rng& rng, std::size_t n, double width) {
  Plane mask(n * n, 0.0);
  const double dn = static_cast<double>(n);
  const auto count = static_cast<std::size_t>(2 + rng.below(3));
  const double half = std::max(0.5, 0.5 * width);
  for (std::size_t f = 0; f < count; ++f) {
    double y = rng.uniform(0.0, dn);
    double x = rng.uniform(0.0, dn);
    double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const auto steps = static_cast<std::size_t>(dn);
    for (std::size_t s = 0; s < steps; ++s) {
      heading += 0.15 * rng.normal();
      y += std::sin(heading);
      x += std::cos(heading);
      for (long yy = static_cast<long>(std::floor(y - half)); yy <= static_cast<long>(std::ceil(y + half)); ++yy) {
        for (long xx = static_cast<long>(std::floor(x - half)); xx <= static_cast<long>(std::ceil(x + half)); ++xx) {
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(n) || xx >= static_cast<long>(n)) continue;
          const double dy = static_cast<double>(yy) - y;
          const double dx = static_cast<double>(xx) - x;
          if (dy * dy + dx * dx <= half * half) mask[static_cast<std::size_t>(yy) * n + static_cast<std::size_t>(xx)] = 1.0;
        }
      }
    }
  }
  return mask;
}

// Value at the given quantile of a plane.
double quantile(Plane values, double q) {
  const auto idx = static_cast<std::size_t>(q * static_cast<double>(values.size() - 1));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
  return values[idx];
}

FlimImage make_fov(const PhantomSpec& spec, Rng& rng) {
  const std::size_t n = spec.fov_size;
  const double s_min = spec.finest_scale();
  const double rho = spec.cross_channel_correlation;
  const double shared_w = std::max(rho, 0.1);
  const double own_w = 0.5 * (1.0 - rho);

  // Tissue regions shared by all bands.
  const Plane tissue = multiscale_field(rng, n, spec.structure_scales);
  const double t1 = quantile(tissue, 1.0 / 3.0);
  const double t2 = quantile(tissue, 2.0 / 3.0);
  std::vector<int> label(n * n);
  for (std::size_t i = 0; i < label.size(); ++i) label[i] = tissue[i] < t1 ? 0 : (tissue[i] < t2 ? 1 : 2);
  const Plane filaments = filament_mask(rng, n, s_min);
  const Plane texture = multiscale_field(rng, n, spec.structure_scales);

  std::vector<float> data;
  data.reserve(6 * n * n);
  const double lt_lo = spec.lifetime_min_ns;
  const double lt_span = spec.lifetime_max_ns - spec.lifetime_min_ns;

  for (int band = 0; band < 3; ++band) {
    // Band-specific per-region levels on a [0,1] structural scale.
    double level[3];
    for (double& l : level) l = rng.uniform(0.15, 0.75);
    const double filament_gain = rng.uniform(0.15, 0.3) * (rng.uniform() < 0.5 ? -1.0 : 1.0);

    Plane shared(n * n);
    for (std::size_t i = 0; i < shared.size(); ++i) {
      shared[i] = level[label[i]] + filament_gain * filaments[i] + 0.05 * texture[i];
    }
    const Plane own_lt = multiscale_field(rng, n, spec.structure_scales);
    const Plane own_int = multiscale_field(rng, n, spec.structure_scales);
    const double int_scale = rng.uniform(200.0, 1000.0);

    Plane lt(n * n), in(n * n);
    for (std::size_t i = 0; i < lt.size(); ++i) {
      const double a = shared_w * shared[i] + own_w * 0.15 * own_lt[i] + (1.0 - shared_w) * 0.45;
      const double b = shared_w * shared[i] + own_w * 0.15 * own_int[i] + (1.0 - shared_w) * 0.45;
      lt[i] = lt_lo + lt_span * std::clamp(a, 0.0, 1.0);
      in[i] = int_scale * std::clamp(b, 0.0, 1.0);
    }
    lt = blur(lt, n, spec.psf_sigma_px);
    in = blur(in, n, spec.psf_sigma_px);
    for (double v : lt) data.push_back(static_cast<float>(std::clamp(v, spec.lifetime_min_ns, spec.lifetime_max_ns)));
    for (double v : in) data.push_back(static_cast<float>(std::max(v, 0.0)));
  }
  return FlimImage(standard_channels(), n, n, FlimImage::kHrPixelSizeUm, std::move(data));
}

}  // namespace

std::vector<PatientRecord> generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<PatientRecord> out;
  for (std::size_t p = 0; p < spec.n_patients; ++p) {
    PatientRecord rec;
    char id[16];
    std::snprintf(id, sizeof(id), "P%02zu", p);
    rec.patient_id = id;
    for (std::size_t f = 0; f < spec.fovs_per_patient; ++f) {
      Rng rng(mix_seed(seed, p * 100003 + f));
      rec.images.push_back(make_fov(spec, rng));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace flimsr
