#pragma once

#include <cstdint>
#include <vector>

#include "flimsr/dataset.hpp"

namespace flimsr {

/// Parameters of the synthetic tissue-like phantom used in place of patient data.
struct PhantomSpec {
  std::size_t n_patients = 19;
  std::size_t fovs_per_patient = 2;
  std::size_t fov_size = 256;
  double lifetime_min_ns = 0.0;
  double lifetime_max_ns = 10.0;
  std::vector<double> structure_scales = {4.0, 8.0, 16.0, 32.0};
  double cross_channel_correlation = 0.8;
  double psf_sigma_px = 1.0;  // final Gaussian band limit; 0 disables

  void validate() const;
  double finest_scale() const;
};

/// Deterministic phantom: each field of view is a 6-channel image built from
/// thresholded multi-scale blob fields ("tissue regions" with per-region
/// lifetime offsets), thin filaments and smooth texture, then band-limited with
/// a Gaussian of width psf_sigma_px. Lifetime and
/// intensity channels of a band share the region/filament structure with weight
/// cross_channel_correlation. Patient ids are "P00", "P01", ...
std::vector<PatientRecord> generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

}  // namespace flimsr
