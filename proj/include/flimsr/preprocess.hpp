#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "flimsr/image.hpp"

namespace flimsr {

/// Per-channel clip thresholds taken from the low-resolution input.
struct ClipStats {
  double percentile = 99.5;
  std::vector<float> thresholds;
};

enum class NormScope { wsi, patch };

/// Per-channel affine range used by min-max normalization.
struct NormStats {
  NormScope scope = NormScope::wsi;
  std::vector<float> min;
  std::vector<float> max;
};

/// A region of a parent image; origin is the top-left pixel in parent coordinates.
struct Patch {
  FlimImage data;
  std::size_t row = 0;
  std::size_t col = 0;
  std::string patient_id;
};

/// Low/high-resolution training pair. Built from the raw (unclipped) HR patch:
/// lr is the k-block average of hr's top-left k*floor(P/k) square.
struct PairedPatch {
  Patch lr;
  Patch hr;
  int k = 1;
};

/// k x k non-overlapping block mean over the largest k-divisible top-left region.
FlimImage block_average(const FlimImage& image, int k);

/// Nearest-rank percentile: sorted value at 1-based rank ceil(q/100 * n).
float nearest_rank_percentile(std::vector<float> values, double q);

struct ClipResult {
  FlimImage lr;
  FlimImage hr;
  ClipStats stats;
};

/// Clips both images per channel at the q-th percentile of the LR channel.
ClipResult clip_percentile(const FlimImage& lr, const FlimImage& hr, double q = 99.5);

/// Applies previously computed thresholds (inference path).
FlimImage apply_clip(const FlimImage& image, const ClipStats& stats);

struct NormalizeResult {
  FlimImage lr;
  FlimImage hr;
  NormStats stats;
};

/// LR-driven min-max normalization; HR is mapped with the same range and clamped to [0,1].
/// Constant channels map to zero.
NormalizeResult minmax_normalize(const FlimImage& lr, const FlimImage& hr,
                                 NormScope scope = NormScope::wsi);

NormStats compute_norm_stats(const FlimImage& lr, NormScope scope = NormScope::wsi);
FlimImage apply_normalize(const FlimImage& image, const NormStats& stats);

/// Non-overlapping top-left grid tiling; partial edge tiles are discarded.
std::vector<Patch> tile_patches(const FlimImage& image, std::size_t patch_px = 256,
                                const std::string& patient_id = {});

/// Copies a region out of an image.
FlimImage crop(const FlimImage& image, std::size_t row, std::size_t col, std::size_t h, std::size_t w);

/// Half-pixel-aligned separable bilinear resize of every channel.
FlimImage bilinear_resize(const FlimImage& image, std::size_t out_h, std::size_t out_w);

PairedPatch make_paired_patch(const Patch& hr, int k);

/// Full preprocessing of one field of view: degrade, clip, normalize, tile.
/// With NormScope::wsi statistics come from the whole LR field of view; with
/// NormScope::patch each patch pair is clipped and normalized on its own.
struct PreparedFov {
  std::vector<PairedPatch> pairs;  // normalized
  ClipStats clip;                  // whole-FOV stats (wsi scope)
  NormStats norm;
};
PreparedFov prepare_fov(const FlimImage& hr, int k, std::size_t patch_px, const std::string& patient_id,
                        double q = 99.5, NormScope scope = NormScope::wsi);

/// Statistics needed to preprocess an LR field of view at inference time,
/// plus the HR extent the prediction should cover.
struct PreprocessStats {
  ClipStats clip;
  NormStats norm;
  std::size_t hr_height = 0;
  std::size_t hr_width = 0;

  bool empty() const { return clip.thresholds.empty() || norm.min.empty(); }
};

/// Clip and normalize an LR image with stored statistics; throws when they are
/// missing or do not match the channel count.
FlimImage preprocess_lr(const FlimImage& lr, const PreprocessStats& stats);

void to_json(nlohmann::json& j, const ClipStats& s);
void from_json(const nlohmann::json& j, ClipStats& s);
void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);
void to_json(nlohmann::json& j, const PreprocessStats& s);
void from_json(const nlohmann::json& j, PreprocessStats& s);

}  // namespace flimsr
