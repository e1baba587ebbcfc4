#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flimsr/image.hpp"
#include "flimsr/metrics.hpp"
#include "flimsr/ttest.hpp"

namespace flimsr {

/// Pluggable perceptual metric (e.g. a learned-feature distance) on one channel
/// plane pair. No implementation ships with the library.
struct PerceptualMetric {
  std::string name;
  std::function<double(std::span<const float> pred, std::span<const float> target, std::size_t h, std::size_t w)> fn;
};

struct MetricValues {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> perceptual;
};

struct PatchMetrics {
  std::string id;
  std::vector<MetricValues> channels;  // ordered as MetricReport::channel_names
  MetricValues lifetime;               // mean over the lifetime channels
  MetricValues intensity;              // mean over the intensity channels
};

/// Per-patch, per-channel metrics plus channel-averaged values per modality.
/// Dataset-level entries are arithmetic means over patches.
struct MetricReport {
  MetricConstants constants;
  SsimMode ssim_mode = SsimMode::global;
  std::string perceptual_metric;  // empty when no metric was plugged in
  std::vector<std::string> channel_names;
  std::vector<ChannelKind> channel_kinds;
  std::vector<PatchMetrics> patches;
  std::vector<MetricValues> channel_means;
  MetricValues lifetime_mean;
  MetricValues intensity_mean;
};

/// Metrics of one prediction/target pair.
PatchMetrics evaluate_pair(const FlimImage& pred, const FlimImage& target, const std::string& id,
                           const MetricConstants& constants = {}, SsimMode mode = SsimMode::global,
                           const PerceptualMetric* perceptual = nullptr);

/// Evaluates paired sets; ids label the patches and must be unique.
MetricReport evaluate(const std::vector<FlimImage>& preds, const std::vector<FlimImage>& targets,
                      const std::vector<std::string>& ids, const MetricConstants& constants = {},
                      SsimMode mode = SsimMode::global, const PerceptualMetric* perceptual = nullptr);

/// Non-finite values (PSNR of identical images) are written as the strings
/// "inf" / "-inf" so the document stays valid JSON.
void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

struct Comparison {
  std::string scope;   // channel name, "lifetime" or "intensity"
  std::string metric;  // "mse", "psnr" or "ssim"
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::size_t n = 0;
  TTestResult test;
};

/// Paired t-tests of report a against report b for every channel/modality and
/// metric, pairing patches by id. Verdicts read "a relative to b".
std::vector<Comparison> compare_reports(const MetricReport& a, const MetricReport& b);

nlohmann::json comparisons_to_json(const std::vector<Comparison>& comparisons);

}  // namespace flimsr
