#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flimsr/checkpoint.hpp"
#include "flimsr/image.hpp"
#include "flimsr/networks.hpp"
#include "flimsr/nn/adam.hpp"
#include "flimsr/preprocess.hpp"

namespace flimsr {

inline constexpr int kMinFactor = 2;
inline constexpr int kMaxFactor = 7;

/// Throws "k out of supported range 2..7" for unsupported factors.
void validate_factor(int k);

/// Adversarial weight schedule: 0.1 for k in {2, 3}, 1.0 for k >= 4.
double default_alpha(int k);

struct TrainConfig {
  int k = 2;
  double alpha = 0.1;
  std::size_t batch_size = 4;
  std::size_t steps = 1000;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t checkpoint_interval = 0;  // 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;
  std::size_t validation_interval = 0;  // 0 disables validation
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;

  /// Defaults with alpha taken from the schedule.
  static TrainConfig for_factor(int k);
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct StepRecord {
  std::size_t step = 0;
  double g_loss = 0.0;
  double d_loss = 0.0;
  double l1_term = 0.0;
  double adv_term = 0.0;  // unweighted (d_fake - 1)^2, batch mean
};

struct ValidationRecord {
  std::size_t step = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<ValidationRecord> validation;
  std::vector<std::filesystem::path> checkpoints;

  bool operator==(const TrainHistory& o) const;
  /// Columns: step, g_loss, d_loss, l1_term, adv_term.
  void write_csv(const std::filesystem::path& path) const;
};

struct CganModel {
  TrainConfig config;
  Generator<float> generator;
  Discriminator<float> discriminator;
};

/// Fresh networks initialized from the config's seed.
CganModel make_cgan(const TrainConfig& config);

struct TrainResult {
  CganModel model;
  TrainHistory history;
};

/// Alternating least-squares adversarial training: per batch one
/// discriminator step on (real, detached fake), then one generator step on
/// smooth-L1 + alpha * (D(fake) - 1)^2. Batches follow a seeded per-epoch
/// shuffle, so the run is fully determined by the config and the data.
TrainResult train(const TrainConfig& config, const std::vector<PairedPatch>& data,
                  const std::vector<PairedPatch>& validation = {});

/// Both networks plus a sidecar with the full training config.
Checkpoint cgan_checkpoint(const CganModel& model, std::size_t step);
void save_cgan(const CganModel& model, const std::filesystem::path& path, std::size_t step = 0);
CganModel load_cgan(const std::filesystem::path& path);

/// Runs the generator over an already normalized LR image in evaluation mode,
/// tile by tile, and stitches the outputs into an out_h x out_w image clamped
/// to [0, 1]. Tiles are tile_px HR pixels (or the whole output when smaller);
/// the last tile on each axis is aligned to the far edge.
FlimImage infer_normalized(const Generator<float>& generator, const FlimImage& lr, std::size_t out_h,
                           std::size_t out_w, std::size_t tile_px = 256);

/// Preprocesses a raw LR image with stored statistics, then infer_normalized.
FlimImage infer(const Generator<float>& generator, const FlimImage& lr_raw, const PreprocessStats& stats,
                std::size_t out_h, std::size_t out_w, std::size_t tile_px = 256);

/// Stacks patch images into an N x C x H x W tensor.
Tensor<float> stack_images(const std::vector<const FlimImage*>& images);

}  // namespace flimsr
