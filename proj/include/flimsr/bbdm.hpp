#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "flimsr/checkpoint.hpp"
#include "flimsr/networks.hpp"
#include "flimsr/nn/adam.hpp"
#include "flimsr/preprocess.hpp"
#include "flimsr/rng.hpp"

namespace flimsr {

/// Brownian-bridge schedule: m_t = t/T, delta_t = 2 s (m_t - m_t^2), t = 0..T.
struct DiffusionSchedule {
  std::size_t T = 1000;
  double s = 1.0;
  std::vector<double> m;
  std::vector<double> delta;
};

DiffusionSchedule make_schedule(std::size_t T = 1000, double s = 1.0);

/// x_t = (1 - m_t) x0 + m_t y + sqrt(delta_t) eps, eps ~ N(0, 1) per element.
std::vector<float> forward_sample(std::span<const float> x0, std::span<const float> y, std::size_t t,
                                  const DiffusionSchedule& schedule, Rng& rng);

/// Denoiser target at (x_t, x0, y): the bridge residual x_t - x0, which equals
/// m_t (y - x0) + sqrt(delta_t) eps. Subtracting a prediction of it from x_t
/// gives the x0 estimate used by the reverse step.
std::vector<float> bridge_noise(std::span<const float> x_t, std::span<const float> x0);

/// Noise predictor: (x_t, y, t) -> estimate of the bridge residual, all N x C x H x W.
using NoisePredictor = std::function<Tensor<float>(const Tensor<float>& x_t, const Tensor<float>& y, std::size_t t)>;

/// Ancestral sampling from x_T = y down to t = 0 over the steps T, T - stride, ..., 0.
/// Each transition t -> s forms x0_hat = x_t - predictor(x_t, y, t) and samples
///   x_s = (1 - m_s) x0_hat + m_s y + sqrt((delta_s - var) / delta_t) (x_t - (1 - m_t) x0_hat - m_t y) + sqrt(var) z
/// with var = (delta_t - delta_s (1 - m_t)^2 / (1 - m_s)^2) delta_s / delta_t. At t = T, where
/// delta_t = 0, the state carries no information about x0 and var = delta_s.
/// `visit`, if set, sees every state (including the first and last).
Tensor<float> reverse_sample(const NoisePredictor& predictor, const Tensor<float>& y,
                             const DiffusionSchedule& schedule, Rng& rng, std::size_t stride = 1,
                             const std::function<void(std::size_t t, const Tensor<float>&)>& visit = {});

struct BbdmConfig {
  int k = 2;
  std::size_t T = 1000;
  double s = 1.0;
  std::size_t batch_size = 4;
  std::size_t steps = 1000;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t sample_stride = 1;  // reverse-sampling stride used at inference
  UNetSpec denoiser{12, 6, 64, 4, 3, 64};

  void validate() const;
};

void to_json(nlohmann::json& j, const BbdmConfig& c);
void from_json(const nlohmann::json& j, BbdmConfig& c);

struct BbdmModel {
  BbdmConfig config;
  UNet<float> denoiser;
};

BbdmModel make_bbdm(const BbdmConfig& config);

struct BbdmResult {
  BbdmModel model;
  std::vector<double> loss;  // per-step mean squared error of the residual prediction
};

/// Each step draws t uniformly in [1, T] per sample, forms x_t from the HR
/// patch and the bilinearly upsampled LR condition y, and regresses the
/// bridge residual with mean squared error.
BbdmResult train_bbdm(const BbdmConfig& config, const std::vector<PairedPatch>& data);

/// Wraps a denoiser network as a predictor (evaluation mode; input is [x_t, y]).
NoisePredictor network_predictor(const UNet<float>& denoiser);

/// Upsamples a normalized LR image to (out_h, out_w), runs reverse sampling
/// with the model's stride and clamps to [0, 1].
FlimImage bbdm_infer_normalized(const BbdmModel& model, const FlimImage& lr, std::size_t out_h,
                                std::size_t out_w, std::uint64_t seed);

void save_bbdm(const BbdmModel& model, const std::filesystem::path& path, std::size_t step = 0);
BbdmModel load_bbdm(const std::filesystem::path& path);

}  // namespace flimsr
