#include "flimsr/bbdm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flimsr/gan.hpp"

namespace flimsr {
namespace {

constexpr std::uint64_t kDenoiserInitStream = 11;
constexpr std::uint64_t kBbdmTrainStream = 12;

}  // namespace

DiffusionSchedule make_schedule(std::size_t T, double s) {
  if (T < 2) throw std::invalid_argument("diffusion T must be >= 2");
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("diffusion scale s must be positive");
  DiffusionSchedule sched{T, s, std::vector<double>(T + 1), std::vector<double>(T + 1)};
  for (std::size_t t = 0; t <= T; ++t) {
    const double m = static_cast<double>(t) / static_cast<double>(T);
    sched.m[t] = m;
    sched.delta[t] = 2.0 * s * (m - m * m);
  }
  return sched;
}

std::vector<float> forward_sample(std::span<const float> x0, std::span<const float> y, std::size_t t,
                                  const DiffusionSchedule& schedule, Rng& rng) {
  if (x0.size() != y.size()) throw std::invalid_argument("forward_sample: shape mismatch");
  if (t > schedule.T) throw std::invalid_argument("forward_sample: t out of range");
  const double m = schedule.m[t];
  const double sd = std::sqrt(schedule.delta[t]);
  std::vector<float> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mean = (1.0 - m) * x0[i] + m * y[i];
    // Draw even when sd is zero so the stream position does not depend on t.
    const double eps = rng.normal();
    out[i] = static_cast<float>(sd > 0.0 ? mean + sd * eps : mean);
  }
  return out;
}

std::vector<float> bridge_noise(std::span<const float> x_t, std::span<const float> x0) {
  if (x_t.size() != x0.size()) throw std::invalid_argument("bridge_noise: shape mismatch");
  std::vector<float> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x_t[i] - x0[i];
  return out;
}

Tensor<float> reverse_sample(const NoisePredictor& predictor, const Tensor<float>& y,
                             const DiffusionSchedule& schedule, Rng& rng, std::size_t stride,
                             const std::function<void(std::size_t, const Tensor<float>&)>& visit) {
  if (stride == 0 || stride > schedule.T) throw std::invalid_argument("sampling stride out of range 1..T");
  std::vector<std::size_t> times;
  for (std::size_t t = schedule.T;; t -= std::min(stride, t)) {
    times.push_back(t);
    if (t == 0) break;
  }

  Tensor<float> x = y;
  if (visit) visit(times.front(), x);
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const std::size_t t = times[i];
    const std::size_t s = times[i + 1];
    const auto pred = predictor(x, y, t);
    require_same_shape(pred, x, "reverse_sample predictor output");

    const double m_t = schedule.m[t], m_s = schedule.m[s];
    const double d_t = schedule.delta[t], d_s = schedule.delta[s];
    double var = d_s;
    double coef = 0.0;
    if (d_t > 0.0) {
      const double ratio = (1.0 - m_t) / (1.0 - m_s);
      var = std::max(0.0, (d_t - d_s * ratio * ratio) * d_s / d_t);
      coef = std::sqrt(std::max(0.0, d_s - var) / d_t);
    }
    const double sd = std::sqrt(var);
    Tensor<float> next(x.n, x.c, x.h, x.w);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double x0_hat = static_cast<double>(x.data[j]) - pred.data[j];
      const double yj = y.data[j];
      const double resid = x.data[j] - (1.0 - m_t) * x0_hat - m_t * yj;
      double v = (1.0 - m_s) * x0_hat + m_s * yj + coef * resid;
      if (sd > 0.0) v += sd * rng.normal();
      next.data[j] = static_cast<float>(v);
    }
    x = std::move(next);
    if (visit) visit(s, x);
  }
  return x;
}

void BbdmConfig::validate() const {
  validate_factor(k);
  make_schedule(T, s);
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (steps == 0) throw std::invalid_argument("steps must be >= 1");
  if (sample_stride == 0 || sample_stride > T) throw std::invalid_argument("sampling stride out of range 1..T");
  denoiser.validate();
  if (denoiser.in_channels != 2 * denoiser.out_channels) {
    throw std::invalid_argument("denoiser input must be [x_t, y] (twice the output channels)");
  }
  if (denoiser.time_embed_dim == 0) throw std::invalid_argument("denoiser needs a time embedding");
}

void to_json(nlohmann::json& j, const BbdmConfig& c) {
  j = {{"k", c.k},
       {"T", c.T},
       {"s", c.s},
       {"batch_size", c.batch_size},
       {"steps", c.steps},
       {"adam", c.adam},
       {"seed", c.seed},
       {"sample_stride", c.sample_stride},
       {"denoiser", c.denoiser}};
}

void from_json(const nlohmann::json& j, BbdmConfig& c) {
  c.k = j.at("k").get<int>();
  c.T = j.value("T", c.T);
  c.s = j.value("s", c.s);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  if (j.contains("adam")) j.at("adam").get_to(c.adam);
  c.seed = j.value("seed", c.seed);
  c.sample_stride = j.value("sample_stride", c.sample_stride);
  if (j.contains("denoiser")) j.at("denoiser").get_to(c.denoiser);
}

BbdmModel make_bbdm(const BbdmConfig& config) {
  config.validate();
  return {config, UNet<float>(config.denoiser, mix_seed(config.seed, kDenoiserInitStream))};
}

BbdmResult train_bbdm(const BbdmConfig& config, const std::vector<PairedPatch>& data) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("empty dataset");
  const auto schedule = make_schedule(config.T, config.s);
  BbdmResult result{make_bbdm(config), {}};
  auto& net = result.model.denoiser;
  nn::Adam<float> opt(net.params().size(), config.adam);
  Rng rng(mix_seed(config.seed, kBbdmTrainStream));

  const std::size_t out_h = data.front().hr.data.height();
  const std::size_t out_w = data.front().hr.data.width();
  std::vector<std::size_t> order(data.size());
  std::size_t pos = order.size();

  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<const FlimImage*> lr_list, hr_list;
    while (lr_list.size() < config.batch_size) {
      if (pos == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size() - 1; i > 0; --i) {
          std::swap(order[i], order[static_cast<std::size_t>(rng.below(i + 1))]);
        }
        pos = 0;
      }
      const auto& p = data[order[pos++]];
      if (p.k != config.k) throw std::invalid_argument("k mismatch between config and dataset");
      lr_list.push_back(&p.lr.data);
      hr_list.push_back(&p.hr.data);
    }
    const auto x0 = stack_images(hr_list);
    if (x0.h != out_h || x0.w != out_w) throw std::invalid_argument("all pairs must share one patch shape");
    const auto y = nn::resize_forward(stack_images(lr_list), out_h, out_w);

    Tensor<float> x_t(x0.n, x0.c, x0.h, x0.w);
    Tensor<float> target(x0.n, x0.c, x0.h, x0.w);
    std::vector<double> steps(x0.n);
    for (std::size_t i = 0; i < x0.n; ++i) {
      const std::size_t t = 1 + static_cast<std::size_t>(rng.below(config.T));
      steps[i] = static_cast<double>(t);
      const std::span<const float> x0_i(x0.sample(i), x0.sample_size());
      const std::span<const float> y_i(y.sample(i), y.sample_size());
      const auto xt = forward_sample(x0_i, y_i, t, schedule, rng);
      std::copy(xt.begin(), xt.end(), x_t.sample(i));
      const auto noise = bridge_noise(xt, x0_i);
      std::copy(noise.begin(), noise.end(), target.sample(i));
    }

    net.params().zero_grad();
    const auto pred = net.forward_train(nn::concat_channels(x_t, y), steps);
    Tensor<float> grad(pred.n, pred.c, pred.h, pred.w);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    for (std::size_t j = 0; j < pred.size(); ++j) {
      const double d = static_cast<double>(pred.data[j]) - target.data[j];
      loss += d * d;
      grad.data[j] = static_cast<float>(2.0 * d * inv_n);
    }
    net.backward(grad);
    opt.step(net.params().values(), net.params().grads());
    result.loss.push_back(loss * inv_n);
  }
  return result;
}

NoisePredictor network_predictor(const UNet<float>& denoiser) {
  return [&denoiser](const Tensor<float>& x_t, const Tensor<float>& y, std::size_t t) {
    return denoiser.forward_eval(nn::concat_channels(x_t, y), std::vector<double>(x_t.n, static_cast<double>(t)));
  };
}

FlimImage bbdm_infer_normalized(const BbdmModel& model, const FlimImage& lr, std::size_t out_h,
                                std::size_t out_w, std::uint64_t seed) {
  const std::size_t m = model.config.denoiser.size_multiple();
  if (out_h % m != 0 || out_w % m != 0) {
    throw std::invalid_argument("target size must be a multiple of " + std::to_string(m));
  }
  const auto y = nn::resize_forward(stack_images({&lr}), out_h, out_w);
  Rng rng(seed);
  const auto x = reverse_sample(network_predictor(model.denoiser), y, make_schedule(model.config.T, model.config.s),
                                rng, model.config.sample_stride);
  const float pixel = lr.pixel_size_um() * static_cast<float>(lr.width()) / static_cast<float>(out_w);
  std::vector<float> data(x.data.begin(), x.data.end());
  for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
  return FlimImage(lr.channel_descs(), out_h, out_w, pixel, std::move(data));
}

void save_bbdm(const BbdmModel& model, const std::filesystem::path& path, std::size_t step) {
  Checkpoint ckpt;
  ckpt.meta = {{"model", "bbdm"},
               {"k", model.config.k},
               {"step", step},
               {"bbdm_config", model.config},
               {"condition", "bilinear-upsampled LR concatenated with x_t"},
               {"denoiser_target", "bridge residual x_t - x0"},
               {"attention", false}};
  append_store(ckpt, "denoiser", model.denoiser.params());
  append_store(ckpt, "denoiser_buffers", model.denoiser.buffers());
  save_checkpoint(ckpt, path);
}

BbdmModel load_bbdm(const std::filesystem::path& path) {
  const auto ckpt = load_checkpoint(path);
  if (ckpt.meta.value("model", std::string{}) != "bbdm") {
    throw CheckpointError("checkpoint is not a BBDM model: " + path.string());
  }
  auto model = make_bbdm(ckpt.meta.at("bbdm_config").get<BbdmConfig>());
  restore_store(ckpt, "denoiser", model.denoiser.params());
  restore_store(ckpt, "denoiser_buffers", model.denoiser.buffers());
  return model;
}

}  // namespace flimsr
