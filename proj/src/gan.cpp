#include "flimsr/gan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "flimsr/losses.hpp"
#include "flimsr/metrics.hpp"
#include "flimsr/rng.hpp"

namespace flimsr {
namespace {

// Seed streams derived from TrainConfig::seed.
constexpr std::uint64_t kGeneratorInitStream = 1;
constexpr std::uint64_t kDiscriminatorInitStream = 2;
constexpr std::uint64_t kDataOrderStream = 3;

}  // namespace

void validate_factor(int k) {
  if (k < kMinFactor || k > kMaxFactor) throw std::invalid_argument("k out of supported range 2..7");
}

double default_alpha(int k) {
  validate_factor(k);
  return k <= 3 ? 0.1 : 1.0;
}

TrainConfig TrainConfig::for_factor(int k) {
  TrainConfig c;
  c.k = k;
  c.alpha = default_alpha(k);
  return c;
}

void TrainConfig::validate() const {
  validate_factor(k);
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (steps == 0) throw std::invalid_argument("steps must be >= 1");
  if (checkpoint_interval > 0 && checkpoint_dir.empty()) {
    throw std::invalid_argument("checkpoint_interval needs a checkpoint_dir");
  }
  generator.unet.validate();
  discriminator.validate();
  if (generator.unet.in_channels != generator.unet.out_channels ||
      discriminator.in_channels != generator.unet.out_channels) {
    throw std::invalid_argument("generator and discriminator channel counts disagree");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"k", c.k},
       {"alpha", c.alpha},
       {"batch_size", c.batch_size},
       {"steps", c.steps},
       {"adam", c.adam},
       {"seed", c.seed},
       {"checkpoint_interval", c.checkpoint_interval},
       {"validation_interval", c.validation_interval},
       {"generator", c.generator.unet},
       {"discriminator", c.discriminator}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.k = j.at("k").get<int>();
  c.alpha = j.contains("alpha") ? j.at("alpha").get<double>() : default_alpha(c.k);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  if (j.contains("adam")) j.at("adam").get_to(c.adam);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.validation_interval = j.value("validation_interval", c.validation_interval);
  if (j.contains("generator")) j.at("generator").get_to(c.generator.unet);
  if (j.contains("discriminator")) j.at("discriminator").get_to(c.discriminator);
}

bool TrainHistory::operator==(const TrainHistory& o) const {
  auto same_step = [](const StepRecord& a, const StepRecord& b) {
    return a.step == b.step && a.g_loss == b.g_loss && a.d_loss == b.d_loss && a.l1_term == b.l1_term &&
           a.adv_term == b.adv_term;
  };
  auto same_val = [](const ValidationRecord& a, const ValidationRecord& b) {
    return a.step == b.step && a.psnr == b.psnr && a.ssim == b.ssim;
  };
  return std::equal(steps.begin(), steps.end(), o.steps.begin(), o.steps.end(), same_step) &&
         std::equal(validation.begin(), validation.end(), o.validation.begin(), o.validation.end(), same_val);
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,g_loss,d_loss,l1_term,adv_term\n" << std::setprecision(9);
  for (const auto& s : steps) {
    out << s.step << ',' << s.g_loss << ',' << s.d_loss << ',' << s.l1_term << ',' << s.adv_term << '\n';
  }
}

CganModel make_cgan(const TrainConfig& config) {
  config.validate();
  return {config, Generator<float>(config.generator, mix_seed(config.seed, kGeneratorInitStream)),
          Discriminator<float>(config.discriminator, mix_seed(config.seed, kDiscriminatorInitStream))};
}

Tensor<float> stack_images(const std::vector<const FlimImage*>& images) {
  if (images.empty()) throw std::invalid_argument("no images to stack");
  const auto& first = *images.front();
  Tensor<float> t(images.size(), first.channels(), first.height(), first.width());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = *images[i];
    if (im.channels() != t.c || im.height() != t.h || im.width() != t.w) {
      throw std::invalid_argument("patches in a batch must share one shape");
    }
    std::copy(im.data().begin(), im.data().end(), t.sample(i));
  }
  return t;
}

namespace {

/// Endless sequence of indices: one seeded permutation per epoch.
class BatchOrder {
 public:
  BatchOrder(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {}

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    while (out.size() < batch) {
      if (pos_ == order_.size() || !started_) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = order_.size() - 1; i > 0; --i) {
      std::swap(order_[i], order_[static_cast<std::size_t>(rng_.below(i + 1))]);
    }
    pos_ = 0;
    started_ = true;
  }

  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  bool started_ = false;
};

void check_dataset(const std::vector<PairedPatch>& data, int k) {
  if (data.empty()) throw std::invalid_argument("empty dataset");
  for (const auto& p : data) {
    if (p.k != k) throw std::invalid_argument("k mismatch between config and dataset");
    if (p.lr.data.channels() != data.front().lr.data.channels() ||
        p.lr.data.height() != data.front().lr.data.height() ||
        p.hr.data.height() != data.front().hr.data.height() || p.hr.data.width() != data.front().hr.data.width()) {
      throw std::invalid_argument("all pairs must share one patch shape");
    }
  }
}

ValidationRecord validate_model(const Generator<float>& gen, const std::vector<PairedPatch>& pairs,
                                std::size_t step) {
  double psnr_sum = 0.0, ssim_sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : pairs) {
    const auto pred = infer_normalized(gen, p.lr.data, p.hr.data.height(), p.hr.data.width());
    for (std::size_t c = 0; c < pred.channels(); ++c) {
      psnr_sum += psnr(pred.plane(c), p.hr.data.plane(c));
      ssim_sum += ssim(pred.plane(c), p.hr.data.plane(c), pred.height(), pred.width());
      ++n;
    }
  }
  return {step, psnr_sum / static_cast<double>(n), ssim_sum / static_cast<double>(n)};
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<PairedPatch>& data,
                  const std::vector<PairedPatch>& validation) {
  config.validate();
  check_dataset(data, config.k);
  const std::size_t out_h = data.front().hr.data.height();
  const std::size_t out_w = data.front().hr.data.width();

  TrainResult result{make_cgan(config), {}};
  auto& gen = result.model.generator;
  auto& disc = result.model.discriminator;
  nn::Adam<float> g_opt(gen.unet().params().size(), config.adam);
  nn::Adam<float> d_opt(disc.params().size(), config.adam);
  BatchOrder order(data.size(), mix_seed(config.seed, kDataOrderStream));

  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<const FlimImage*> lr_list, hr_list;
    for (auto i : order.next(config.batch_size)) {
      lr_list.push_back(&data[i].lr.data);
      hr_list.push_back(&data[i].hr.data);
    }
    const auto lr = stack_images(lr_list);
    const auto hr = stack_images(hr_list);
    const std::size_t b = hr.n;
    const float inv_b = 1.0f / static_cast<float>(b);

    // The fake batch is computed once; the discriminator step treats it as a constant.
    const auto fake = gen.forward_train(lr, out_h, out_w);

    disc.params().zero_grad();
    double d_loss = 0.0;
    {
      const auto z_real = disc.logits_train(hr);
      std::vector<float> g_real(b);
      for (std::size_t i = 0; i < b; ++i) {
        const float s = sigmoid(z_real[i]);
        d_loss += (s - 1.0) * (s - 1.0);
        g_real[i] = inv_b * 2.0f * (s - 1.0f) * s * (1.0f - s);
      }
      disc.backward(g_real);
      const auto z_fake = disc.logits_train(fake);
      std::vector<float> g_fake(b);
      for (std::size_t i = 0; i < b; ++i) {
        const float s = sigmoid(z_fake[i]);
        d_loss += static_cast<double>(s) * s;
        g_fake[i] = inv_b * 2.0f * s * s * (1.0f - s);
      }
      disc.backward(g_fake);
    }
    d_opt.step(disc.params().values(), disc.params().grads());

    gen.unet().params().zero_grad();
    disc.params().zero_grad();
    const auto z = disc.logits_train(fake);
    double adv = 0.0;
    std::vector<float> g_logit(b);
    for (std::size_t i = 0; i < b; ++i) {
      const float s = sigmoid(z[i]);
      adv += adversarial_loss(s);
      g_logit[i] = static_cast<float>(config.alpha) * inv_b * 2.0f * (s - 1.0f) * s * (1.0f - s);
    }
    auto grad_fake = disc.backward(g_logit);
    const double l1 = smooth_l1(std::span<const float>(fake.data), std::span<const float>(hr.data));
    Tensor<float> grad_l1(fake.n, fake.c, fake.h, fake.w);
    smooth_l1_grad(std::span<const float>(fake.data), std::span<const float>(hr.data),
                   std::span<float>(grad_l1.data));
    for (std::size_t i = 0; i < grad_fake.size(); ++i) grad_fake.data[i] += grad_l1.data[i];
    gen.backward(grad_fake);
    g_opt.step(gen.unet().params().values(), gen.unet().params().grads());

    adv /= static_cast<double>(b);
    result.history.steps.push_back({step, l1 + config.alpha * adv, d_loss / static_cast<double>(b), l1, adv});

    if (config.validation_interval > 0 && !validation.empty() &&
        (step % config.validation_interval == 0 || step == config.steps)) {
      result.history.validation.push_back(validate_model(gen, validation, step));
    }
    if (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0) {
      std::ostringstream name;
      name << "step_" << std::setw(7) << std::setfill('0') << step << ".ckpt";
      const auto path = config.checkpoint_dir / name.str();
      save_cgan(result.model, path, step);
      result.history.checkpoints.push_back(path);
    }
  }
  return result;
}

Checkpoint cgan_checkpoint(const CganModel& model, std::size_t step) {
  Checkpoint ckpt;
  ckpt.meta = {{"model", "cgan"},
               {"k", model.config.k},
               {"step", step},
               {"train_config", model.config},
               {"optimizer", "adam"},
               {"update_ratio", "1 discriminator step : 1 generator step"}};
  append_store(ckpt, "generator", model.generator.unet().params());
  append_store(ckpt, "generator_buffers", model.generator.unet().buffers());
  append_store(ckpt, "discriminator", model.discriminator.params());
  append_store(ckpt, "discriminator_buffers", model.discriminator.buffers());
  return ckpt;
}

void save_cgan(const CganModel& model, const std::filesystem::path& path, std::size_t step) {
  save_checkpoint(cgan_checkpoint(model, step), path);
}

CganModel load_cgan(const std::filesystem::path& path) {
  const auto ckpt = load_checkpoint(path);
  if (ckpt.meta.value("model", std::string{}) != "cgan") {
    throw CheckpointError("checkpoint is not a cGAN model: " + path.string());
  }
  auto model = make_cgan(ckpt.meta.at("train_config").get<TrainConfig>());
  restore_store(ckpt, "generator", model.generator.unet().params());
  restore_store(ckpt, "generator_buffers", model.generator.unet().buffers());
  restore_store(ckpt, "discriminator", model.discriminator.params());
  restore_store(ckpt, "discriminator_buffers", model.discriminator.buffers());
  return model;
}

namespace {

std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t tile) {
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o + tile <= extent; o += tile) out.push_back(o);
  if (out.empty() || out.back() + tile < extent) out.push_back(extent - tile);
  return out;
}

}  // namespace

FlimImage infer_normalized(const Generator<float>& generator, const FlimImage& lr, std::size_t out_h,
                           std::size_t out_w, std::size_t tile_px) {
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("target size must be positive");
  if (lr.channels() != generator.spec().unet.in_channels) {
    throw std::invalid_argument("input channel count does not match the generator");
  }
  const std::size_t tile_h = std::min(tile_px, out_h);
  const std::size_t tile_w = std::min(tile_px, out_w);
  const std::size_t m = generator.spec().unet.size_multiple();
  if (tile_h % m != 0 || tile_w % m != 0) {
    throw std::invalid_argument("tile size must be a multiple of " + std::to_string(m));
  }
  // LR window matching one HR tile under the image-level scale factor.
  const std::size_t lr_tile_h = std::max<std::size_t>(1, tile_h * lr.height() / out_h);
  const std::size_t lr_tile_w = std::max<std::size_t>(1, tile_w * lr.width() / out_w);

  struct Tile {
    std::size_t row, col, lr_row, lr_col;
  };
  std::vector<Tile> tiles;
  for (auto r : tile_origins(out_h, tile_h)) {
    for (auto c : tile_origins(out_w, tile_w)) {
      const std::size_t lr_r = std::min(r * lr.height() / out_h, lr.height() - lr_tile_h);
      const std::size_t lr_c = std::min(c * lr.width() / out_w, lr.width() - lr_tile_w);
      tiles.push_back({r, c, lr_r, lr_c});
    }
  }

  const float pixel = lr.pixel_size_um() * static_cast<float>(lr.width()) / static_cast<float>(out_w);
  auto out = FlimImage::zeros(lr.channel_descs(), out_h, out_w, pixel);
  constexpr std::size_t kTilesPerBatch = 4;
  for (std::size_t t0 = 0; t0 < tiles.size(); t0 += kTilesPerBatch) {
    const std::size_t nb = std::min(kTilesPerBatch, tiles.size() - t0);
    std::vector<FlimImage> crops;
    std::vector<const FlimImage*> ptrs;
    for (std::size_t i = 0; i < nb; ++i) {
      const auto& t = tiles[t0 + i];
      crops.push_back(crop(lr, t.lr_row, t.lr_col, lr_tile_h, lr_tile_w));
    }
    for (const auto& c : crops) ptrs.push_back(&c);
    const auto pred = generator.forward_eval(stack_images(ptrs), tile_h, tile_w);
    for (std::size_t i = 0; i < nb; ++i) {
      const auto& t = tiles[t0 + i];
      for (std::size_t ch = 0; ch < out.channels(); ++ch) {
        const float* src = pred.channel(i, ch);
        auto dst = out.mutable_plane(ch);
        for (std::size_t y = 0; y < tile_h; ++y) {
          for (std::size_t x = 0; x < tile_w; ++x) {
            dst[(t.row + y) * out_w + t.col + x] = std::clamp(src[y * tile_w + x], 0.0f, 1.0f);
          }
        }
      }
    }
  }
  return out;
}

FlimImage infer(const Generator<float>& generator, const FlimImage& lr_raw, const PreprocessStats& stats,
                std::size_t out_h, std::size_t out_w, std::size_t tile_px) {
  return infer_normalized(generator, preprocess_lr(lr_raw, stats), out_h, out_w, tile_px);
}

}  // namespace flimsr
