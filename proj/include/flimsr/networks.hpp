#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flimsr/nn/ops.hpp"
#include "flimsr/nn/params.hpp"
#include "flimsr/nn/tensor.hpp"

namespace flimsr {

using nn::Tensor;

/// Per-layer output shapes recorded by a forward pass.
struct ForwardTrace {
  std::vector<std::pair<std::string, std::array<std::size_t, 4>>> layers;

  void record(const std::string& name, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    layers.push_back({name, {n, c, h, w}});
  }
  /// Shape of the last layer whose name matches exactly; throws if absent.
  std::array<std::size_t, 4> shape_of(const std::string& name) const;
};

/// U-Net topology shared by the generator and the diffusion denoiser.
///
/// Encoder level i has width base * 2^i and is followed by 2x2 average pooling;
/// a bottleneck block keeps the deepest width; decoder level i upsamples the
/// previous output (bilinear x2), concatenates the level-i encoder output and
/// maps back to width base * 2^i. A final 3x3 conv produces out_channels.
/// Every block is convs_per_block x (3x3 conv, batch norm, ReLU) plus a residual
/// of the block input zero-padded along channels (omitted when the block
/// narrows, i.e. in decoder blocks).
struct UNetSpec {
  std::size_t in_channels = 6;
  std::size_t out_channels = 6;
  std::size_t base_channels = 64;
  std::size_t levels = 4;
  std::size_t convs_per_block = 3;
  std::size_t time_embed_dim = 0;  // 0 disables time conditioning

  std::size_t width(std::size_t level) const { return base_channels << level; }
  std::vector<std::size_t> encoder_widths() const;
  /// Spatial sizes must be divisible by this.
  std::size_t size_multiple() const { return std::size_t{1} << levels; }
  void validate() const;
};

void to_json(nlohmann::json& j, const UNetSpec& s);
void from_json(const nlohmann::json& j, UNetSpec& s);

/// Sinusoidal embedding of a diffusion step: [sin(t f_i), cos(t f_i)], f_i = 10000^(-i/(dim/2)).
std::vector<double> timestep_embedding(double t, std::size_t dim);

template <class T>
class UNet {
 public:
  UNet() = default;
  UNet(const UNetSpec& spec, std::uint64_t seed);

  const UNetSpec& spec() const { return spec_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }
  nn::ParamStore<T>& buffers() { return buffers_; }
  const nn::ParamStore<T>& buffers() const { return buffers_; }

  /// Evaluation mode (running batch-norm statistics); pure. `steps` gives one
  /// diffusion step per sample when time conditioning is enabled.
  Tensor<T> forward_eval(const Tensor<T>& x, const std::vector<double>& steps = {},
                         ForwardTrace* trace = nullptr) const;

  /// Training mode: batch statistics, updates running statistics, caches activations.
  Tensor<T> forward_train(const Tensor<T>& x, const std::vector<double>& steps = {});

  /// Backpropagates through the cached training pass; accumulates parameter
  /// gradients and returns dL/dx.
  Tensor<T> backward(const Tensor<T>& grad_out);

 private:
  struct Unit {
    std::size_t cin = 0, cout = 0;
    std::size_t weight = 0, bias = 0, gamma = 0, beta = 0;
    std::size_t running_mean = 0, running_var = 0;
  };
  struct Block {
    std::size_t cin = 0, cout = 0;
    std::vector<Unit> units;
    std::size_t temb_weight = 0, temb_bias = 0;
  };
  struct UnitCache {
    Tensor<T> x;
    nn::BatchNormCache<T> bn;
    Tensor<T> a;
  };
  struct BlockCache {
    std::vector<UnitCache> units;
  };
  struct Cache {
    std::vector<std::vector<double>> emb;
    std::vector<BlockCache> enc;
    std::vector<std::array<std::size_t, 2>> enc_hw;
    BlockCache mid;
    std::vector<BlockCache> dec;  // dec[i] is decoder level i
    std::vector<std::size_t> up_channels;
    std::vector<std::array<std::size_t, 2>> up_from_hw;
    Tensor<T> final_in;
  };

  Block make_block(const std::string& name, std::size_t cin, std::size_t cout);
  std::vector<T> time_bias(const Block& b, const std::vector<std::vector<double>>& emb) const;
  Tensor<T> block_eval(const Block& b, const Tensor<T>& x, const std::vector<std::vector<double>>& emb) const;
  Tensor<T> block_train(const Block& b, const Tensor<T>& x, const std::vector<std::vector<double>>& emb,
                        BlockCache& cache);
  Tensor<T> block_backward(const Block& b, const BlockCache& cache, const Tensor<T>& grad_out,
                           const std::vector<std::vector<double>>& emb);
  std::vector<std::vector<double>> embed(const Tensor<T>& x, const std::vector<double>& steps) const;
  void check_input(const Tensor<T>& x) const;

  UNetSpec spec_;
  nn::ParamStore<T> params_;
  nn::ParamStore<T> buffers_;
  std::vector<Block> enc_;
  Block mid_;
  std::vector<Block> dec_;
  std::size_t final_weight_ = 0, final_bias_ = 0;
  Cache cache_;
};

/// Generator architecture: bilinear front-end to the target size, then a U-Net.
struct GeneratorSpec {
  UNetSpec unet;  // defaults: 6 -> 6 channels, base 64, 4 levels, 3 convs per block
};

/// Super-resolution generator. The bilinear front-end has no parameters.
template <class T>
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorSpec& spec, std::uint64_t seed) : spec_(spec), unet_(spec.unet, seed) {}

  const GeneratorSpec& spec() const { return spec_; }
  UNet<T>& unet() { return unet_; }
  const UNet<T>& unet() const { return unet_; }

  /// lr is N x 6 x m x n; output is N x 6 x out_h x out_w.
  Tensor<T> forward_eval(const Tensor<T>& lr, std::size_t out_h, std::size_t out_w,
                         ForwardTrace* trace = nullptr) const;
  Tensor<T> forward_train(const Tensor<T>& lr, std::size_t out_h, std::size_t out_w);
  /// Accumulates parameter gradients; the gradient w.r.t. the LR input is not needed.
  void backward(const Tensor<T>& grad_out) { unet_.backward(grad_out); }

 private:
  GeneratorSpec spec_;
  UNet<T> unet_;
};

/// Discriminator: initial conv (+ReLU), `blocks` x [conv keeping width, conv
/// doubling width with stride 2], each followed by batch norm and ReLU; then
/// adaptive average pooling to pool x pool, FC -> ReLU -> FC -> sigmoid.
struct DiscriminatorSpec {
  std::size_t in_channels = 6;
  std::size_t base_channels = 64;
  std::size_t blocks = 5;
  std::size_t pool_size = 4;
  std::size_t hidden = 1024;

  std::vector<std::size_t> block_widths() const;
  std::size_t size_multiple() const { return std::size_t{1} << blocks; }
  void validate() const;
};

void to_json(nlohmann::json& j, const DiscriminatorSpec& s);
void from_json(const nlohmann::json& j, DiscriminatorSpec& s);

template <class T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

  const DiscriminatorSpec& spec() const { return spec_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }
  nn::ParamStore<T>& buffers() { return buffers_; }
  const nn::ParamStore<T>& buffers() const { return buffers_; }

  /// Pre-sigmoid logits, one per sample (evaluation mode).
  std::vector<T> logits_eval(const Tensor<T>& x, ForwardTrace* trace = nullptr) const;
  /// Scores sigmoid(logit) in (0, 1) (evaluation mode).
  std::vector<T> scores_eval(const Tensor<T>& x) const;

  /// Training-mode logits with cached activations.
  std::vector<T> logits_train(const Tensor<T>& x);
  /// Backpropagates dL/dlogit; accumulates parameter gradients, returns dL/dx.
  Tensor<T> backward(const std::vector<T>& grad_logits);

 private:
  struct Conv {
    std::size_t cin = 0, cout = 0;
    int stride = 1;
    std::size_t weight = 0, bias = 0;
    bool norm = true;
    std::size_t gamma = 0, beta = 0, running_mean = 0, running_var = 0;
  };
  struct ConvCache {
    Tensor<T> x;
    nn::BatchNormCache<T> bn;
    Tensor<T> a;
  };

  void check_input(const Tensor<T>& x) const;

  DiscriminatorSpec spec_;
  nn::ParamStore<T> params_;
  nn::ParamStore<T> buffers_;
  std::vector<Conv> convs_;
  std::size_t fc1_weight_ = 0, fc1_bias_ = 0, fc2_weight_ = 0, fc2_bias_ = 0;

  std::vector<ConvCache> conv_cache_;
  Tensor<T> pooled_, hidden_;
  std::array<std::size_t, 2> pool_in_hw_{};
};

template <class T>
T sigmoid(T z) {
  return z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}

Generator<float> build_generator(std::uint64_t seed, const GeneratorSpec& spec = {});
Discriminator<float> build_discriminator(std::uint64_t seed, const DiscriminatorSpec& spec = {});

}  // namespace flimsr
