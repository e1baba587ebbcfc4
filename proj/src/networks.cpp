#include "flimsr/networks.hpp"

#include <cmath>
#include <stdexcept>

#include "flimsr/rng.hpp"

namespace flimsr {

using nn::ParamStore;

std::array<std::size_t, 4> ForwardTrace::shape_of(const std::string& name) const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    if (it->first == name) return it->second;
  }
  throw std::out_of_range("layer not in trace: " + name);
}

std::vector<std::size_t> UNetSpec::encoder_widths() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < levels; ++i) out.push_back(width(i));
  return out;
}

void UNetSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || base_channels == 0) {
    throw std::invalid_argument("U-Net channel counts must be positive");
  }
  if (levels == 0 || levels > 8) throw std::invalid_argument("U-Net levels must be in 1..8");
  if (convs_per_block == 0) throw std::invalid_argument("convs_per_block must be positive");
  if (time_embed_dim % 2 != 0) throw std::invalid_argument("time_embed_dim must be even");
}

void to_json(nlohmann::json& j, const UNetSpec& s) {
  j = {{"in_channels", s.in_channels},       {"out_channels", s.out_channels},
       {"base_channels", s.base_channels},   {"levels", s.levels},
       {"convs_per_block", s.convs_per_block}, {"time_embed_dim", s.time_embed_dim}};
}

void from_json(const nlohmann::json& j, UNetSpec& s) {
  j.at("in_channels").get_to(s.in_channels);
  j.at("out_channels").get_to(s.out_channels);
  j.at("base_channels").get_to(s.base_channels);
  j.at("levels").get_to(s.levels);
  j.at("convs_per_block").get_to(s.convs_per_block);
  j.at("time_embed_dim").get_to(s.time_embed_dim);
}

std::vector<double> timestep_embedding(double t, std::size_t dim) {
  std::vector<double> out(dim);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(t * freq);
    out[i + half] = std::cos(t * freq);
  }
  return out;
}

namespace {

// Kaiming (fan-in) normal initialization.
template <class T>
void init_kaiming(ParamStore<T>& store, std::size_t offset, std::size_t count, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  T* p = store.value(offset);
  for (std::size_t i = 0; i < count; ++i) p[i] = static_cast<T>(sd * rng.normal());
}

}  // namespace

// ---------------------------------------------------------------------------
// UNet

template <class T>
UNet<T>::UNet(const UNetSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  auto init_block = [&](Block& b) {
    for (auto& u : b.units) init_kaiming(params_, u.weight, u.cout * u.cin * 9, u.cin * 9, rng);
    if (spec_.time_embed_dim > 0) {
      init_kaiming(params_, b.temb_weight, b.cout * spec_.time_embed_dim, spec_.time_embed_dim, rng);
    }
  };

  std::size_t cin = spec_.in_channels;
  for (std::size_t i = 0; i < spec_.levels; ++i) {
    enc_.push_back(make_block("enc" + std::to_string(i), cin, spec_.width(i)));
    init_block(enc_.back());
    cin = spec_.width(i);
  }
  mid_ = make_block("mid", cin, cin);
  init_block(mid_);
  dec_.resize(spec_.levels);
  for (std::size_t i = spec_.levels; i-- > 0;) {
    const std::size_t up = i + 1 == spec_.levels ? spec_.width(i) : spec_.width(i + 1);
    dec_[i] = make_block("dec" + std::to_string(i), up + spec_.width(i), spec_.width(i));
    init_block(dec_[i]);
  }
  final_weight_ = params_.add("out.weight", {spec_.out_channels, spec_.width(0), 3, 3});
  final_bias_ = params_.add("out.bias", {spec_.out_channels});
  init_kaiming(params_, final_weight_, spec_.out_channels * spec_.width(0) * 9, spec_.width(0) * 9, rng);
}

template <class T>
typename UNet<T>::Block UNet<T>::make_block(const std::string& name, std::size_t cin, std::size_t cout) {
  Block b;
  b.cin = cin;
  b.cout = cout;
  for (std::size_t u = 0; u < spec_.convs_per_block; ++u) {
    const std::string prefix = name + ".conv" + std::to_string(u);
    Unit unit;
    unit.cin = u == 0 ? cin : cout;
    unit.cout = cout;
    unit.weight = params_.add(prefix + ".weight", {cout, unit.cin, 3, 3});
    unit.bias = params_.add(prefix + ".bias", {cout});
    unit.gamma = params_.add(prefix + ".bn.gamma", {cout}, T(1));
    unit.beta = params_.add(prefix + ".bn.beta", {cout});
    unit.running_mean = buffers_.add(prefix + ".bn.running_mean", {cout});
    unit.running_var = buffers_.add(prefix + ".bn.running_var", {cout}, T(1));
    b.units.push_back(unit);
  }
  if (spec_.time_embed_dim > 0) {
    b.temb_weight = params_.add(name + ".temb.weight", {cout, spec_.time_embed_dim});
    b.temb_bias = params_.add(name + ".temb.bias", {cout});
  }
  return b;
}

template <class T>
void UNet<T>::check_input(const Tensor<T>& x) const {
  if (x.c != spec_.in_channels) {
    throw std::invalid_argument("U-Net expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                                std::to_string(x.c));
  }
  if (x.h % spec_.size_multiple() != 0 || x.w % spec_.size_multiple() != 0 || x.h == 0 || x.w == 0) {
    throw std::invalid_argument("U-Net spatial size must be a positive multiple of " +
                                std::to_string(spec_.size_multiple()));
  }
  if (!x.all_finite()) throw std::invalid_argument("non-finite input");
}

template <class T>
std::vector<std::vector<double>> UNet<T>::embed(const Tensor<T>& x, const std::vector<double>& steps) const {
  if (spec_.time_embed_dim == 0) return {};
  if (steps.size() != x.n) throw std::invalid_argument("time-conditioned U-Net needs one step per sample");
  std::vector<std::vector<double>> emb;
  for (double t : steps) emb.push_back(timestep_embedding(t, spec_.time_embed_dim));
  return emb;
}

template <class T>
std::vector<T> UNet<T>::time_bias(const Block& b, const std::vector<std::vector<double>>& emb) const {
  const std::size_t dim = spec_.time_embed_dim;
  std::vector<T> out(emb.size() * b.cout);
  const T* w = params_.value(b.temb_weight);
  const T* bias = params_.value(b.temb_bias);
  for (std::size_t i = 0; i < emb.size(); ++i) {
    for (std::size_t c = 0; c < b.cout; ++c) {
      double s = bias[c];
      for (std::size_t e = 0; e < dim; ++e) s += static_cast<double>(w[c * dim + e]) * emb[i][e];
      out[i * b.cout + c] = static_cast<T>(s);
    }
  }
  return out;
}

template <class T>
Tensor<T> UNet<T>::block_eval(const Block& b, const Tensor<T>& x, const std::vector<std::vector<double>>& emb) const {
  Tensor<T> h = x;
  for (std::size_t u = 0; u < b.units.size(); ++u) {
    const Unit& unit = b.units[u];
    auto z = nn::conv3x3_forward(h, params_.value(unit.weight), params_.value(unit.bias), unit.cout, 1);
    h = nn::batchnorm_forward_eval(z, params_.value(unit.gamma), params_.value(unit.beta),
                                   buffers_.value(unit.running_mean), buffers_.value(unit.running_var));
    nn::relu_inplace(h);
    if (u == 0 && !emb.empty()) nn::add_channel_bias(h, time_bias(b, emb));
  }
  if (b.cin <= b.cout) nn::add_zero_padded(h, x);
  return h;
}

template <class T>
Tensor<T> UNet<T>::block_train(const Block& b, const Tensor<T>& x, const std::vector<std::vector<double>>& emb,
                               BlockCache& cache) {
  cache.units.assign(b.units.size(), {});
  Tensor<T> h = x;
  for (std::size_t u = 0; u < b.units.size(); ++u) {
    const Unit& unit = b.units[u];
    auto& uc = cache.units[u];
    uc.x = std::move(h);
    auto z = nn::conv3x3_forward(uc.x, params_.value(unit.weight), params_.value(unit.bias), unit.cout, 1);
    h = nn::batchnorm_forward_train(z, params_.value(unit.gamma), params_.value(unit.beta),
                                    buffers_.value(unit.running_mean), buffers_.value(unit.running_var), uc.bn);
    nn::relu_inplace(h);
    uc.a = h;
    if (u == 0 && !emb.empty()) nn::add_channel_bias(h, time_bias(b, emb));
  }
  if (b.cin <= b.cout) nn::add_zero_padded(h, x);
  return h;
}

template <class T>
Tensor<T> UNet<T>::block_backward(const Block& b, const BlockCache& cache, const Tensor<T>& grad_out,
                                  const std::vector<std::vector<double>>& emb) {
  Tensor<T> g = grad_out;
  for (std::size_t u = b.units.size(); u-- > 0;) {
    const Unit& unit = b.units[u];
    const auto& uc = cache.units[u];
    if (u == 0 && !emb.empty()) {
      const std::size_t dim = spec_.time_embed_dim;
      T* gw = params_.grad(b.temb_weight);
      T* gb = params_.grad(b.temb_bias);
      for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t c = 0; c < g.c; ++c) {
          const T* p = g.channel(i, c);
          double s = 0.0;
          for (std::size_t j = 0; j < g.plane(); ++j) s += p[j];
          gb[c] += static_cast<T>(s);
          for (std::size_t e = 0; e < dim; ++e) gw[c * dim + e] += static_cast<T>(s * emb[i][e]);
        }
      }
    }
    g = nn::relu_backward(uc.a, g);
    g = nn::batchnorm_backward(uc.bn, g, params_.value(unit.gamma), params_.grad(unit.gamma),
                               params_.grad(unit.beta));
    g = nn::conv3x3_backward(uc.x, g, params_.value(unit.weight), params_.grad(unit.weight),
                             params_.grad(unit.bias), 1);
  }
  if (b.cin <= b.cout) {
    for (std::size_t i = 0; i < g.n; ++i) {
      const T* src = grad_out.sample(i);
      T* dst = g.sample(i);
      for (std::size_t j = 0; j < g.sample_size(); ++j) dst[j] += src[j];
    }
  }
  return g;
}

template <class T>
Tensor<T> UNet<T>::forward_eval(const Tensor<T>& x, const std::vector<double>& steps, ForwardTrace* trace) const {
  check_input(x);
  const auto emb = embed(x, steps);
  std::vector<Tensor<T>> skips;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < spec_.levels; ++i) {
    h = block_eval(enc_[i], h, emb);
    if (trace) trace->record("enc" + std::to_string(i), h.n, h.c, h.h, h.w);
    skips.push_back(h);
    h = nn::avgpool2_forward(h);
  }
  h = block_eval(mid_, h, emb);
  if (trace) trace->record("mid", h.n, h.c, h.h, h.w);
  for (std::size_t i = spec_.levels; i-- > 0;) {
    const auto& skip = skips[i];
    auto up = nn::resize_forward(h, skip.h, skip.w);
    h = block_eval(dec_[i], nn::concat_channels(up, skip), emb);
    if (trace) trace->record("dec" + std::to_string(i), h.n, h.c, h.h, h.w);
    skips[i] = {};
  }
  auto out = nn::conv3x3_forward(h, params_.value(final_weight_), params_.value(final_bias_), spec_.out_channels, 1);
  if (trace) trace->record("out", out.n, out.c, out.h, out.w);
  return out;
}

template <class T>
Tensor<T> UNet<T>::forward_train(const Tensor<T>& x, const std::vector<double>& steps) {
  check_input(x);
  cache_ = {};
  cache_.emb = embed(x, steps);
  const auto& emb = cache_.emb;
  cache_.enc.resize(spec_.levels);
  cache_.dec.resize(spec_.levels);
  cache_.enc_hw.resize(spec_.levels);
  cache_.up_channels.resize(spec_.levels);
  cache_.up_from_hw.resize(spec_.levels);

  std::vector<Tensor<T>> skips;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < spec_.levels; ++i) {
    h = block_train(enc_[i], h, emb, cache_.enc[i]);
    cache_.enc_hw[i] = {h.h, h.w};
    skips.push_back(h);
    h = nn::avgpool2_forward(h);
  }
  h = block_train(mid_, h, emb, cache_.mid);
  for (std::size_t i = spec_.levels; i-- > 0;) {
    const auto& skip = skips[i];
    cache_.up_channels[i] = h.c;
    cache_.up_from_hw[i] = {h.h, h.w};
    auto up = nn::resize_forward(h, skip.h, skip.w);
    h = block_train(dec_[i], nn::concat_channels(up, skip), emb, cache_.dec[i]);
    skips[i] = {};
  }
  cache_.final_in = h;
  return nn::conv3x3_forward(h, params_.value(final_weight_), params_.value(final_bias_), spec_.out_channels, 1);
}

template <class T>
Tensor<T> UNet<T>::backward(const Tensor<T>& grad_out) {
  if (cache_.enc.empty()) throw std::logic_error("U-Net backward without a training forward pass");
  const auto& emb = cache_.emb;
  Tensor<T> g = nn::conv3x3_backward(cache_.final_in, grad_out, params_.value(final_weight_),
                                     params_.grad(final_weight_), params_.grad(final_bias_), 1);
  std::vector<Tensor<T>> grad_skips(spec_.levels);
  for (std::size_t i = 0; i < spec_.levels; ++i) {
    auto g_cat = block_backward(dec_[i], cache_.dec[i], g, emb);
    Tensor<T> g_up;
    nn::split_channels(g_cat, cache_.up_channels[i], g_up, grad_skips[i]);
    g = nn::resize_backward(g_up, cache_.up_from_hw[i][0], cache_.up_from_hw[i][1]);
  }
  g = block_backward(mid_, cache_.mid, g, emb);
  for (std::size_t i = spec_.levels; i-- > 0;) {
    auto g_out = nn::avgpool2_backward(g, cache_.enc_hw[i][0], cache_.enc_hw[i][1]);
    for (std::size_t j = 0; j < g_out.size(); ++j) g_out.data[j] += grad_skips[i].data[j];
    g = block_backward(enc_[i], cache_.enc[i], g_out, emb);
  }
  return g;
}

template class UNet<float>;
template class UNet<double>;

// ---------------------------------------------------------------------------
// Generator

template <class T>
Tensor<T> Generator<T>::forward_eval(const Tensor<T>& lr, std::size_t out_h, std::size_t out_w,
                                     ForwardTrace* trace) const {
  if (!lr.all_finite()) throw std::invalid_argument("non-finite input");
  auto x = nn::resize_forward(lr, out_h, out_w);
  if (trace) trace->record("resize", x.n, x.c, x.h, x.w);
  return unet_.forward_eval(x, {}, trace);
}

template <class T>
Tensor<T> Generator<T>::forward_train(const Tensor<T>& lr, std::size_t out_h, std::size_t out_w) {
  if (!lr.all_finite()) throw std::invalid_argument("non-finite input");
  return unet_.forward_train(nn::resize_forward(lr, out_h, out_w));
}

template class Generator<float>;
template class Generator<double>;

// ---------------------------------------------------------------------------
// Discriminator

std::vector<std::size_t> DiscriminatorSpec::block_widths() const {
  std::vector<std::size_t> out;
  for (std::size_t b = 1; b <= blocks; ++b) out.push_back(base_channels << b);
  return out;
}

void DiscriminatorSpec::validate() const {
  if (in_channels == 0 || base_channels == 0 || hidden == 0 || pool_size == 0) {
    throw std::invalid_argument("discriminator sizes must be positive");
  }
  if (blocks == 0 || blocks > 8) throw std::invalid_argument("discriminator blocks must be in 1..8");
}

void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
  j = {{"in_channels", s.in_channels}, {"base_channels", s.base_channels}, {"blocks", s.blocks},
       {"pool_size", s.pool_size},     {"hidden", s.hidden}};
}

void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
  j.at("in_channels").get_to(s.in_channels);
  j.at("base_channels").get_to(s.base_channels);
  j.at("blocks").get_to(s.blocks);
  j.at("pool_size").get_to(s.pool_size);
  j.at("hidden").get_to(s.hidden);
}

template <class T>
Discriminator<T>::Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  auto add_conv = [&](const std::string& name, std::size_t cin, std::size_t cout, int stride, bool norm) {
    Conv c;
    c.cin = cin;
    c.cout = cout;
    c.stride = stride;
    c.norm = norm;
    c.weight = params_.add(name + ".weight", {cout, cin, 3, 3});
    c.bias = params_.add(name + ".bias", {cout});
    if (norm) {
      c.gamma = params_.add(name + ".bn.gamma", {cout}, T(1));
      c.beta = params_.add(name + ".bn.beta", {cout});
      c.running_mean = buffers_.add(name + ".bn.running_mean", {cout});
      c.running_var = buffers_.add(name + ".bn.running_var", {cout}, T(1));
    }
    init_kaiming(params_, c.weight, cout * cin * 9, cin * 9, rng);
    convs_.push_back(c);
  };
  add_conv("initial", spec_.in_channels, spec_.base_channels, 1, false);
  std::size_t c = spec_.base_channels;
  for (std::size_t b = 0; b < spec_.blocks; ++b) {
    const std::string name = "block" + std::to_string(b + 1);
    add_conv(name + ".conv0", c, c, 1, true);
    add_conv(name + ".conv1", c, 2 * c, 2, true);
    c *= 2;
  }
  const std::size_t flat = c * spec_.pool_size * spec_.pool_size;
  fc1_weight_ = params_.add("fc1.weight", {spec_.hidden, flat});
  fc1_bias_ = params_.add("fc1.bias", {spec_.hidden});
  fc2_weight_ = params_.add("fc2.weight", {1, spec_.hidden});
  fc2_bias_ = params_.add("fc2.bias", {1});
  init_kaiming(params_, fc1_weight_, spec_.hidden * flat, flat, rng);
  init_kaiming(params_, fc2_weight_, spec_.hidden, spec_.hidden, rng);
}

template <class T>
void Discriminator<T>::check_input(const Tensor<T>& x) const {
  if (x.c != spec_.in_channels) throw std::invalid_argument("discriminator channel count mismatch");
  if (x.h == 0 || x.w == 0 || x.h % spec_.size_multiple() != 0 || x.w % spec_.size_multiple() != 0) {
    throw std::invalid_argument("discriminator input size must be a positive multiple of " +
                                std::to_string(spec_.size_multiple()));
  }
  if (!x.all_finite()) throw std::invalid_argument("non-finite input");
}

template <class T>
std::vector<T> Discriminator<T>::logits_eval(const Tensor<T>& x, ForwardTrace* trace) const {
  check_input(x);
  Tensor<T> h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const Conv& c = convs_[i];
    h = nn::conv3x3_forward(h, params_.value(c.weight), params_.value(c.bias), c.cout, c.stride);
    if (c.norm) {
      h = nn::batchnorm_forward_eval(h, params_.value(c.gamma), params_.value(c.beta),
                                     buffers_.value(c.running_mean), buffers_.value(c.running_var));
    }
    nn::relu_inplace(h);
    if (trace) {
      const std::string name = i == 0 ? "initial" : "block" + std::to_string((i + 1) / 2) + ".conv" + std::to_string((i + 1) % 2);
      trace->record(name, h.n, h.c, h.h, h.w);
    }
  }
  auto pooled = nn::adaptive_avgpool_forward(h, spec_.pool_size);
  if (trace) trace->record("pool", pooled.n, pooled.c, pooled.h, pooled.w);
  auto hidden = nn::linear_forward(pooled, params_.value(fc1_weight_), params_.value(fc1_bias_), spec_.hidden);
  nn::relu_inplace(hidden);
  auto logits = nn::linear_forward(hidden, params_.value(fc2_weight_), params_.value(fc2_bias_), 1);
  if (trace) trace->record("logit", logits.n, logits.c, logits.h, logits.w);
  return logits.data;
}

template <class T>
std::vector<T> Discriminator<T>::scores_eval(const Tensor<T>& x) const {
  auto out = logits_eval(x);
  for (auto& v : out) v = sigmoid(v);
  return out;
}

template <class T>
std::vector<T> Discriminator<T>::logits_train(const Tensor<T>& x) {
  check_input(x);
  conv_cache_.assign(convs_.size(), {});
  Tensor<T> h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const Conv& c = convs_[i];
    auto& cc = conv_cache_[i];
    cc.x = std::move(h);
    h = nn::conv3x3_forward(cc.x, params_.value(c.weight), params_.value(c.bias), c.cout, c.stride);
    if (c.norm) {
      h = nn::batchnorm_forward_train(h, params_.value(c.gamma), params_.value(c.beta),
                                      buffers_.value(c.running_mean), buffers_.value(c.running_var), cc.bn);
    }
    nn::relu_inplace(h);
    cc.a = h;
  }
  pool_in_hw_ = {h.h, h.w};
  pooled_ = nn::adaptive_avgpool_forward(h, spec_.pool_size);
  hidden_ = nn::linear_forward(pooled_, params_.value(fc1_weight_), params_.value(fc1_bias_), spec_.hidden);
  nn::relu_inplace(hidden_);
  return nn::linear_forward(hidden_, params_.value(fc2_weight_), params_.value(fc2_bias_), 1).data;
}

template <class T>
Tensor<T> Discriminator<T>::backward(const std::vector<T>& grad_logits) {
  if (conv_cache_.empty()) throw std::logic_error("discriminator backward without a training forward pass");
  Tensor<T> g(grad_logits.size(), 1, 1, 1);
  g.data = grad_logits;
  g = nn::linear_backward(hidden_, g, params_.value(fc2_weight_), params_.grad(fc2_weight_), params_.grad(fc2_bias_));
  g = nn::relu_backward(hidden_, g);
  g = nn::linear_backward(pooled_, g, params_.value(fc1_weight_), params_.grad(fc1_weight_), params_.grad(fc1_bias_));
  g = nn::adaptive_avgpool_backward(g, pool_in_hw_[0], pool_in_hw_[1]);
  for (std::size_t i = convs_.size(); i-- > 0;) {
    const Conv& c = convs_[i];
    const auto& cc = conv_cache_[i];
    g = nn::relu_backward(cc.a, g);
    if (c.norm) {
      g = nn::batchnorm_backward(cc.bn, g, params_.value(c.gamma), params_.grad(c.gamma), params_.grad(c.beta));
    }
    g = nn::conv3x3_backward(cc.x, g, params_.value(c.weight), params_.grad(c.weight), params_.grad(c.bias),
                             c.stride);
  }
  return g;
}

template class Discriminator<float>;
template class Discriminator<double>;

Generator<float> build_generator(std::uint64_t seed, const GeneratorSpec& spec) { return Generator<float>(spec, seed); }

Discriminator<float> build_discriminator(std::uint64_t seed, const DiscriminatorSpec& spec) {
  return Discriminator<float>(spec, seed);
}

}  // namespace flimsr
