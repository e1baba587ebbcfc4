#include <doctest.h>

#include <cmath>
#include <limits>

#include "flimsr/networks.hpp"
#include "support.hpp"

using namespace flimsr;

namespace {

// Parameter count written out layer by layer from the declared topology.
std::size_t closed_form_unet_count(const UNetSpec& s) {
  auto conv = [](std::size_t cin, std::size_t cout) { return cin * cout * 9 + cout; };
  auto block = [&](std::size_t cin, std::size_t cout) {
    std::size_t n = conv(cin, cout) + 2 * cout;
    n += (s.convs_per_block - 1) * (conv(cout, cout) + 2 * cout);
    if (s.time_embed_dim) n += cout * s.time_embed_dim + cout;
    return n;
  };
  std::size_t total = 0;
  std::size_t cin = s.in_channels;
  for (std::size_t i = 0; i < s.levels; ++i) {
    const std::size_t w = s.base_channels << i;
    total += block(cin, w);
    cin = w;
  }
  total += block(cin, cin);
  for (std::size_t i = 0; i < s.levels; ++i) {
    const std::size_t w = s.base_channels << i;
    const std::size_t up = i + 1 == s.levels ? w : (s.base_channels << (i + 1));
    total += block(up + w, w);
  }
  return total + conv(s.base_channels, s.out_channels);
}

std::size_t closed_form_disc_count(const DiscriminatorSpec& s) {
  auto conv = [](std::size_t cin, std::size_t cout) { return cin * cout * 9 + cout; };
  std::size_t total = conv(s.in_channels, s.base_channels);
  std::size_t c = s.base_channels;
  for (std::size_t b = 0; b < s.blocks; ++b) {
    total += conv(c, c) + 2 * c + conv(c, 2 * c) + 4 * c;
    c *= 2;
  }
  const std::size_t flat = c * s.pool_size * s.pool_size;
  return total + flat * s.hidden + s.hidden + s.hidden + 1;
}

template <class Net>
double weighted_sum(const nn::Tensor<double>& out, const nn::Tensor<double>& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.data[i] * weights.data[i];
  return s;
}

}  // namespace

TEST_CASE("generator encoder widths double from 64") {
  GeneratorSpec spec;
  CHECK(spec.unet.encoder_widths() == std::vector<std::size_t>{64, 128, 256, 512});
}

TEST_CASE("parameter counts match the closed form") {
  UNetSpec small{6, 6, 8, 2, 3, 0};
  CHECK(UNet<float>(small, 1).params().size() == closed_form_unet_count(small));
  UNetSpec timed{12, 6, 8, 2, 3, 16};
  CHECK(UNet<float>(timed, 1).params().size() == closed_form_unet_count(timed));
  const auto gen = build_generator(3);
  CHECK(gen.unet().params().size() == closed_form_unet_count(GeneratorSpec{}.unet));

  DiscriminatorSpec ds{6, 8, 3, 4, 32};
  CHECK(Discriminator<float>(ds, 2).params().size() == closed_form_disc_count(ds));
}

TEST_CASE("construction is deterministic per seed") {
  UNetSpec spec{6, 6, 16, 3, 3, 0};
  UNet<float> a(spec, 42), b(spec, 42), c(spec, 43);
  CHECK(std::equal(a.params().values().begin(), a.params().values().end(), b.params().values().begin()));
  CHECK_FALSE(std::equal(a.params().values().begin(), a.params().values().end(), c.params().values().begin()));

  DiscriminatorSpec ds{6, 8, 5, 4, 64};
  Discriminator<float> d1(ds, 7), d2(ds, 7);
  CHECK(std::equal(d1.params().values().begin(), d1.params().values().end(), d2.params().values().begin()));
}

TEST_CASE("generator output shapes") {
  GeneratorSpec spec;
  spec.unet.base_channels = 8;
  Generator<float> gen(spec, 5);
  auto lr = test::random_tensor<float>(1, 6, 32, 32, 1);
  auto out = gen.forward_eval(lr, 64, 64);
  CHECK(out.c == 6);
  CHECK(out.h == 64);
  CHECK(out.w == 64);

  auto lr51 = test::random_tensor<float>(1, 6, 51, 51, 2);
  auto out256 = gen.forward_eval(lr51, 256, 256);
  CHECK(out256.shape_string() == "1x6x256x256");
}

TEST_CASE("full-width generator maps 51x51 to 256x256 with bounded finite output") {
  const auto gen = build_generator(11);
  auto lr = test::random_tensor<float>(1, 6, 51, 51, 3);
  ForwardTrace trace;
  auto out = gen.forward_eval(lr, 256, 256, &trace);
  CHECK(out.shape_string() == "1x6x256x256");
  CHECK(out.all_finite());
  float max_abs = 0.0f;
  for (float v : out.data) max_abs = std::max(max_abs, std::fabs(v));
  CHECK(max_abs < 1e3f);
  CHECK(trace.shape_of("enc3")[1] == 512);
  CHECK(trace.shape_of("enc3")[2] == 32);
}

TEST_CASE("generator rejects non-finite input and incompatible target sizes") {
  GeneratorSpec spec;
  spec.unet.base_channels = 4;
  Generator<float> gen(spec, 1);
  auto lr = test::random_tensor<float>(1, 6, 8, 8, 1);
  lr.data[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(gen.forward_eval(lr, 32, 32), "non-finite input", std::invalid_argument);
  auto ok = test::random_tensor<float>(1, 6, 8, 8, 1);
  CHECK_THROWS_AS(gen.forward_eval(ok, 30, 30), std::invalid_argument);
  auto five = test::random_tensor<float>(1, 5, 8, 8, 1);
  CHECK_THROWS_AS(gen.forward_eval(five, 32, 32), std::invalid_argument);
}

TEST_CASE("evaluation-mode forward is bit-reproducible") {
  UNetSpec spec{6, 6, 8, 2, 3, 0};
  UNet<float> net(spec, 9);
  // Populate running statistics with one training pass first.
  net.forward_train(test::random_tensor<float>(2, 6, 16, 16, 4));
  auto x = test::random_tensor<float>(1, 6, 16, 16, 5);
  auto a = net.forward_eval(x);
  auto b = net.forward_eval(x);
  CHECK(a.data == b.data);
}

TEST_CASE("zero-padded residual keeps the block input in the leading channels") {
  auto x = test::random_tensor<float>(2, 3, 4, 4, 8);
  nn::Tensor<float> y(2, 5, 4, 4);
  nn::add_zero_padded(y, x);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < 16; ++j) CHECK(y.channel(i, c)[j] == x.channel(i, c)[j]);
    }
    for (std::size_t c = 3; c < 5; ++c) {
      for (std::size_t j = 0; j < 16; ++j) CHECK(y.channel(i, c)[j] == 0.0f);
    }
  }
  nn::Tensor<float> narrow(2, 2, 4, 4);
  CHECK_THROWS_AS(nn::add_zero_padded(narrow, x), std::invalid_argument);
}

TEST_CASE("discriminator widths, halving and score range") {
  DiscriminatorSpec spec;
  CHECK(spec.block_widths() == std::vector<std::size_t>{128, 256, 512, 1024, 2048});
  const auto disc = build_discriminator(21);
  auto patch = test::random_tensor<float>(1, 6, 256, 256, 6);
  ForwardTrace trace;
  const auto logits = disc.logits_eval(patch, &trace);
  const auto last = trace.shape_of("block5.conv1");
  CHECK(last[1] == 2048);
  CHECK(last[2] == 8);
  CHECK(last[3] == 8);
  const auto scores = disc.scores_eval(patch);
  REQUIRE(scores.size() == 1);
  CHECK(scores[0] > 0.0f);
  CHECK(scores[0] < 1.0f);
  CHECK(std::fabs(scores[0] - sigmoid(logits[0])) < 1e-6f);
  CHECK(disc.scores_eval(patch) == scores);
}

TEST_CASE("discriminator rejects bad input") {
  DiscriminatorSpec spec{6, 4, 5, 4, 16};
  Discriminator<float> disc(spec, 1);
  CHECK_THROWS_AS(disc.logits_eval(test::random_tensor<float>(1, 6, 48, 48, 1)), std::invalid_argument);
  auto bad = test::random_tensor<float>(1, 6, 32, 32, 1);
  bad.data[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(disc.logits_eval(bad), std::invalid_argument);
}

TEST_CASE("sigmoid is stable at extreme logits") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) <= 1.0);
  CHECK(std::isfinite(sigmoid(-800.0)));
}

namespace {

// Small step keeps perturbations from crossing ReLU kinks next to batch-normalized zeros.
constexpr double kStep = 1e-6;
constexpr double kFloor = 1e-4;

// Central differences on `samples` random parameters of a double-precision network.
template <class ForwardFn>
double max_gradient_error(nn::ParamStore<double>& params, ForwardFn&& loss, std::size_t samples,
                          std::uint64_t seed) {
  Rng rng(seed);
  const double h = kStep;
  double worst = 0.0;
  auto values = params.values();
  const std::vector<double> analytic(params.grads().begin(), params.grads().end());
  for (std::size_t s = 0; s < samples; ++s) {
    const auto idx = static_cast<std::size_t>(rng.below(values.size()));
    const double saved = values[idx];
    values[idx] = saved + h;
    const double up = loss();
    values[idx] = saved - h;
    const double down = loss();
    values[idx] = saved;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, test::relative_error(analytic[idx], numeric, kFloor));
  }
  return worst;
}

}  // namespace

TEST_CASE("U-Net parameter gradients match central differences") {
  UNetSpec spec{6, 6, 8, 2, 3, 0};
  UNet<double> net(spec, 31);
  const auto x = test::random_tensor<double>(2, 6, 32, 32, 32);
  const auto w = test::random_tensor<double>(2, 6, 32, 32, 33, -1.0, 1.0);
  net.params().zero_grad();
  net.forward_train(x);
  net.backward(w);
  auto loss = [&] { return weighted_sum<UNet<double>>(net.forward_train(x), w); };
  CHECK(max_gradient_error(net.params(), loss, 100, 34) < 1e-3);
}

TEST_CASE("time-conditioned U-Net gradients match central differences") {
  UNetSpec spec{12, 6, 4, 2, 2, 8};
  UNet<double> net(spec, 41);
  const auto x = test::random_tensor<double>(2, 12, 16, 16, 42);
  const auto w = test::random_tensor<double>(2, 6, 16, 16, 43, -1.0, 1.0);
  const std::vector<double> steps = {17.0, 503.0};
  net.params().zero_grad();
  net.forward_train(x, steps);
  net.backward(w);
  auto loss = [&] { return weighted_sum<UNet<double>>(net.forward_train(x, steps), w); };
  CHECK(max_gradient_error(net.params(), loss, 100, 44) < 1e-3);

  // The temb slices specifically.
  const auto& slice = net.params().find("enc1.temb.weight");
  const std::vector<double> analytic(net.params().grads().begin(), net.params().grads().end());
  auto values = net.params().values();
  double worst = 0.0;
  for (std::size_t j = 0; j < 8; ++j) {
    const std::size_t idx = slice.offset + j * 3;
    const double saved = values[idx];
    values[idx] = saved + kStep;
    const double up = loss();
    values[idx] = saved - kStep;
    const double down = loss();
    values[idx] = saved;
    worst = std::max(worst, test::relative_error(analytic[idx], (up - down) / (2 * kStep), kFloor));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("discriminator parameter and input gradients match central differences") {
  DiscriminatorSpec spec{6, 4, 2, 4, 16};
  Discriminator<double> disc(spec, 51);
  auto x = test::random_tensor<double>(3, 6, 16, 16, 52);
  const std::vector<double> w = {0.7, -1.3, 0.4};
  auto loss = [&] {
    const auto z = disc.logits_train(x);
    return w[0] * z[0] + w[1] * z[1] + w[2] * z[2];
  };
  disc.params().zero_grad();
  disc.logits_train(x);
  const auto gx = disc.backward(w);
  CHECK(max_gradient_error(disc.params(), loss, 100, 53) < 1e-3);

  Rng rng(54);
  double worst = 0.0;
  for (int s = 0; s < 30; ++s) {
    const auto idx = static_cast<std::size_t>(rng.below(x.size()));
    const double saved = x.data[idx];
    x.data[idx] = saved + kStep;
    const double up = loss();
    x.data[idx] = saved - kStep;
    const double down = loss();
    x.data[idx] = saved;
    worst = std::max(worst, test::relative_error(gx.data[idx], (up - down) / (2 * kStep), kFloor));
  }
  CHECK(worst < 1e-3);
}
