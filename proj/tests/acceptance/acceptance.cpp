// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments select
// criteria by number, e.g. `acceptance 1 2 10`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flimsr/bbdm.hpp"
#include "flimsr/cli.hpp"
#include "flimsr/dataset.hpp"
#include "flimsr/gan.hpp"
#include "flimsr/losses.hpp"
#include "flimsr/metrics.hpp"
#include "flimsr/phantom.hpp"
#include "flimsr/report.hpp"
#include "flimsr/ttest.hpp"

using namespace flimsr;

namespace {

// Shared by the smoke and trend criteria.
constexpr double kPhantomPsf = 1.0;
constexpr double kTrainLr = 3e-3;
constexpr std::size_t kTrainSteps = 300;
constexpr std::size_t kPatch = 64;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0 = no time limit
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

FlimImage random_image(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& gen, double lo = 0.0,
                       double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> data(c * h * w);
  for (auto& v : data) v = static_cast<float>(u(gen));
  std::vector<ChannelDesc> channels = standard_channels();
  channels.resize(c);
  return FlimImage(channels, h, w, FlimImage::kHrPixelSizeUm, std::move(data));
}

double rel_err(double a, double b, double floor) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

TrainConfig small_config(int k) {
  auto c = TrainConfig::for_factor(k);
  c.generator.unet.base_channels = 16;
  c.discriminator.base_channels = 16;
  c.discriminator.hidden = 256;
  c.batch_size = 4;
  c.steps = kTrainSteps;
  c.adam.lr = kTrainLr;
  c.seed = 1;
  return c;
}

PhantomSpec small_phantom(std::size_t patients, std::size_t size) {
  PhantomSpec s;
  s.n_patients = patients;
  s.fovs_per_patient = 1;
  s.fov_size = size;
  s.psf_sigma_px = kPhantomPsf;
  return s;
}

double mean_psnr(const MetricReport& r) {
  double s = 0.0;
  for (const auto& m : r.channel_means) s += m.psnr / static_cast<double>(r.channel_means.size());
  return s;
}

// 1 ------------------------------------------------------------------------

Outcome degradation_oracle() {
  std::mt19937_64 gen(101);
  std::uniform_int_distribution<std::size_t> dim(14, 70);
  double worst = 0.0;
  std::size_t checks = 0;
  for (int i = 0; i < 100; ++i) {
    const auto img = random_image(6, dim(gen), dim(gen), gen, 0.0, 5.0);
    for (int k = 2; k <= 7; ++k) {
      const auto lr = block_average(img, k);
      const std::size_t m = img.height() / k, n = img.width() / k;
      if (lr.height() != m || lr.width() != n) return {false, "wrong output size"};
      for (std::size_t c = 0; c < 6; ++c) {
        for (std::size_t y = 0; y < m; ++y) {
          for (std::size_t x = 0; x < n; ++x) {
            double s = 0.0;
            for (int dy = 0; dy < k; ++dy) {
              for (int dx = 0; dx < k; ++dx) s += img.at(c, y * k + dy, x * k + dx);
            }
            worst = std::max(worst, std::fabs(s / (k * k) - lr.at(c, y, x)));
            ++checks;
          }
        }
      }
    }
  }
  return {worst < 1e-6, fmt("max abs error %.3g over %zu pixels", worst, checks)};
}

// 2 ------------------------------------------------------------------------

Outcome preprocessing_contract() {
  std::mt19937_64 gen(202);
  std::uniform_int_distribution<int> kd(2, 7);
  std::uniform_int_distribution<std::size_t> dim(8, 24);
  std::size_t clipped = 0;
  for (int i = 0; i < 50; ++i) {
    const int k = kd(gen);
    const auto hr = random_image(6, dim(gen) * k, dim(gen) * k, gen, 0.0, 10.0);
    const auto lr = block_average(hr, k);
    const auto c = clip_percentile(lr, hr, 99.5);
    for (std::size_t ch = 0; ch < 6; ++ch) {
      const float tau = c.stats.thresholds[ch];
      const auto before = hr.plane(ch), after = c.hr.plane(ch);
      for (std::size_t j = 0; j < before.size(); ++j) {
        if (before[j] > tau) {
          if (after[j] != tau) return {false, fmt("pair %d: HR value above threshold not clipped to it", i)};
          ++clipped;
        } else if (after[j] != before[j]) {
          return {false, fmt("pair %d: HR value below threshold changed", i)};
        }
      }
    }
    const auto n = minmax_normalize(c.lr, c.hr, NormScope::wsi);
    for (std::size_t ch = 0; ch < 6; ++ch) {
      const auto p = n.lr.plane(ch);
      const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
      if (*lo != 0.0f || *hi != 1.0f) return {false, fmt("pair %d channel %zu: LR range [%g, %g]", i, ch, *lo, *hi)};
    }
    for (float v : n.hr.data()) {
      if (!(v >= 0.0f && v <= 1.0f)) return {false, fmt("pair %d: HR value %g outside [0,1]", i, v)};
    }
  }
  return {true, fmt("50 pairs, %zu HR values clipped to the LR threshold", clipped)};
}

// 3 ------------------------------------------------------------------------

Outcome loss_oracles() {
  if (huber_elementwise(0.5) != 0.125 || huber_elementwise(1.0) != 0.5 || huber_elementwise(-3.0) != 2.5) {
    return {false, "huber fixed points"};
  }
  std::mt19937_64 gen(303);
  std::uniform_real_distribution<double> u01(0.0, 1.0), u2(-2.0, 2.0), ua(0.01, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double f = u01(gen), r = u01(gen), alpha = ua(gen);
    std::vector<float> a(12), b(12);
    double l1 = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j] = static_cast<float>(u2(gen));
      b[j] = static_cast<float>(u2(gen));
      const double d = static_cast<double>(a[j]) - b[j];
      l1 += (std::fabs(d) < 1.0 ? 0.5 * d * d : std::fabs(d) - 0.5) / static_cast<double>(a.size());
    }
    worst = std::max(worst, std::fabs(discriminator_loss(f, r) - (f * f + (r - 1) * (r - 1))));
    worst = std::max(worst, std::fabs(adversarial_loss(f) - (f - 1) * (f - 1)));
    worst = std::max(worst, std::fabs(smooth_l1(a, b) - l1));
    worst = std::max(worst, std::fabs(generator_loss(a, b, f, alpha) - (l1 + alpha * (f - 1) * (f - 1))));
  }
  return {worst < 1e-7, fmt("huber fixed points exact; max abs error %.3g over 1000 draws", worst)};
}

// 4 ------------------------------------------------------------------------

Outcome gradient_check() {
  // A step of 1e-7 keeps perturbations from crossing ReLU kinks; the floor keeps
  // near-zero gradients from turning rounding noise into a relative error.
  constexpr double h = 1e-7, floor = 1e-5;
  std::mt19937_64 gen(404);
  std::uniform_real_distribution<double> u(-3.0, 3.0);

  // Smooth-L1 input gradient, staying clear of the |u| = 1 kink.
  std::vector<double> pred(100), target(100, 0.0), grad(100);
  for (auto& p : pred) {
    do p = u(gen);
    while (std::fabs(std::fabs(p) - 1.0) < 0.05);
  }
  smooth_l1_grad(std::span<const double>(pred), std::span<const double>(target), std::span<double>(grad));
  double worst_l1 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto p = pred;
    p[i] += h;
    const double up = smooth_l1(std::span<const double>(p), std::span<const double>(target));
    p[i] -= 2 * h;
    const double dn = smooth_l1(std::span<const double>(p), std::span<const double>(target));
    worst_l1 = std::max(worst_l1, rel_err(grad[i], (up - dn) / (2 * h), 1e-12));
  }

  // Reduced generator under the smooth-L1 objective.
  GeneratorSpec spec;
  spec.unet.base_channels = 8;
  spec.unet.levels = 2;
  Generator<double> g(spec, 44);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Tensor<double> lr(2, 6, 16, 16), hr(2, 6, 32, 32);
  for (auto& v : lr.data) v = u01(gen);
  for (auto& v : hr.data) v = u01(gen);
  auto loss = [&] {
    const auto out = g.forward_train(lr, 32, 32);
    return smooth_l1(std::span<const double>(out.data), std::span<const double>(hr.data));
  };
  auto& params = g.unet().params();
  params.zero_grad();
  const auto out = g.forward_train(lr, 32, 32);
  Tensor<double> dout(out.n, out.c, out.h, out.w);
  smooth_l1_grad(std::span<const double>(out.data), std::span<const double>(hr.data), std::span<double>(dout.data));
  g.backward(dout);
  const std::vector<double> analytic(params.grads().begin(), params.grads().end());
  auto values = params.values();
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  double worst_g = 0.0;
  for (int s = 0; s < 100; ++s) {
    const std::size_t idx = pick(gen);
    const double saved = values[idx];
    values[idx] = saved + h;
    const double up = loss();
    values[idx] = saved - h;
    const double dn = loss();
    values[idx] = saved;
    worst_g = std::max(worst_g, rel_err(analytic[idx], (up - dn) / (2 * h), floor));
  }
  return {worst_l1 < 1e-3 && worst_g < 1e-3,
          fmt("max relative error: smooth-L1 %.3g, generator %.3g (100 parameters of %zu)", worst_l1, worst_g,
              values.size())};
}

// 5 ------------------------------------------------------------------------

Outcome shape_algebra() {
  const Generator<float> g(GeneratorSpec{}, 5);
  for (int k = 2; k <= 7; ++k) {
    const std::size_t m = 256 / k;
    Tensor<float> lr(1, 6, m, m);
    std::fill(lr.data.begin(), lr.data.end(), 0.5f);
    const auto out = g.forward_eval(lr, 256, 256);
    if (out.n != 1 || out.c != 6 || out.h != 256 || out.w != 256 || !out.all_finite()) {
      return {false, fmt("k=%d: output %zux%zux%zu", k, out.c, out.h, out.w)};
    }
  }
  const Discriminator<float> d(DiscriminatorSpec{}, 6);
  Tensor<float> x(1, 6, 256, 256);
  std::fill(x.data.begin(), x.data.end(), 0.5f);
  const auto score = d.scores_eval(x);
  const bool ok = score.size() == 1 && score[0] > 0.0f && score[0] < 1.0f;
  return {ok, fmt("6x256x256 for k=2..7; discriminator score %.4f", score.empty() ? -1.0 : double(score[0]))};
}

// 6 ------------------------------------------------------------------------

Outcome overfit_smoke() {
  std::vector<PairedPatch> data;
  for (const auto& p : generate_phantom(small_phantom(4, kPatch), 7)) {
    data.push_back(prepare_fov(p.images[0], 2, kPatch, p.patient_id).pairs.front());
  }
  const auto r = train(small_config(2), data);
  const auto& h = r.history.steps;
  const double ratio = h.back().l1_term / h.front().l1_term;
  double gen_psnr = 0.0, bil_psnr = 0.0;
  for (const auto& p : data) {
    const auto pred = infer_normalized(r.model.generator, p.lr.data, kPatch, kPatch);
    const auto bil = bilinear_resize(p.lr.data, kPatch, kPatch);
    gen_psnr += psnr(pred.data(), p.hr.data.data()) / static_cast<double>(data.size());
    bil_psnr += psnr(bil.data(), p.hr.data.data()) / static_cast<double>(data.size());
  }
  return {ratio < 0.25 && gen_psnr > bil_psnr,
          fmt("smooth-L1 final/initial %.4f (< 0.25: %s); PSNR generator %.2f dB vs bilinear %.2f dB", ratio,
              ratio < 0.25 ? "yes" : "no", gen_psnr, bil_psnr)};
}

// 7 ------------------------------------------------------------------------

struct TrendRun {
  MetricReport report;
  std::vector<double> patch_ssim;  // channel-mean SSIM per test patch
};

TrendRun trend_run(const std::vector<PatientRecord>& patients, const DatasetSplit& split, int k) {
  std::vector<PairedPatch> train_pairs, test_pairs;
  for (const auto& p : patients) {
    auto& dst = split.train_ids.count(p.patient_id) ? train_pairs : test_pairs;
    for (const auto& img : p.images) {
      for (auto& pair : prepare_fov(img, k, kPatch, p.patient_id).pairs) dst.push_back(std::move(pair));
    }
  }
  const auto model = train(small_config(k), train_pairs).model;
  std::vector<FlimImage> preds, targets;
  std::vector<std::string> ids;
  for (const auto& pair : test_pairs) {
    preds.push_back(infer_normalized(model.generator, pair.lr.data, kPatch, kPatch));
    targets.push_back(pair.hr.data);
    ids.push_back(pair.hr.patient_id + "_" + std::to_string(pair.hr.row) + "_" + std::to_string(pair.hr.col));
  }
  TrendRun out{evaluate(preds, targets, ids), {}};
  for (const auto& p : out.report.patches) {
    double s = 0.0;
    for (const auto& c : p.channels) s += c.ssim / static_cast<double>(p.channels.size());
    out.patch_ssim.push_back(s);
  }
  return out;
}

Outcome trend_check() {
  const auto patients = generate_phantom(small_phantom(6, 2 * kPatch), 2024);
  std::vector<std::string> ids;
  for (const auto& p : patients) ids.push_back(p.patient_id);
  const auto split = split_patients(ids, 4, 11);
  const auto k2 = trend_run(patients, split, 2);
  const auto k5 = trend_run(patients, split, 5);
  // Paired over the shared test patches.
  const std::size_t n = k2.patch_ssim.size();
  std::vector<double> d(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += (d[i] = k2.patch_ssim[i] - k5.patch_ssim[i]) / static_cast<double>(n);
  double var = 0.0;
  for (double v : d) var += (v - mean) * (v - mean) / static_cast<double>(n - 1);
  const double se = std::sqrt(var / static_cast<double>(n));
  const double p2 = mean_psnr(k2.report), p5 = mean_psnr(k5.report);
  double s2 = 0.0, s5 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s2 += k2.patch_ssim[i] / static_cast<double>(n);
    s5 += k5.patch_ssim[i] / static_cast<double>(n);
  }
  return {p2 > p5 && mean >= -se,
          fmt("%zu test patches; PSNR k=2 %.2f dB vs k=5 %.2f dB; SSIM k=2 %.4f vs k=5 %.4f (paired SE %.4f)", n, p2,
              p5, s2, s5, se)};
}

// 8 ------------------------------------------------------------------------

Outcome bbdm_moments() {
  const auto s = make_schedule(1000, 1.0);
  Rng rng(8);
  std::mt19937_64 gen(808);
  const auto x0 = random_image(6, 8, 8, gen), y = random_image(6, 8, 8, gen);
  const auto a = forward_sample(x0.data(), y.data(), 0, s, rng);
  const auto b = forward_sample(x0.data(), y.data(), 1000, s, rng);
  const bool ends = std::equal(a.begin(), a.end(), x0.data().begin()) && std::equal(b.begin(), b.end(), y.data().begin());
  const std::vector<float> zero = {0.0f}, one = {1.0f};
  const int n = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = forward_sample(zero, one, 500, s, rng)[0];
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n, var = (sum2 - n * mean * mean) / (n - 1);
  const double se_mean = std::sqrt(0.5 / n), se_var = 0.5 * std::sqrt(2.0 / (n - 1));
  const bool ok = ends && std::fabs(mean - 0.5) < 3 * se_mean && std::fabs(var - 0.5) < 3 * se_var;
  return {ok, fmt("endpoints %s; mean %.4f (%.2f SE), variance %.4f (%.2f SE)", ends ? "exact" : "WRONG", mean,
                  std::fabs(mean - 0.5) / se_mean, var, std::fabs(var - 0.5) / se_var)};
}

// 9 ------------------------------------------------------------------------

Outcome bbdm_reverse() {
  std::mt19937_64 gen(909);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor<float> x0(1, 6, 16, 16), y(1, 6, 16, 16);
  for (auto& v : x0.data) v = u(gen);
  for (auto& v : y.data) v = u(gen);
  const NoisePredictor oracle = [&](const Tensor<float>& x_t, const Tensor<float>&, std::size_t) {
    Tensor<float> r(x_t.n, x_t.c, x_t.h, x_t.w);
    for (std::size_t i = 0; i < r.size(); ++i) r.data[i] = x_t.data[i] - x0.data[i];
    return r;
  };
  Rng rng(9);
  const auto out = reverse_sample(oracle, y, make_schedule(1000, 1.0), rng);
  double worst = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, double(std::fabs(out.data[i] - x0.data[i])));
  return {worst < 1e-3, fmt("max abs error %.3g after 1000 reverse steps", worst)};
}

// 10 -----------------------------------------------------------------------

Outcome metric_fixed_points() {
  const double p = psnr_from_mse(0.01, 1.0);
  std::mt19937_64 gen(1010);
  const auto img = random_image(1, 40, 48, gen);
  const double self = ssim(img.data(), img.data(), 40, 48);

  const auto s = radial_power_spectrum(img.data(), 40, 48);
  double total = 0.0, energy = 0.0;
  for (std::size_t b = 0; b < s.mean_power.size(); ++b) total += s.mean_power[b] * static_cast<double>(s.counts[b]);
  for (float v : img.data()) energy += double(v) * v;
  const double parseval = std::fabs(total - 40.0 * 48.0 * energy) / total;

  // cos(2 pi 8 x / 64) puts all non-DC power at radius 8/64 cycles/pixel.
  std::vector<float> cosine(64 * 64);
  for (std::size_t y = 0; y < 64; ++y) {
    for (std::size_t x = 0; x < 64; ++x) cosine[y * 64 + x] = float(std::cos(2 * std::numbers::pi * 8 * x / 64.0));
  }
  const auto sc = radial_power_spectrum(cosine, 64, 64);
  std::size_t peak = 1;
  for (std::size_t b = 1; b < sc.mean_power.size(); ++b) {
    if (sc.mean_power[b] > sc.mean_power[peak]) peak = b;
  }
  const bool ok = p == 20.0 && std::fabs(self - 1.0) < 1e-9 && parseval < 1e-6 && sc.bin_centers[peak] == 0.125;
  return {ok, fmt("PSNR %.17g dB; SSIM(I,I)-1 = %.2g; Parseval rel. error %.2g; cosine peak at %.4f cycles/px",
                  p, self - 1.0, parseval, sc.bin_centers[peak])};
}

// 11 -----------------------------------------------------------------------

double t_pdf(double x, double df) {
  return std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi) *
         std::pow(1 + x * x / df, -(df + 1) / 2);
}

// Two-sided tail by Simpson's rule on [|t|, 200]; the mass beyond 200 is below 1e-7 for df = 4.
double two_sided_p_oracle(double t, double df) {
  const int n = 200000;
  const double a = std::fabs(t), b = 200.0, h = (b - a) / n;
  double s = t_pdf(a, df) + t_pdf(b, df);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * t_pdf(a + i * h, df);
  return 2 * s * h / 3;
}

Outcome statistics() {
  const std::vector<double> a = {1, 2, 3, 4, 5}, b = {2, 2, 4, 4, 7};
  const auto r = paired_ttest(a, b);
  const double t_ref = -0.8 / std::sqrt(0.7 / 5.0);
  const double p_ref = two_sided_p_oracle(t_ref, 4);
  bool ok = std::fabs(r.t - t_ref) < 1e-2 && std::fabs(r.t + 2.14) < 1e-2 && std::fabs(r.p - p_ref) < 5e-3 &&
            std::fabs(r.p - 0.099) < 5e-3 && r.df == 4 && r.verdict == Verdict::not_significant;

  std::mt19937_64 gen(1111);
  std::normal_distribution<double> z;
  double worst = 0.0;
  for (double df : {3.0, 10.0}) {
    const int draws = 100000;
    std::vector<double> t(draws);
    for (auto& v : t) {
      double chi = 0.0;
      for (int j = 0; j < static_cast<int>(df); ++j) {
        const double e = z(gen);
        chi += e * e;
      }
      v = z(gen) / std::sqrt(chi / df);
    }
    std::sort(t.begin(), t.end());
    for (double x : {-3.0, -1.5, -0.5, 0.0, 0.7, 2.0, 4.0}) {
      const double empirical =
          static_cast<double>(std::upper_bound(t.begin(), t.end(), x) - t.begin()) / static_cast<double>(draws);
      worst = std::max(worst, std::fabs(student_t_cdf(x, df) - empirical));
    }
  }
  ok = ok && worst < 0.005;
  return {ok, fmt("t %.4f (ref %.4f), p %.4f (quadrature %.4f), df %.0f; t-CDF vs Monte Carlo max gap %.4f", r.t, t_ref,
                  r.p, p_ref, r.df, worst)};
}

// 12 -----------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const auto root = std::filesystem::temp_directory_path() / "flimsr_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  const nlohmann::json config = {{"seed", 12},           {"k", 2},
                                 {"n_patients", 4},      {"fovs_per_patient", 2},
                                 {"fov_size", 64},       {"patch_px", 32},
                                 {"steps", 6},           {"batch_size", 2},
                                 {"base_channels", 8},   {"levels", 2},
                                 {"convs_per_block", 2}, {"disc_base_channels", 4},
                                 {"disc_blocks", 2},     {"disc_hidden", 16}};
  std::ofstream(root / "config.json") << config.dump(2);
  for (const char* run : {"a", "b"}) {
    std::ostringstream out, err;
    const int code = cli::dispatch(
        {"pipeline", "--config", (root / "config.json").string(), "--out", (root / run).string()}, out, err);
    if (code != 0) return {false, "pipeline failed: " + err.str()};
  }
  const auto a = slurp(root / "a" / "report.json"), b = slurp(root / "b" / "report.json");
  const bool same = !a.empty() && a == b;
  const bool rest = slurp(root / "a" / "ttests.json") == slurp(root / "b" / "ttests.json");
  return {same, fmt("report.json %zu bytes, %s; ttests.json %s", a.size(), same ? "identical" : "DIFFERENT",
                    rest ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "degradation oracle", 1.0, degradation_oracle},
      {2, "preprocessing contract", 1.0, preprocessing_contract},
      {3, "loss-formula oracles", 0.0, loss_oracles},
      {4, "gradient check", 60.0, gradient_check},
      {5, "shape algebra", 0.0, shape_algebra},
      {6, "overfit smoke test", 600.0, overfit_smoke},
      {7, "trend check k=2 vs k=5", 7200.0, trend_check},
      {8, "bbdm forward moments", 5.0, bbdm_moments},
      {9, "bbdm reverse consistency", 30.0, bbdm_reverse},
      {10, "metric fixed points", 0.0, metric_fixed_points},
      {11, "statistics", 0.0, statistics},
      {12, "end-to-end determinism", 0.0, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s <= 0.0 || secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::string timing = fmt("%.2f s", secs);
    if (c.budget_s > 0.0) timing += fmt(" of %.0f s budget%s", c.budget_s, in_time ? "" : " EXCEEDED");
    std::printf("%s %2d %s [%s]: %s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), timing.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
