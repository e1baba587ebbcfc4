#include "flimsr/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "flimsr/bbdm.hpp"
#include "flimsr/dataset.hpp"
#include "flimsr/flimb.hpp"
#include "flimsr/gan.hpp"
#include "flimsr/metrics.hpp"
#include "flimsr/phantom.hpp"
#include "flimsr/preprocess.hpp"
#include "flimsr/report.hpp"

#ifndef FLIMSR_VERSION
#define FLIMSR_VERSION "unknown"
#endif

namespace flimsr::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Seed streams split from a pipeline's root seed.
constexpr std::uint64_t kPhantomStream = 1;
constexpr std::uint64_t kSplitStream = 2;
constexpr std::uint64_t kTrainStream = 3;
constexpr std::uint64_t kSampleStream = 4;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void write_image(const fs::path& path, const FlimImage& image) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_flimb(image, path);
}

/// *.flimb files under root as sorted relative paths.
std::vector<fs::path> list_flimb(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + root.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".flimb") out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string patch_id(const fs::path& rel) {
  auto p = rel;
  return p.replace_extension().generic_string();
}

NormScope parse_scope(const std::string& s) {
  if (s == "wsi") return NormScope::wsi;
  if (s == "patch") return NormScope::patch;
  throw std::invalid_argument("unknown normalization scope: " + s);
}

std::string scope_name(NormScope s) { return s == NormScope::wsi ? "wsi" : "patch"; }

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::size_t default_train_count(std::size_t n) {
  const auto held_out = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(3.0 * n / 19.0)));
  if (n <= held_out) throw std::invalid_argument("need at least two patients for a patient-wise split");
  return n - held_out;
}

// ---------------------------------------------------------------------------
// Stages

struct PhantomArgs {
  fs::path out;
  PhantomSpec spec;
  std::uint64_t seed = 0;
};

json run_phantom(const PhantomArgs& a) {
  const auto patients = generate_phantom(a.spec, a.seed);
  fs::create_directories(a.out);
  save_patients(patients, a.out);
  write_json(a.out / "phantom.json", {{"seed", a.seed},
                                      {"n_patients", a.spec.n_patients},
                                      {"fovs_per_patient", a.spec.fovs_per_patient},
                                      {"fov_size", a.spec.fov_size},
                                      {"lifetime_range_ns", {a.spec.lifetime_min_ns, a.spec.lifetime_max_ns}},
                                      {"structure_scales", a.spec.structure_scales},
                                      {"cross_channel_correlation", a.spec.cross_channel_correlation},
                                      {"psf_sigma_px", a.spec.psf_sigma_px}});
  std::size_t images = 0;
  for (const auto& p : patients) images += p.images.size();
  return {{"dir", a.out.string()}, {"patients", patients.size()}, {"images", images}};
}

struct DegradeArgs {
  int k = 0;
  fs::path in, out;
  std::size_t train_patients = 0;  // 0 = automatic
  std::uint64_t seed = 0;
  std::size_t patch_px = 256;
  NormScope scope = NormScope::wsi;
  double percentile = 99.5;
};

struct DegradeInfo {
  int k = 0;
  double percentile = 99.5;
  NormScope scope = NormScope::wsi;
  std::size_t patch_px = 256;
  DatasetSplit split;
};

/// Output layout: hr/, lr/ (raw images), stats/ (per-image preprocessing
/// statistics), target/ (normalized HR), degrade.json (k, split, options).
json run_degrade(const DegradeArgs& a) {
  validate_factor(a.k);
  if (a.patch_px == 0 || a.patch_px < static_cast<std::size_t>(a.k)) throw std::invalid_argument("patch size too small");
  if (!(a.percentile > 0.0 && a.percentile <= 100.0)) throw std::invalid_argument("percentile must be in (0, 100]");
  const auto patients = load_patients(a.in);
  if (patients.empty()) throw std::runtime_error("no fields of view found in " + a.in.string());
  std::vector<std::string> ids;
  for (const auto& p : patients) ids.push_back(p.patient_id);
  const std::size_t n_train = a.train_patients ? a.train_patients : default_train_count(ids.size());
  const auto split = split_patients(ids, n_train, a.seed);

  std::vector<std::string> stats_files;
  for (const auto& p : patients) {
    for (std::size_t i = 0; i < p.images.size(); ++i) {
      const auto rel = fs::path(p.patient_id) / ("fov_" + std::to_string(i));
      const auto& hr = p.images[i];
      const auto lr = block_average(hr, a.k);
      const auto clipped = clip_percentile(lr, hr, a.percentile);
      PreprocessStats stats{clipped.stats, compute_norm_stats(clipped.lr, a.scope), hr.height(), hr.width()};
      write_image(a.out / "hr" / rel.string().append(".flimb"), hr);
      write_image(a.out / "lr" / rel.string().append(".flimb"), lr);
      write_image(a.out / "target" / rel.string().append(".flimb"), apply_normalize(clipped.hr, stats.norm));
      write_json(a.out / "stats" / rel.string().append(".json"), stats);
      stats_files.push_back(("stats" / rel).generic_string() + ".json");
    }
  }
  write_json(a.out / "degrade.json", {{"k", a.k},
                                      {"percentile", a.percentile},
                                      {"norm_scope", scope_name(a.scope)},
                                      {"patch_px", a.patch_px},
                                      {"split_seed", a.seed},
                                      {"train_ids", split.train_ids},
                                      {"test_ids", split.test_ids},
                                      {"source", a.in.string()}});
  return {{"dir", a.out.string()}, {"train_ids", split.train_ids}, {"test_ids", split.test_ids},
          {"stats", stats_files}};
}

DegradeInfo read_degrade_info(const fs::path& dir) {
  const auto j = read_json(dir / "degrade.json");
  DegradeInfo d;
  d.k = j.at("k").get<int>();
  d.percentile = j.at("percentile").get<double>();
  d.scope = parse_scope(j.at("norm_scope").get<std::string>());
  d.patch_px = j.at("patch_px").get<std::size_t>();
  d.split.seed = j.at("split_seed").get<std::uint64_t>();
  d.split.train_ids = j.at("train_ids").get<std::set<std::string>>();
  d.split.test_ids = j.at("test_ids").get<std::set<std::string>>();
  return d;
}

std::vector<PairedPatch> load_training_pairs(const fs::path& data, const DegradeInfo& info) {
  std::vector<PairedPatch> pairs;
  for (const auto& rel : list_flimb(data / "hr")) {
    const auto pid = rel.begin()->string();
    if (!info.split.train_ids.count(pid)) continue;
    const auto hr = read_flimb(data / "hr" / rel);
    auto fov = prepare_fov(hr, info.k, info.patch_px, pid, info.percentile, info.scope);
    for (auto& p : fov.pairs) pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw std::invalid_argument("empty dataset: no training patches of size " +
                                                 std::to_string(info.patch_px));
  return pairs;
}

struct NetArgs {
  std::size_t base = 64, levels = 4, convs = 3;
  std::size_t disc_base = 64, disc_blocks = 5, disc_hidden = 1024;
  std::size_t time_embed_dim = 64;
};

struct TrainArgs {
  int k = 0;
  fs::path data, out;
  std::optional<double> alpha;
  std::size_t steps = 1000, batch = 4, checkpoint_interval = 0;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  NetArgs net;
};

TrainConfig make_train_config(const TrainArgs& a) {
  auto c = TrainConfig::for_factor(a.k);
  if (a.alpha) c.alpha = *a.alpha;
  c.steps = a.steps;
  c.batch_size = a.batch;
  c.adam.lr = a.lr;
  c.seed = a.seed;
  c.checkpoint_interval = a.checkpoint_interval;
  c.checkpoint_dir = a.out;
  c.generator.unet.base_channels = a.net.base;
  c.generator.unet.levels = a.net.levels;
  c.generator.unet.convs_per_block = a.net.convs;
  c.discriminator.base_channels = a.net.disc_base;
  c.discriminator.blocks = a.net.disc_blocks;
  c.discriminator.hidden = a.net.disc_hidden;
  c.validate();
  return c;
}

json preprocessing_reference(const fs::path& data, const DegradeInfo& info) {
  return {{"degrade_manifest", (data / "degrade.json").string()},
          {"percentile", info.percentile},
          {"norm_scope", scope_name(info.scope)},
          {"patch_px", info.patch_px},
          {"train_ids", info.split.train_ids}};
}

json run_train(const TrainArgs& a) {
  validate_factor(a.k);
  const auto info = read_degrade_info(a.data);
  if (info.k != a.k) {
    throw std::invalid_argument("k mismatch: data degraded with k=" + std::to_string(info.k) + ", requested k=" +
                                std::to_string(a.k));
  }
  const auto config = make_train_config(a);
  const auto pairs = load_training_pairs(a.data, info);
  fs::create_directories(a.out);
  const auto result = train(config, pairs);
  auto ckpt = cgan_checkpoint(result.model, config.steps);
  ckpt.meta["preprocessing"] = preprocessing_reference(a.data, info);
  ckpt.meta["training_patches"] = pairs.size();
  const auto path = a.out / "model.ckpt";
  save_checkpoint(ckpt, path);
  result.history.write_csv(a.out / "history.csv");
  json periodic = json::array();
  for (const auto& p : result.history.checkpoints) periodic.push_back(p.string());
  return {{"checkpoint", path.string()},
          {"sidecar", sidecar_path(path).string()},
          {"history", (a.out / "history.csv").string()},
          {"periodic_checkpoints", periodic},
          {"final_l1", result.history.steps.back().l1_term}};
}

struct BbdmArgs {
  int k = 0;
  fs::path data, out;
  std::size_t steps = 1000, batch = 4, T = 1000, stride = 1;
  double s = 1.0, lr = 1e-4;
  std::uint64_t seed = 0;
  NetArgs net;
};

BbdmConfig make_bbdm_config(const BbdmArgs& a) {
  BbdmConfig c;
  c.k = a.k;
  c.T = a.T;
  c.s = a.s;
  c.steps = a.steps;
  c.batch_size = a.batch;
  c.adam.lr = a.lr;
  c.seed = a.seed;
  c.sample_stride = a.stride;
  c.denoiser.base_channels = a.net.base;
  c.denoiser.levels = a.net.levels;
  c.denoiser.convs_per_block = a.net.convs;
  c.denoiser.time_embed_dim = a.net.time_embed_dim;
  c.validate();
  return c;
}

json run_train_bbdm(const BbdmArgs& a) {
  validate_factor(a.k);
  const auto info = read_degrade_info(a.data);
  if (info.k != a.k) throw std::invalid_argument("k mismatch between data and request");
  const auto config = make_bbdm_config(a);
  const auto pairs = load_training_pairs(a.data, info);
  fs::create_directories(a.out);
  const auto result = train_bbdm(config, pairs);
  const auto path = a.out / "model.ckpt";
  save_bbdm(result.model, path, config.steps);
  auto side = read_json(sidecar_path(path));
  side["preprocessing"] = preprocessing_reference(a.data, info);
  write_json(sidecar_path(path), side);
  std::ofstream csv(a.out / "history.csv", std::ios::trunc);
  csv << "step,loss\n" << std::setprecision(9);
  for (std::size_t i = 0; i < result.loss.size(); ++i) csv << i + 1 << ',' << result.loss[i] << '\n';
  return {{"checkpoint", path.string()}, {"history", (a.out / "history.csv").string()}};
}

/// A loaded predictor: cGAN generator, diffusion model or plain bilinear interpolation.
struct Predictor {
  std::string kind;
  std::optional<CganModel> cgan;
  std::optional<BbdmModel> bbdm;
  std::size_t tile_px = 256;
  std::uint64_t seed = 0;

  FlimImage run(const FlimImage& lr_norm, std::size_t h, std::size_t w, std::uint64_t stream) const {
    if (kind == "cgan") return infer_normalized(cgan->generator, lr_norm, h, w, tile_px);
    if (kind == "bbdm") return bbdm_infer_normalized(*bbdm, lr_norm, h, w, mix_seed(seed, stream));
    auto up = bilinear_resize(lr_norm, h, w);
    std::vector<float> data(up.data().begin(), up.data().end());
    for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
    return FlimImage(up.channel_descs(), h, w, up.pixel_size_um(), std::move(data));
  }
};

Predictor load_predictor(const std::string& model, const fs::path& ckpt, std::size_t tile_px, std::uint64_t seed) {
  Predictor p;
  p.tile_px = tile_px;
  p.seed = seed;
  if (model == "bilinear") {
    p.kind = model;
    return p;
  }
  if (ckpt.empty()) throw std::invalid_argument("--ckpt is required for model " + (model.empty() ? "cgan" : model));
  const auto kind = load_checkpoint(ckpt).meta.value("model", std::string{});
  if (!model.empty() && model != kind) {
    throw std::invalid_argument("checkpoint holds a " + kind + " model, not " + model);
  }
  p.kind = kind;
  if (kind == "cgan") {
    p.cgan = load_cgan(ckpt);
  } else if (kind == "bbdm") {
    p.bbdm = load_bbdm(ckpt);
  } else {
    throw std::invalid_argument("unknown model kind in checkpoint: " + kind);
  }
  return p;
}

struct InferArgs {
  fs::path ckpt, in, out, stats;
  std::string model;
  std::size_t height = 0, width = 0, tile = 256;
  std::uint64_t seed = 0;
};

FlimImage infer_one(const Predictor& p, const fs::path& in, const fs::path& stats_path, std::size_t h,
                    std::size_t w, std::uint64_t stream) {
  if (stats_path.empty() || !fs::exists(stats_path)) {
    throw std::invalid_argument("missing preprocessing statistics" +
                                (stats_path.empty() ? std::string{} : ": " + stats_path.string()));
  }
  const auto stats = read_json(stats_path).get<PreprocessStats>();
  const auto lr = read_flimb(in);
  if (h == 0) h = stats.hr_height;
  if (w == 0) w = stats.hr_width;
  if (h == 0 || w == 0) throw std::invalid_argument("target size unknown: pass --height/--width");
  return p.run(preprocess_lr(lr, stats), h, w, stream);
}

json run_infer(const InferArgs& a) {
  const auto predictor = load_predictor(a.model, a.ckpt, a.tile, a.seed);
  json outputs = json::array();
  if (fs::is_directory(a.in)) {
    if (a.stats.empty() || !fs::is_directory(a.stats)) {
      throw std::invalid_argument("missing preprocessing statistics: --stats must name a directory");
    }
    std::uint64_t stream = 0;
    for (const auto& rel : list_flimb(a.in)) {
      auto stats_rel = rel;
      const auto image = infer_one(predictor, a.in / rel, a.stats / stats_rel.replace_extension(".json"), a.height,
                                   a.width, stream++);
      write_image(a.out / rel, image);
      outputs.push_back((a.out / rel).string());
    }
  } else {
    write_image(a.out, infer_one(predictor, a.in, a.stats, a.height, a.width, 0));
    outputs.push_back(a.out.string());
  }
  return {{"model", predictor.kind}, {"outputs", outputs}};
}

struct EvalArgs {
  fs::path pred, target, out;
  std::string ssim_mode = "global";
  double L = 1.0;
};

/// Every prediction must have a target at the same relative path; extra targets are ignored.
MetricReport evaluate_dirs(const fs::path& pred, const fs::path& target, SsimMode mode, double L) {
  std::vector<FlimImage> preds, targets;
  std::vector<std::string> ids;
  for (const auto& rel : list_flimb(pred)) {
    if (!fs::exists(target / rel)) throw std::invalid_argument("pairing mismatch: no target for " + rel.string());
    preds.push_back(read_flimb(pred / rel));
    targets.push_back(read_flimb(target / rel));
    ids.push_back(patch_id(rel));
  }
  if (preds.empty()) throw std::invalid_argument("no predictions found in " + pred.string());
  return evaluate(preds, targets, ids, MetricConstants{L}, mode);
}

json run_eval(const EvalArgs& a) {
  const auto report = evaluate_dirs(a.pred, a.target, ssim_mode_from_string(a.ssim_mode), a.L);
  write_json(a.out, report);
  return {{"report", a.out.string()}, {"patches", report.patches.size()}};
}

struct SpectrumArgs {
  fs::path in, out;
  std::string channel = "LT2";
};

json run_spectrum(const SpectrumArgs& a) {
  const auto image = read_flimb(a.in);
  const auto c = channel_index(image.channel_descs(), a.channel);
  const auto spec = radial_power_spectrum(image.plane(c), image.height(), image.width());
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  std::ofstream csv(a.out, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + a.out.string());
  csv << "bin_center_cycles_per_pixel,mean_power\n" << std::setprecision(12);
  for (std::size_t i = 0; i < spec.bin_centers.size(); ++i) {
    csv << spec.bin_centers[i] << ',' << spec.mean_power[i] << '\n';
  }
  return {{"spectrum", a.out.string()}, {"bins", spec.bin_centers.size()}};
}

struct CompareArgs {
  fs::path a, b, out;
};

json run_compare(const CompareArgs& a) {
  const auto ra = read_json(a.a).get<MetricReport>();
  const auto rb = read_json(a.b).get<MetricReport>();
  write_json(a.out, {{"a", a.a.string()}, {"b", a.b.string()}, {"tests", comparisons_to_json(compare_reports(ra, rb))}});
  return {{"ttests", a.out.string()}};
}

// ---------------------------------------------------------------------------
// Pipeline

/// Flat experiment configuration; every key is optional except out_dir.
struct PipelineConfig {
  fs::path out_dir;
  fs::path data;  // existing phantom/patient directory; generated when empty
  std::uint64_t seed = 0;
  int k = 2;
  std::string model = "cgan";
  std::size_t n_patients = 19, fovs_per_patient = 2, fov_size = 256;
  double psf_sigma_px = 1.0;
  std::size_t train_patients = 0;
  std::size_t patch_px = 256;
  std::string norm_scope = "wsi";
  double clip_percentile = 99.5;
  std::size_t steps = 1000, batch_size = 4;
  double lr = 1e-4;
  std::optional<double> alpha;
  NetArgs net;
  std::size_t bbdm_T = 1000, bbdm_stride = 1;
  double bbdm_s = 1.0;
  std::string ssim_mode = "global";
  std::size_t tile_px = 256;
};

PipelineConfig parse_pipeline_config(const json& j) {
  static const std::set<std::string> known = {
      "out_dir", "data", "seed", "k", "model", "n_patients", "fovs_per_patient", "fov_size", "psf_sigma_px",
      "train_patients", "patch_px", "norm_scope", "clip_percentile", "steps", "batch_size", "lr", "alpha",
      "base_channels", "levels", "convs_per_block", "disc_base_channels", "disc_blocks", "disc_hidden",
      "time_embed_dim", "bbdm_T", "bbdm_s", "bbdm_stride", "ssim_mode", "tile_px"};
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown config key: " + key);
  }
  PipelineConfig c;
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("data")) c.data = j["data"].get<std::string>();
  c.seed = j.value("seed", c.seed);
  c.k = j.value("k", c.k);
  c.model = j.value("model", c.model);
  c.n_patients = j.value("n_patients", c.n_patients);
  c.fovs_per_patient = j.value("fovs_per_patient", c.fovs_per_patient);
  c.fov_size = j.value("fov_size", c.fov_size);
  c.psf_sigma_px = j.value("psf_sigma_px", c.psf_sigma_px);
  c.train_patients = j.value("train_patients", c.train_patients);
  c.patch_px = j.value("patch_px", c.patch_px);
  c.norm_scope = j.value("norm_scope", c.norm_scope);
  c.clip_percentile = j.value("clip_percentile", c.clip_percentile);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
  c.net.base = j.value("base_channels", c.net.base);
  c.net.levels = j.value("levels", c.net.levels);
  c.net.convs = j.value("convs_per_block", c.net.convs);
  c.net.disc_base = j.value("disc_base_channels", c.net.disc_base);
  c.net.disc_blocks = j.value("disc_blocks", c.net.disc_blocks);
  c.net.disc_hidden = j.value("disc_hidden", c.net.disc_hidden);
  c.net.time_embed_dim = j.value("time_embed_dim", c.net.time_embed_dim);
  c.bbdm_T = j.value("bbdm_T", c.bbdm_T);
  c.bbdm_s = j.value("bbdm_s", c.bbdm_s);
  c.bbdm_stride = j.value("bbdm_stride", c.bbdm_stride);
  c.ssim_mode = j.value("ssim_mode", c.ssim_mode);
  c.tile_px = j.value("tile_px", c.tile_px);
  return c;
}

json config_snapshot(const PipelineConfig& c) {
  json j = {{"out_dir", c.out_dir.string()},
            {"data", c.data.string()},
            {"seed", c.seed},
            {"k", c.k},
            {"model", c.model},
            {"n_patients", c.n_patients},
            {"fovs_per_patient", c.fovs_per_patient},
            {"fov_size", c.fov_size},
            {"psf_sigma_px", c.psf_sigma_px},
            {"train_patients", c.train_patients},
            {"patch_px", c.patch_px},
            {"norm_scope", c.norm_scope},
            {"clip_percentile", c.clip_percentile},
            {"steps", c.steps},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"alpha", c.alpha ? json(*c.alpha) : json(default_alpha(c.k))},
            {"base_channels", c.net.base},
            {"levels", c.net.levels},
            {"convs_per_block", c.net.convs},
            {"disc_base_channels", c.net.disc_base},
            {"disc_blocks", c.net.disc_blocks},
            {"disc_hidden", c.net.disc_hidden},
            {"time_embed_dim", c.net.time_embed_dim},
            {"bbdm_T", c.bbdm_T},
            {"bbdm_s", c.bbdm_s},
            {"bbdm_stride", c.bbdm_stride},
            {"ssim_mode", c.ssim_mode},
            {"tile_px", c.tile_px}};
  return j;
}

/// phantom -> degrade -> train -> infer (model and bilinear baseline) -> eval -> compare.
json run_pipeline(const PipelineConfig& c, std::ostream& log) {
  validate_factor(c.k);
  if (c.model != "cgan" && c.model != "bbdm") throw std::invalid_argument("model must be cgan or bbdm");
  if (c.out_dir.empty()) throw std::invalid_argument("out_dir is required");
  if (!c.data.empty() && !fs::is_directory(c.data)) {
    throw std::invalid_argument("data directory does not exist: " + c.data.string());
  }
  const auto started = utc_now();
  const fs::path out = c.out_dir;
  fs::create_directories(out);
  auto rel = [&](const fs::path& p) { return fs::relative(p, out).generic_string(); };
  json artifacts = json::object();

  fs::path source = c.data;
  if (source.empty()) {
    PhantomArgs pa;
    pa.out = out / "phantom";
    pa.spec.n_patients = c.n_patients;
    pa.spec.fovs_per_patient = c.fovs_per_patient;
    pa.spec.fov_size = c.fov_size;
    pa.spec.psf_sigma_px = c.psf_sigma_px;
    pa.seed = mix_seed(c.seed, kPhantomStream);
    fs::remove_all(pa.out);
    run_phantom(pa);
    source = pa.out;
    artifacts["phantom"] = rel(pa.out);
    log << "phantom: " << pa.out.string() << "\n";
  } else {
    artifacts["input_data"] = fs::absolute(c.data).string();
  }

  DegradeArgs da;
  da.k = c.k;
  da.in = source;
  da.out = out / "degraded";
  da.train_patients = c.train_patients;
  da.seed = mix_seed(c.seed, kSplitStream);
  da.patch_px = c.patch_px;
  da.scope = parse_scope(c.norm_scope);
  da.percentile = c.clip_percentile;
  fs::remove_all(da.out);
  const auto degraded = run_degrade(da);
  artifacts["degraded"] = rel(da.out);
  json stats_files = json::array();
  for (const auto& s : degraded["stats"]) stats_files.push_back(rel(da.out / s.get<std::string>()));
  artifacts["preprocessing_stats"] = stats_files;
  log << "degrade: k=" << c.k << " train=" << degraded["train_ids"].size() << " test=" << degraded["test_ids"].size()
      << "\n";
  std::size_t test_fovs = 0;
  for (const auto& id : degraded["test_ids"]) test_fovs += list_flimb(da.out / "lr" / id.get<std::string>()).size();
  if (test_fovs < 2) throw std::invalid_argument("pipeline needs at least 2 test fields of view for paired t-tests");

  const fs::path model_dir = out / "model";
  fs::remove_all(model_dir);
  if (c.model == "cgan") {
    TrainArgs ta;
    ta.k = c.k;
    ta.data = da.out;
    ta.out = model_dir;
    ta.alpha = c.alpha;
    ta.steps = c.steps;
    ta.batch = c.batch_size;
    ta.lr = c.lr;
    ta.seed = mix_seed(c.seed, kTrainStream);
    ta.net = c.net;
    run_train(ta);
  } else {
    BbdmArgs ba;
    ba.k = c.k;
    ba.data = da.out;
    ba.out = model_dir;
    ba.steps = c.steps;
    ba.batch = c.batch_size;
    ba.lr = c.lr;
    ba.seed = mix_seed(c.seed, kTrainStream);
    ba.T = c.bbdm_T;
    ba.s = c.bbdm_s;
    ba.stride = c.bbdm_stride;
    ba.net = c.net;
    run_train_bbdm(ba);
  }
  const auto ckpt = model_dir / "model.ckpt";
  artifacts["checkpoint"] = rel(ckpt);
  artifacts["checkpoint_sidecar"] = rel(sidecar_path(ckpt));
  artifacts["history"] = rel(model_dir / "history.csv");
  log << "train: " << ckpt.string() << "\n";

  const auto info = read_degrade_info(da.out);
  const auto model = load_predictor(c.model, ckpt, c.tile_px, mix_seed(c.seed, kSampleStream));
  const auto baseline = load_predictor("bilinear", {}, c.tile_px, 0);
  const fs::path pred_dir = out / "pred", base_dir = out / "baseline", target_dir = out / "target";
  for (const auto& d : {pred_dir, base_dir, target_dir}) fs::remove_all(d);
  json preds = json::array();
  std::uint64_t stream = 0;
  for (const auto& r : list_flimb(da.out / "lr")) {
    if (!info.split.test_ids.count(r.begin()->string())) continue;
    auto stats_rel = r;
    const auto stats = da.out / "stats" / stats_rel.replace_extension(".json");
    write_image(pred_dir / r, infer_one(model, da.out / "lr" / r, stats, 0, 0, stream++));
    write_image(base_dir / r, infer_one(baseline, da.out / "lr" / r, stats, 0, 0, 0));
    // Copy test targets so evaluation reads only declared pipeline outputs.
    write_image(target_dir / r, read_flimb(da.out / "target" / r));
    preds.push_back(rel(pred_dir / r));
  }
  artifacts["predictions"] = preds;
  artifacts["baseline_predictions"] = rel(base_dir);
  artifacts["targets"] = rel(target_dir);

  const auto mode = ssim_mode_from_string(c.ssim_mode);
  const auto report = evaluate_dirs(pred_dir, target_dir, mode, 1.0);
  const auto base_report = evaluate_dirs(base_dir, target_dir, mode, 1.0);
  write_json(out / "report.json", report);
  write_json(out / "baseline_report.json", base_report);
  write_json(out / "ttests.json", {{"a", "report.json"},
                                   {"b", "baseline_report.json"},
                                   {"tests", comparisons_to_json(compare_reports(report, base_report))}});
  artifacts["report"] = "report.json";
  artifacts["baseline_report"] = "baseline_report.json";
  artifacts["ttests"] = "ttests.json";
  log << "eval: lifetime PSNR " << report.lifetime_mean.psnr << " dB (bilinear " << base_report.lifetime_mean.psnr
      << " dB)\n";

  const json manifest = {{"code_version", FLIMSR_VERSION},
                         {"config", config_snapshot(c)},
                         {"seed_streams",
                          {{"phantom", kPhantomStream},
                           {"split", kSplitStream},
                           {"train", kTrainStream},
                           {"sample", kSampleStream}}},
                         {"artifacts", artifacts},
                         {"started_utc", started},
                         {"finished_utc", utc_now()}};
  write_json(out / "manifest.json", manifest);
  return {{"manifest", (out / "manifest.json").string()}};
}

// ---------------------------------------------------------------------------

void print_error(std::ostream& err, const std::string& command, const std::string& message) {
  err << json{{"status", "error"}, {"command", command}, {"message", message}}.dump() << "\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"FLIM pixel super-resolution: phantoms, degradation, cGAN / bridge-diffusion training, evaluation"};
  app.fallthrough();
  app.name("flimsr");
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: $FLIMSR_THREADS or hardware concurrency)")
      ->check(CLI::NonNegativeNumber);

  std::function<json()> action;
  std::string command;

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "generate a synthetic FLIM phantom dataset");
  phantom->add_option("--out", pa.out, "output directory")->required();
  phantom->add_option("--patients", pa.spec.n_patients, "number of patients");
  phantom->add_option("--fovs", pa.spec.fovs_per_patient, "fields of view per patient");
  phantom->add_option("--size", pa.spec.fov_size, "field-of-view size in pixels");
  phantom->add_option("--lifetime-min", pa.spec.lifetime_min_ns, "minimum lifetime (ns)");
  phantom->add_option("--lifetime-max", pa.spec.lifetime_max_ns, "maximum lifetime (ns)");
  phantom->add_option("--scales", pa.spec.structure_scales, "structure scales in pixels");
  phantom->add_option("--correlation", pa.spec.cross_channel_correlation, "cross-channel correlation");
  phantom->add_option("--psf-sigma", pa.spec.psf_sigma_px, "band-limit Gaussian sigma in pixels");
  phantom->add_option("--seed", pa.seed, "random seed");
  phantom->callback([&] {
    command = "phantom";
    action = [&] { return run_phantom(pa); };
  });

  DegradeArgs da;
  std::string degrade_scope = "wsi";
  auto* degrade = app.add_subcommand("degrade", "block-average HR images and compute preprocessing statistics");
  degrade->add_option("--k", da.k, "super-resolution factor (2..7)")->required();
  degrade->add_option("--in", da.in, "HR dataset directory")->required();
  degrade->add_option("--out", da.out, "output directory")->required();
  degrade->add_option("--train-patients", da.train_patients, "patients in the training split (default ~16/19)");
  degrade->add_option("--seed", da.seed, "split seed");
  degrade->add_option("--patch", da.patch_px, "training patch size in HR pixels");
  degrade->add_option("--scope", degrade_scope, "normalization scope: wsi or patch");
  degrade->add_option("--percentile", da.percentile, "clip percentile");
  degrade->callback([&] {
    command = "degrade";
    action = [&] {
      da.scope = parse_scope(degrade_scope);
      return run_degrade(da);
    };
  });

  auto add_net_options = [](CLI::App* sub, NetArgs& n, bool disc) {
    sub->add_option("--base", n.base, "U-Net base width");
    sub->add_option("--levels", n.levels, "U-Net levels");
    sub->add_option("--convs", n.convs, "convolutions per block");
    if (disc) {
      sub->add_option("--disc-base", n.disc_base, "discriminator initial width");
      sub->add_option("--disc-blocks", n.disc_blocks, "discriminator blocks");
      sub->add_option("--disc-hidden", n.disc_hidden, "discriminator hidden units");
    } else {
      sub->add_option("--time-embed", n.time_embed_dim, "time embedding size");
    }
  };

  TrainArgs ta;
  double alpha = 0.0;
  auto* train_cmd = app.add_subcommand("train", "train the cGAN");
  train_cmd->add_option("--k", ta.k, "super-resolution factor")->required();
  train_cmd->add_option("--data", ta.data, "degrade output directory")->required();
  train_cmd->add_option("--out", ta.out, "checkpoint directory")->required();
  auto* alpha_opt = train_cmd->add_option("--alpha", alpha, "adversarial weight (default from k)");
  train_cmd->add_option("--steps", ta.steps, "training steps");
  train_cmd->add_option("--batch", ta.batch, "batch size");
  train_cmd->add_option("--lr", ta.lr, "Adam step size");
  train_cmd->add_option("--seed", ta.seed, "seed");
  train_cmd->add_option("--checkpoint-interval", ta.checkpoint_interval, "steps between checkpoints (0 = final only)");
  add_net_options(train_cmd, ta.net, true);
  train_cmd->callback([&] {
    command = "train";
    if (alpha_opt->count()) ta.alpha = alpha;
    action = [&] { return run_train(ta); };
  });

  BbdmArgs ba;
  auto* bbdm_cmd = app.add_subcommand("train-bbdm", "train the Brownian-bridge diffusion baseline");
  bbdm_cmd->add_option("--k", ba.k, "super-resolution factor")->required();
  bbdm_cmd->add_option("--data", ba.data, "degrade output directory")->required();
  bbdm_cmd->add_option("--out", ba.out, "checkpoint directory")->required();
  bbdm_cmd->add_option("--steps", ba.steps, "training steps");
  bbdm_cmd->add_option("--batch", ba.batch, "batch size");
  bbdm_cmd->add_option("--lr", ba.lr, "Adam step size");
  bbdm_cmd->add_option("--seed", ba.seed, "seed");
  bbdm_cmd->add_option("--T", ba.T, "diffusion steps");
  bbdm_cmd->add_option("--s", ba.s, "variance scale");
  bbdm_cmd->add_option("--stride", ba.stride, "sampling stride used at inference");
  add_net_options(bbdm_cmd, ba.net, false);
  bbdm_cmd->callback([&] {
    command = "train-bbdm";
    action = [&] { return run_train_bbdm(ba); };
  });

  InferArgs ia;
  auto* infer_cmd = app.add_subcommand("infer", "super-resolve LR images");
  infer_cmd->add_option("--ckpt", ia.ckpt, "model checkpoint");
  infer_cmd->add_option("--in", ia.in, "raw LR FLIMB file or directory")->required();
  infer_cmd->add_option("--out", ia.out, "output FLIMB file or directory")->required();
  infer_cmd->add_option("--stats", ia.stats, "preprocessing statistics JSON (directory when --in is one)");
  infer_cmd->add_option("--model", ia.model, "cgan, bbdm or bilinear (default: from checkpoint)")
      ->check(CLI::IsMember({"cgan", "bbdm", "bilinear"}));
  infer_cmd->add_option("--height", ia.height, "output height (default: from statistics)");
  infer_cmd->add_option("--width", ia.width, "output width (default: from statistics)");
  infer_cmd->add_option("--tile", ia.tile, "tile size in HR pixels");
  infer_cmd->add_option("--seed", ia.seed, "sampling seed (bbdm)");
  infer_cmd->callback([&] {
    command = "infer";
    action = [&] { return run_infer(ia); };
  });

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "compute MSE/PSNR/SSIM against targets");
  eval_cmd->add_option("--pred", ea.pred, "prediction directory")->required();
  eval_cmd->add_option("--target", ea.target, "target directory")->required();
  eval_cmd->add_option("--out", ea.out, "report JSON")->required();
  eval_cmd->add_option("--ssim-mode", ea.ssim_mode, "global or windowed")->check(CLI::IsMember({"global", "windowed"}));
  eval_cmd->add_option("--L", ea.L, "dynamic range");
  eval_cmd->callback([&] {
    command = "eval";
    action = [&] { return run_eval(ea); };
  });

  SpectrumArgs sa;
  auto* spectrum_cmd = app.add_subcommand("spectrum", "radially averaged power spectrum of one channel");
  spectrum_cmd->add_option("--in", sa.in, "FLIMB image")->required();
  spectrum_cmd->add_option("--channel", sa.channel, "channel name");
  spectrum_cmd->add_option("--out", sa.out, "CSV output")->required();
  spectrum_cmd->callback([&] {
    command = "spectrum";
    action = [&] { return run_spectrum(sa); };
  });

  CompareArgs ca;
  auto* compare_cmd = app.add_subcommand("compare", "paired t-tests between two reports");
  compare_cmd->add_option("--a", ca.a, "report A")->required();
  compare_cmd->add_option("--b", ca.b, "report B")->required();
  compare_cmd->add_option("--out", ca.out, "t-test JSON")->required();
  compare_cmd->callback([&] {
    command = "compare";
    action = [&] { return run_compare(ca); };
  });

  fs::path config_path, out_override;
  std::uint64_t seed_override = 0;
  auto* pipeline_cmd = app.add_subcommand("pipeline", "run phantom -> degrade -> train -> infer -> eval -> compare");
  pipeline_cmd->add_option("--config", config_path, "experiment JSON")->required();
  pipeline_cmd->add_option("--out", out_override, "output directory (overrides out_dir)");
  auto* seed_opt = pipeline_cmd->add_option("--seed", seed_override, "root seed (overrides seed)");
  pipeline_cmd->callback([&] {
    command = "pipeline";
    action = [&] {
      auto config = parse_pipeline_config(read_json(config_path));
      if (!out_override.empty()) config.out_dir = out_override;
      if (seed_opt->count()) config.seed = seed_override;
      return run_pipeline(config, out);
    };
  });

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::Success& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, command.empty() ? "flimsr" : command, e.what());
    err << app.help();
    return 2;
  }

  if (threads == 0) {
    if (const char* env = std::getenv("FLIMSR_THREADS")) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        print_error(err, command, std::string("invalid FLIMSR_THREADS value: ") + env);
        return 2;
      }
    }
  }
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  nn::set_num_threads(threads);

  try {
    const auto result = action();
    out << json{{"status", "ok"}, {"command", command}, {"result", result}}.dump() << "\n";
    return 0;
  } catch (const std::exception& e) {
    print_error(err, command, e.what());
    return 1;
  }
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace flimsr::cli
