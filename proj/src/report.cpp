#include "flimsr/report.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace flimsr {
namespace {

nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double read_number(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw std::invalid_argument("expected a number, got \"" + s + "\"");
}

nlohmann::json values_json(const MetricValues& v) {
  nlohmann::json j = {{"mse", number(v.mse)}, {"psnr", number(v.psnr)}, {"ssim", number(v.ssim)}};
  if (v.perceptual) j["perceptual"] = number(*v.perceptual);
  return j;
}

MetricValues values_from(const nlohmann::json& j) {
  MetricValues v{read_number(j.at("mse")), read_number(j.at("psnr")), read_number(j.at("ssim")), std::nullopt};
  if (j.contains("perceptual")) v.perceptual = read_number(j.at("perceptual"));
  return v;
}

MetricValues mean_of(const std::vector<const MetricValues*>& vs) {
  MetricValues m;
  if (vs.empty()) return m;
  bool has_p = true;
  double p = 0.0;
  for (const auto* v : vs) {
    m.mse += v->mse;
    m.psnr += v->psnr;
    m.ssim += v->ssim;
    has_p = has_p && v->perceptual.has_value();
    if (v->perceptual) p += *v->perceptual;
  }
  const double n = static_cast<double>(vs.size());
  m.mse /= n;
  m.psnr /= n;
  m.ssim /= n;
  if (has_p) m.perceptual = p / n;
  return m;
}

double metric_of(const MetricValues& v, const std::string& metric) {
  if (metric == "mse") return v.mse;
  if (metric == "psnr") return v.psnr;
  return v.ssim;
}

}  // namespace

PatchMetrics evaluate_pair(const FlimImage& pred, const FlimImage& target, const std::string& id,
                           const MetricConstants& constants, SsimMode mode, const PerceptualMetric* perceptual) {
  if (pred.channels() != target.channels() || pred.height() != target.height() || pred.width() != target.width()) {
    throw std::invalid_argument("pairing mismatch: prediction and target shapes differ for " + id);
  }
  PatchMetrics out;
  out.id = id;
  std::vector<const MetricValues*> lt, in;
  out.channels.reserve(pred.channels());
  for (std::size_t c = 0; c < pred.channels(); ++c) {
    const auto p = pred.plane(c);
    const auto t = target.plane(c);
    MetricValues v;
    v.mse = mse(p, t);
    v.psnr = psnr_from_mse(v.mse, constants.L);
    v.ssim = ssim(p, t, pred.height(), pred.width(), constants, mode);
    if (perceptual && perceptual->fn) v.perceptual = perceptual->fn(p, t, pred.height(), pred.width());
    out.channels.push_back(v);
  }
  for (std::size_t c = 0; c < pred.channels(); ++c) {
    (target.channel_descs()[c].kind == ChannelKind::lifetime ? lt : in).push_back(&out.channels[c]);
  }
  out.lifetime = mean_of(lt);
  out.intensity = mean_of(in);
  return out;
}

MetricReport evaluate(const std::vector<FlimImage>& preds, const std::vector<FlimImage>& targets,
                      const std::vector<std::string>& ids, const MetricConstants& constants, SsimMode mode,
                      const PerceptualMetric* perceptual) {
  if (preds.size() != targets.size() || preds.size() != ids.size()) {
    throw std::invalid_argument("pairing mismatch: prediction, target and id counts differ");
  }
  if (preds.empty()) throw std::invalid_argument("nothing to evaluate");
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw std::invalid_argument("duplicate patch id");
  }
  if (!(constants.L > 0.0)) throw std::invalid_argument("dynamic range L must be positive");
  MetricReport r;
  r.constants = constants;
  r.ssim_mode = mode;
  if (perceptual && perceptual->fn) r.perceptual_metric = perceptual->name;
  for (const auto& d : targets.front().channel_descs()) {
    r.channel_names.push_back(d.name);
    r.channel_kinds.push_back(d.kind);
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (targets[i].channel_descs().size() != r.channel_names.size()) {
      throw std::invalid_argument("pairing mismatch: channel layouts differ");
    }
    r.patches.push_back(evaluate_pair(preds[i], targets[i], ids[i], constants, mode, perceptual));
  }
  for (std::size_t c = 0; c < r.channel_names.size(); ++c) {
    std::vector<const MetricValues*> vs;
    for (const auto& p : r.patches) vs.push_back(&p.channels[c]);
    r.channel_means.push_back(mean_of(vs));
  }
  std::vector<const MetricValues*> lt, in;
  for (const auto& p : r.patches) {
    lt.push_back(&p.lifetime);
    in.push_back(&p.intensity);
  }
  r.lifetime_mean = mean_of(lt);
  r.intensity_mean = mean_of(in);
  return r;
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json::object();
  j["constants"] = {{"L", r.constants.L}, {"c1", r.constants.c1()}, {"c2", r.constants.c2()}};
  j["ssim_mode"] = to_string(r.ssim_mode);
  j["perceptual_metric"] = r.perceptual_metric.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.perceptual_metric);
  j["channels"] = r.channel_names;
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : r.channel_kinds) kinds.push_back(k == ChannelKind::lifetime ? "lifetime" : "intensity");
  j["channel_kinds"] = kinds;

  nlohmann::json summary = nlohmann::json::object();
  for (std::size_t c = 0; c < r.channel_names.size(); ++c) summary[r.channel_names[c]] = values_json(r.channel_means[c]);
  summary["lifetime"] = values_json(r.lifetime_mean);
  summary["intensity"] = values_json(r.intensity_mean);
  j["summary"] = summary;

  nlohmann::json patches = nlohmann::json::array();
  for (const auto& p : r.patches) {
    nlohmann::json pj = {{"id", p.id}};
    nlohmann::json ch = nlohmann::json::object();
    for (std::size_t c = 0; c < p.channels.size(); ++c) ch[r.channel_names[c]] = values_json(p.channels[c]);
    pj["channels"] = ch;
    pj["lifetime"] = values_json(p.lifetime);
    pj["intensity"] = values_json(p.intensity);
    patches.push_back(pj);
  }
  j["patches"] = patches;
}

void from_json(const nlohmann::json& j, MetricReport& r) {
  r = {};
  r.constants.L = j.at("constants").at("L").get<double>();
  r.ssim_mode = ssim_mode_from_string(j.at("ssim_mode").get<std::string>());
  if (!j.at("perceptual_metric").is_null()) r.perceptual_metric = j.at("perceptual_metric").get<std::string>();
  r.channel_names = j.at("channels").get<std::vector<std::string>>();
  for (const auto& k : j.at("channel_kinds")) {
    r.channel_kinds.push_back(k.get<std::string>() == "lifetime" ? ChannelKind::lifetime : ChannelKind::intensity);
  }
  const auto& summary = j.at("summary");
  for (const auto& name : r.channel_names) r.channel_means.push_back(values_from(summary.at(name)));
  r.lifetime_mean = values_from(summary.at("lifetime"));
  r.intensity_mean = values_from(summary.at("intensity"));
  for (const auto& pj : j.at("patches")) {
    PatchMetrics p;
    p.id = pj.at("id").get<std::string>();
    for (const auto& name : r.channel_names) p.channels.push_back(values_from(pj.at("channels").at(name)));
    p.lifetime = values_from(pj.at("lifetime"));
    p.intensity = values_from(pj.at("intensity"));
    r.patches.push_back(std::move(p));
  }
}

std::vector<Comparison> compare_reports(const MetricReport& a, const MetricReport& b) {
  if (a.channel_names != b.channel_names) throw std::invalid_argument("pairing mismatch: channel layouts differ");
  std::map<std::string, const PatchMetrics*> b_by_id;
  for (const auto& p : b.patches) b_by_id[p.id] = &p;
  if (b_by_id.size() != a.patches.size()) throw std::invalid_argument("pairing mismatch: patch sets differ");
  std::vector<std::pair<const PatchMetrics*, const PatchMetrics*>> pairs;
  for (const auto& p : a.patches) {
    const auto it = b_by_id.find(p.id);
    if (it == b_by_id.end()) throw std::invalid_argument("pairing mismatch: patch " + p.id + " missing");
    pairs.emplace_back(&p, it->second);
  }

  std::vector<std::pair<std::string, std::function<const MetricValues&(const PatchMetrics&)>>> scopes;
  for (std::size_t c = 0; c < a.channel_names.size(); ++c) {
    scopes.emplace_back(a.channel_names[c], [c](const PatchMetrics& p) -> const MetricValues& { return p.channels[c]; });
  }
  scopes.emplace_back("lifetime", [](const PatchMetrics& p) -> const MetricValues& { return p.lifetime; });
  scopes.emplace_back("intensity", [](const PatchMetrics& p) -> const MetricValues& { return p.intensity; });

  std::vector<Comparison> out;
  for (const auto& [scope, get] : scopes) {
    for (const std::string metric : {"mse", "psnr", "ssim"}) {
      std::vector<double> xa, xb;
      for (const auto& [pa, pb] : pairs) {
        xa.push_back(metric_of(get(*pa), metric));
        xb.push_back(metric_of(get(*pb), metric));
      }
      Comparison c{scope, metric, 0.0, 0.0, xa.size(), {}};
      for (std::size_t i = 0; i < xa.size(); ++i) {
        c.mean_a += xa[i] / static_cast<double>(xa.size());
        c.mean_b += xb[i] / static_cast<double>(xb.size());
      }
      const auto dir = metric == "mse" ? MetricDirection::lower_is_better : MetricDirection::higher_is_better;
      c.test = paired_ttest(xa, xb, dir);
      out.push_back(c);
    }
  }
  return out;
}

nlohmann::json comparisons_to_json(const std::vector<Comparison>& comparisons) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : comparisons) {
    out.push_back({{"scope", c.scope},
                   {"metric", c.metric},
                   {"n", c.n},
                   {"mean_a", number(c.mean_a)},
                   {"mean_b", number(c.mean_b)},
                   {"t", number(c.test.t)},
                   {"p", number(c.test.p)},
                   {"df", c.test.df},
                   {"verdict", to_string(c.test.verdict)},
                   {"zero_variance", c.test.zero_variance}});
  }
  return out;
}

}  // namespace flimsr
