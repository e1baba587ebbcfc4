#include "flimsr/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flimsr/resample.hpp"

namespace flimsr {

FlimImage block_average(const FlimImage& image, int k) {
  if (k < 1) throw std::invalid_argument("block size k must be >= 1");
  const auto uk = static_cast<std::size_t>(k);
  if (image.height() < uk || image.width() < uk) {
    throw std::invalid_argument("block size k larger than image dimension");
  }
  const std::size_t oh = image.height() / uk;
  const std::size_t ow = image.width() / uk;
  const double inv = 1.0 / static_cast<double>(uk * uk);
  std::vector<float> out(image.channels() * oh * ow);
  for (std::size_t c = 0; c < image.channels(); ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double sum = 0.0;
        for (std::size_t dy = 0; dy < uk; ++dy) {
          for (std::size_t dx = 0; dx < uk; ++dx) sum += image.at(c, y * uk + dy, x * uk + dx);
        }
        out[(c * oh + y) * ow + x] = static_cast<float>(sum * inv);
      }
    }
  }
  return FlimImage(image.channel_descs(), oh, ow, image.pixel_size_um() * static_cast<float>(k),
                   std::move(out));
}

float nearest_rank_percentile(std::vector<float> values, double q) {
  if (values.empty()) throw std::invalid_argument("empty channel");
  if (!(q > 0.0 && q <= 100.0)) throw std::invalid_argument("percentile must be in (0, 100]");
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n / 100.0 - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

namespace {

void require_same_channels(const FlimImage& a, const FlimImage& b) {
  if (a.channel_descs() != b.channel_descs()) {
    throw std::invalid_argument("lr and hr must have identical channel lists");
  }
}

}  // namespace

FlimImage apply_clip(const FlimImage& image, const ClipStats& stats) {
  if (stats.thresholds.size() != image.channels()) {
    throw std::invalid_argument("clip statistics do not match channel count");
  }
  FlimImage out = image;
  for (std::size_t c = 0; c < out.channels(); ++c) {
    const float tau = stats.thresholds[c];
    for (float& v : out.mutable_plane(c)) v = std::min(v, tau);
  }
  return out;
}

ClipResult clip_percentile(const FlimImage& lr, const FlimImage& hr, double q) {
  require_same_channels(lr, hr);
  ClipStats stats;
  stats.percentile = q;
  for (std::size_t c = 0; c < lr.channels(); ++c) {
    const auto plane = lr.plane(c);
    stats.thresholds.push_back(nearest_rank_percentile({plane.begin(), plane.end()}, q));
  }
  return {apply_clip(lr, stats), apply_clip(hr, stats), stats};
}

NormStats compute_norm_stats(const FlimImage& lr, NormScope scope) {
  NormStats stats;
  stats.scope = scope;
  for (std::size_t c = 0; c < lr.channels(); ++c) {
    const auto plane = lr.plane(c);
    if (plane.empty()) throw std::invalid_argument("empty channel");
    const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
    stats.min.push_back(*lo);
    stats.max.push_back(*hi);
  }
  return stats;
}

FlimImage apply_normalize(const FlimImage& image, const NormStats& stats) {
  if (stats.min.size() != image.channels() || stats.max.size() != image.channels()) {
    throw std::invalid_argument("normalization statistics do not match channel count");
  }
  FlimImage out = image;
  for (std::size_t c = 0; c < out.channels(); ++c) {
    const double lo = stats.min[c];
    const double range = static_cast<double>(stats.max[c]) - lo;
    for (float& v : out.mutable_plane(c)) {
      if (range <= 0.0) {
        v = 0.0f;
      } else {
        v = static_cast<float>(std::clamp((static_cast<double>(v) - lo) / range, 0.0, 1.0));
      }
    }
  }
  return out;
}

NormalizeResult minmax_normalize(const FlimImage& lr, const FlimImage& hr, NormScope scope) {
  require_same_channels(lr, hr);
  auto stats = compute_norm_stats(lr, scope);
  return {apply_normalize(lr, stats), apply_normalize(hr, stats), stats};
}

FlimImage crop(const FlimImage& image, std::size_t row, std::size_t col, std::size_t h, std::size_t w) {
  if (row + h > image.height() || col + w > image.width()) {
    throw std::invalid_argument("crop region outside image bounds");
  }
  std::vector<float> out(image.channels() * h * w);
  for (std::size_t c = 0; c < image.channels(); ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const auto src = image.plane(c).subspan((row + y) * image.width() + col, w);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>((c * h + y) * w));
    }
  }
  return FlimImage(image.channel_descs(), h, w, image.pixel_size_um(), std::move(out));
}

std::vector<Patch> tile_patches(const FlimImage& image, std::size_t patch_px, const std::string& patient_id) {
  if (patch_px == 0) throw std::invalid_argument("patch size must be positive");
  if (image.height() < patch_px || image.width() < patch_px) {
    throw std::invalid_argument("image smaller than one patch");
  }
  std::vector<Patch> out;
  for (std::size_t r = 0; r + patch_px <= image.height(); r += patch_px) {
    for (std::size_t c = 0; c + patch_px <= image.width(); c += patch_px) {
      out.push_back({crop(image, r, c, patch_px, patch_px), r, c, patient_id});
    }
  }
  return out;
}

FlimImage bilinear_resize(const FlimImage& image, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("output dimensions must be >= 1");
  std::vector<float> out(image.channels() * out_h * out_w);
  for (std::size_t c = 0; c < image.channels(); ++c) {
    bilinear_resize_plane(image.plane(c).data(), image.height(), image.width(),
                          out.data() + c * out_h * out_w, out_h, out_w);
  }
  const float scale = static_cast<float>(image.height()) / static_cast<float>(out_h);
  return FlimImage(image.channel_descs(), out_h, out_w, image.pixel_size_um() * scale, std::move(out));
}

PairedPatch make_paired_patch(const Patch& hr, int k) {
  PairedPatch pair;
  pair.k = k;
  pair.hr = hr;
  pair.lr = {block_average(hr.data, k), hr.row / static_cast<std::size_t>(k),
             hr.col / static_cast<std::size_t>(k), hr.patient_id};
  return pair;
}

PreparedFov prepare_fov(const FlimImage& hr, int k, std::size_t patch_px, const std::string& patient_id,
                        double q, NormScope scope) {
  PreparedFov out;
  const auto lr_full = block_average(hr, k);
  auto clipped = clip_percentile(lr_full, hr, q);
  out.clip = clipped.stats;
  out.norm = compute_norm_stats(clipped.lr, scope);

  for (const auto& patch : tile_patches(hr, patch_px, patient_id)) {
    auto pair = make_paired_patch(patch, k);
    if (scope == NormScope::wsi) {
      pair.lr.data = apply_normalize(apply_clip(pair.lr.data, out.clip), out.norm);
      pair.hr.data = apply_normalize(apply_clip(pair.hr.data, out.clip), out.norm);
    } else {
      auto c = clip_percentile(pair.lr.data, pair.hr.data, q);
      auto n = minmax_normalize(c.lr, c.hr, NormScope::patch);
      pair.lr.data = std::move(n.lr);
      pair.hr.data = std::move(n.hr);
    }
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

void to_json(nlohmann::json& j, const ClipStats& s) {
  j = {{"percentile", s.percentile}, {"thresholds", s.thresholds}};
}

void from_json(const nlohmann::json& j, ClipStats& s) {
  j.at("percentile").get_to(s.percentile);
  j.at("thresholds").get_to(s.thresholds);
}

void to_json(nlohmann::json& j, const NormStats& s) {
  j = {{"scope", s.scope == NormScope::wsi ? "wsi" : "patch"}, {"min", s.min}, {"max", s.max}};
}

void from_json(const nlohmann::json& j, NormStats& s) {
  const auto scope = j.at("scope").get<std::string>();
  if (scope != "wsi" && scope != "patch") throw std::invalid_argument("unknown normalization scope: " + scope);
  s.scope = scope == "wsi" ? NormScope::wsi : NormScope::patch;
  j.at("min").get_to(s.min);
  j.at("max").get_to(s.max);
  if (s.min.size() != s.max.size()) throw std::invalid_argument("normalization min/max length mismatch");
}

FlimImage preprocess_lr(const FlimImage& lr, const PreprocessStats& stats) {
  if (stats.empty()) throw std::invalid_argument("missing preprocessing statistics");
  if (stats.clip.thresholds.size() != lr.channels() || stats.norm.min.size() != lr.channels()) {
    throw std::invalid_argument("preprocessing statistics do not match the channel count");
  }
  return apply_normalize(apply_clip(lr, stats.clip), stats.norm);
}

void to_json(nlohmann::json& j, const PreprocessStats& s) {
  j = {{"clip", s.clip}, {"norm", s.norm}, {"hr_height", s.hr_height}, {"hr_width", s.hr_width}};
}

void from_json(const nlohmann::json& j, PreprocessStats& s) {
  j.at("clip").get_to(s.clip);
  j.at("norm").get_to(s.norm);
  s.hr_height = j.value("hr_height", std::size_t{0});
  s.hr_width = j.value("hr_width", std::size_t{0});
}

}  // namespace flimsr
