#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flimsr {

enum class ChannelKind { lifetime, intensity };

struct ChannelDesc {
  std::string name;
  ChannelKind kind = ChannelKind::lifetime;

  bool operator==(const ChannelDesc&) const = default;
};

/// The canonical six-channel layout: LT1, INT1, LT2, INT2, LT3, INT3.
const std::vector<ChannelDesc>& standard_channels();

/// Channel kind implied by a name ("LT*" is lifetime, everything else intensity).
ChannelKind kind_from_name(const std::string& name);

/// Index of a channel by name, or throws std::invalid_argument.
std::size_t channel_index(const std::vector<ChannelDesc>& channels, const std::string& name);

/// Multi-channel float raster stored channel-major, row-major.
///
/// Invariants checked on construction: data.size() == C*H*W and every value finite.
class FlimImage {
 public:
  static constexpr float kHrPixelSizeUm = 7.5f;

  FlimImage() = default;
  FlimImage(std::vector<ChannelDesc> channels, std::size_t height, std::size_t width,
            float pixel_size_um, std::vector<float> data);

  /// Zero-filled image with the given layout.
  static FlimImage zeros(std::vector<ChannelDesc> channels, std::size_t height, std::size_t width,
                         float pixel_size_um = kHrPixelSizeUm);

  std::size_t channels() const { return channels_.size(); }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t plane_size() const { return height_ * width_; }
  float pixel_size_um() const { return pixel_size_um_; }
  const std::vector<ChannelDesc>& channel_descs() const { return channels_; }

  std::span<const float> data() const { return data_; }
  std::span<float> mutable_data() { return data_; }

  std::span<const float> plane(std::size_t c) const {
    return std::span<const float>(data_).subspan(c * plane_size(), plane_size());
  }
  std::span<float> mutable_plane(std::size_t c) {
    return std::span<float>(data_).subspan(c * plane_size(), plane_size());
  }

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }
  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * height_ + y) * width_ + x];
  }

  bool all_finite() const;

  bool operator==(const FlimImage&) const = default;

 private:
  std::vector<ChannelDesc> channels_;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  float pixel_size_um_ = kHrPixelSizeUm;
  std::vector<float> data_;
};

}  // namespace flimsr
