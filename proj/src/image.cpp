#include "flimsr/image.hpp"

#include <algorithm>
#include <cmath>

namespace flimsr {

const std::vector<ChannelDesc>& standard_channels() {
  static const std::vector<ChannelDesc> channels = {
      {"LT1", ChannelKind::lifetime}, {"INT1", ChannelKind::intensity},
      {"LT2", ChannelKind::lifetime}, {"INT2", ChannelKind::intensity},
      {"LT3", ChannelKind::lifetime}, {"INT3", ChannelKind::intensity},
  };
  return channels;
}

ChannelKind kind_from_name(const std::string& name) {
  return name.rfind("LT", 0) == 0 ? ChannelKind::lifetime : ChannelKind::intensity;
}

std::size_t channel_index(const std::vector<ChannelDesc>& channels, const std::string& name) {
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i].name == name) return i;
  }
  throw std::invalid_argument("unknown channel: " + name);
}

FlimImage::FlimImage(std::vector<ChannelDesc> channels, std::size_t height, std::size_t width,
                     float pixel_size_um, std::vector<float> data)
    : channels_(std::move(channels)),
      height_(height),
      width_(width),
      pixel_size_um_(pixel_size_um),
      data_(std::move(data)) {
  if (data_.size() != channels_.size() * height_ * width_) {
    throw std::invalid_argument("image data length does not match C*H*W");
  }
  if (!all_finite()) throw std::invalid_argument("non-finite data");
  if (!std::isfinite(pixel_size_um_) || pixel_size_um_ <= 0.0f) {
    throw std::invalid_argument("pixel size must be positive");
  }
}

FlimImage FlimImage::zeros(std::vector<ChannelDesc> channels, std::size_t height,
                           std::size_t width, float pixel_size_um) {
  const std::size_t n = channels.size() * height * width;
  return FlimImage(std::move(channels), height, width, pixel_size_um, std::vector<float>(n, 0.0f));
}

bool FlimImage::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace flimsr
