#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "flimsr/image.hpp"

namespace flimsr {

/// FLIMB v1 layout (all integers and floats little-endian):
///
///   "FLIM" | u8 version | f32 pixel_size_um | u32 C | u32 H | u32 W
///   | C x (u8 name_len, ASCII name) | C*H*W f32 values, channel-major, row-major
inline constexpr std::uint8_t kFlimbVersion = 1;

class FlimbError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_flimb(const FlimImage& image);
FlimImage decode_flimb(const std::vector<std::uint8_t>& bytes);

void write_flimb(const FlimImage& image, const std::filesystem::path& path);
FlimImage read_flimb(const std::filesystem::path& path);

}  // namespace flimsr
