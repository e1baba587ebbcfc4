#include "flimsr/flimb.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

namespace flimsr {
namespace {

constexpr std::uint8_t kMagic[4] = {0x46, 0x4C, 0x49, 0x4D};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FlimbError(std::string("truncated FLIMB file: ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_flimb(const FlimImage& image) {
  if (!image.all_finite()) throw FlimbError("non-finite data");
  std::vector<std::uint8_t> out;
  out.reserve(21 + image.channels() * 8 + image.data().size() * 4);
  for (auto b : kMagic) out.push_back(b);
  out.push_back(kFlimbVersion);
  put_f32(out, image.pixel_size_um());
  put_u32(out, static_cast<std::uint32_t>(image.channels()));
  put_u32(out, static_cast<std::uint32_t>(image.height()));
  put_u32(out, static_cast<std::uint32_t>(image.width()));
  for (const auto& ch : image.channel_descs()) {
    if (ch.name.size() > 255) throw FlimbError("channel name longer than 255 bytes");
    out.push_back(static_cast<std::uint8_t>(ch.name.size()));
    for (char ch_byte : ch.name) out.push_back(static_cast<std::uint8_t>(ch_byte));
  }
  for (float v : image.data()) put_f32(out, v);
  return out;
}

FlimImage decode_flimb(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FlimbError("not a FLIMB file");
  }
  for (int i = 0; i < 4; ++i) r.u8("magic");
  const std::uint8_t version = r.u8("version");
  if (version != kFlimbVersion) {
    throw FlimbError("unsupported FLIMB version " + std::to_string(version) + " (expected " +
                     std::to_string(kFlimbVersion) + ")");
  }
  const float pixel_size = r.f32("pixel size");
  const std::uint32_t c = r.u32("channel count");
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  if (c == 0 || h == 0 || w == 0) throw FlimbError("FLIMB dimensions must be nonzero");
  if (!std::isfinite(pixel_size) || pixel_size <= 0.0f) throw FlimbError("invalid FLIMB pixel size");

  std::vector<ChannelDesc> channels;
  channels.reserve(c);
  for (std::uint32_t i = 0; i < c; ++i) {
    const std::uint8_t len = r.u8("channel name length");
    r.need(len, "channel name");
    std::string name;
    for (std::uint8_t j = 0; j < len; ++j) name.push_back(static_cast<char>(r.u8("channel name")));
    channels.push_back({name, kind_from_name(name)});
  }

  const std::uint64_t count = std::uint64_t{c} * h * w;
  if (count > r.remaining() / 4) throw FlimbError("truncated FLIMB payload");
  std::vector<float> data(count);
  for (auto& v : data) v = r.f32("payload");
  if (r.remaining() != 0) throw FlimbError("trailing bytes after FLIMB payload");
  for (float v : data) {
    if (!std::isfinite(v)) throw FlimbError("non-finite data");
  }
  return FlimImage(std::move(channels), h, w, pixel_size, std::move(data));
}

void write_flimb(const FlimImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_flimb(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FlimbError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FlimbError("write failed: " + path.string());
}

FlimImage read_flimb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FlimbError("cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_flimb(bytes);
}

}  // namespace flimsr
