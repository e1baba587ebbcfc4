#include "flimsr/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

namespace flimsr {
namespace {

constexpr char kMagic[4] = {'F', 'S', 'R', 'K'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Cursor {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (bytes.size() - pos < n) throw CheckpointError("truncated checkpoint");
  }
  std::uint32_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint32_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
    return v;
  }
};

}  // namespace

const NamedArray& Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw CheckpointError("checkpoint has no array named " + name);
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    if (a.name.size() > 0xFFFF) throw CheckpointError("array name too long");
    if (a.shape.size() > 255) throw CheckpointError("array rank too large");
    std::size_t n = 1;
    for (auto d : a.shape) n *= d;
    if (n != a.values.size()) throw CheckpointError("array " + a.name + " size does not match its shape");
    out.push_back(static_cast<std::uint8_t>(a.name.size()));
    out.push_back(static_cast<std::uint8_t>(a.name.size() >> 8));
    for (char c : a.name) out.push_back(static_cast<std::uint8_t>(c));
    out.push_back(static_cast<std::uint8_t>(a.shape.size()));
    for (auto d : a.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : a.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write checkpoint: " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("write failed: " + path.string());
  }
  nlohmann::json side = ckpt.meta;
  side["format_version"] = kCheckpointVersion;
  side["arrays"] = nlohmann::json::array();
  for (const auto& a : ckpt.arrays) side["arrays"].push_back({{"name", a.name}, {"shape", a.shape}});
  std::ofstream s(sidecar_path(path), std::ios::trunc);
  if (!s) throw CheckpointError("cannot write checkpoint sidecar: " + sidecar_path(path).string());
  s << side.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw CheckpointError("not a checkpoint file: " + path.string());
  }
  Cursor c{bytes, 4};
  const auto version = c.uint(4);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto count = c.uint(4);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const auto len = c.uint(2);
    c.need(len);
    a.name.assign(reinterpret_cast<const char*>(bytes.data() + c.pos), len);
    c.pos += len;
    const auto rank = c.uint(1);
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(c.uint(4));
      n *= a.shape.back();
    }
    if (n > (bytes.size() - c.pos) / 4) throw CheckpointError("truncated checkpoint");
    a.values.resize(n);
    for (auto& v : a.values) {
      v = std::bit_cast<float>(c.uint(4));
      if (!std::isfinite(v)) throw CheckpointError("non-finite value in checkpoint array " + a.name);
    }
    ckpt.arrays.push_back(std::move(a));
  }
  if (c.pos != bytes.size()) throw CheckpointError("trailing bytes in checkpoint");

  std::ifstream s(sidecar_path(path));
  if (!s) throw CheckpointError("missing checkpoint sidecar: " + sidecar_path(path).string());
  try {
    ckpt.meta = nlohmann::json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint sidecar: ") + e.what());
  }
  ckpt.meta.erase("arrays");
  ckpt.meta.erase("format_version");
  return ckpt;
}

void append_store(Checkpoint& ckpt, const std::string& prefix, const nn::ParamStore<float>& store) {
  const auto values = store.values();
  for (const auto& s : store.slices()) {
    NamedArray a{prefix + "." + s.name, s.shape, {}};
    a.values.assign(values.begin() + static_cast<std::ptrdiff_t>(s.offset),
                    values.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size));
    ckpt.arrays.push_back(std::move(a));
  }
}

void restore_store(const Checkpoint& ckpt, const std::string& prefix, nn::ParamStore<float>& store) {
  auto values = store.values();
  for (const auto& s : store.slices()) {
    const auto& a = ckpt.find(prefix + "." + s.name);
    if (a.shape != s.shape) throw CheckpointError("shape mismatch for " + a.name);
    std::copy(a.values.begin(), a.values.end(), values.begin() + static_cast<std::ptrdiff_t>(s.offset));
  }
}

}  // namespace flimsr
