#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flimsr/nn/params.hpp"

namespace flimsr {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

/// Named float arrays in a little-endian binary file plus a JSON sidecar
/// (`<path>.json`) holding architecture, hyperparameters and provenance.
///
/// Binary layout: "FSRK", u32 version, u32 count, then per array
/// u16 name length, name bytes, u8 rank, rank x u32 dims, f32 values.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray& find(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends every slice of a store as "<prefix>.<slice name>".
void append_store(Checkpoint& ckpt, const std::string& prefix, const nn::ParamStore<float>& store);
/// Restores a store written by append_store; names and shapes must match.
void restore_store(const Checkpoint& ckpt, const std::string& prefix, nn::ParamStore<float>& store);

}  // namespace flimsr
