#include "flimsr/dataset.hpp"

#include <algorithm>
#include <stdexcept>

#include "flimsr/flimb.hpp"
#include "flimsr/rng.hpp"

namespace flimsr {

DatasetSplit split_patients(const std::vector<std::string>& patient_ids, std::size_t train_count,
                            std::uint64_t seed) {
  if (train_count == 0 || train_count >= patient_ids.size()) {
    throw std::invalid_argument("train_count must satisfy 0 < train_count < number of patients");
  }
  const std::set<std::string> unique(patient_ids.begin(), patient_ids.end());
  if (unique.size() != patient_ids.size()) throw std::invalid_argument("duplicate patient_id");

  // Sorting first makes the split independent of the caller's ordering.
  std::vector<std::string> ids(unique.begin(), unique.end());
  Rng rng(seed);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(ids[i], ids[j]);
  }

  DatasetSplit split;
  split.seed = seed;
  split.train_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(train_count));
  split.test_ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(train_count), ids.end());
  return split;
}

void save_patients(const std::vector<PatientRecord>& patients, const std::filesystem::path& root) {
  for (const auto& p : patients) {
    const auto dir = root / p.patient_id;
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < p.images.size(); ++i) {
      write_flimb(p.images[i], dir / ("fov_" + std::to_string(i) + ".flimb"));
    }
  }
}

namespace {

// fov_<n>.flimb sorted by numeric index
std::vector<std::filesystem::path> fov_files(const std::filesystem::path& dir) {
  std::vector<std::pair<long, std::filesystem::path>> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_regular_file() || name.rfind("fov_", 0) != 0 || entry.path().extension() != ".flimb") {
      continue;
    }
    const auto stem = entry.path().stem().string().substr(4);
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) continue;
    found.emplace_back(std::stol(stem), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::filesystem::path> out;
  for (auto& [_, path] : found) out.push_back(path);
  return out;
}

}  // namespace

std::vector<PatientRecord> load_patients(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw std::runtime_error("dataset directory does not exist: " + root.string());
  }
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<PatientRecord> out;
  for (const auto& dir : dirs) {
    PatientRecord rec{dir.filename().string(), {}};
    for (const auto& f : fov_files(dir)) rec.images.push_back(read_flimb(f));
    if (!rec.images.empty()) out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace flimsr
