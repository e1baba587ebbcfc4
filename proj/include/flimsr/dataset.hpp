#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "flimsr/image.hpp"

namespace flimsr {

struct PatientRecord {
  std::string patient_id;
  std::vector<FlimImage> images;  // whole-slide fields of view
};

struct DatasetSplit {
  std::set<std::string> train_ids;
  std::set<std::string> test_ids;
  std::uint64_t seed = 0;

  bool operator==(const DatasetSplit&) const = default;
};

/// Seeded Fisher-Yates shuffle of the ids; the first train_count go to training.
DatasetSplit split_patients(const std::vector<std::string>& patient_ids, std::size_t train_count,
                            std::uint64_t seed);

/// Writes <root>/<patient_id>/fov_<i>.flimb for every record.
void save_patients(const std::vector<PatientRecord>& patients, const std::filesystem::path& root);

/// Inverse of save_patients. Patients and fields of view are returned in sorted order.
std::vector<PatientRecord> load_patients(const std::filesystem::path& root);

}  // namespace flimsr
