#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ijip/dataset.hpp"

namespace ijip {

/// Gaussian class blobs on the unit sphere, for fixtures and desk runs.
struct SyntheticSpec {
  std::size_t num_labels = 10;
  std::size_t database_size = 200;
  std::size_t test_size = 20;
  Eigen::Index dim = 16;
  /// Per-coordinate noise around each unit class center.
  float spread = 0.15f;
  std::uint64_t seed = 1;
  PayloadKind payload = PayloadKind::image;
};

struct SyntheticData {
  Manifest database;
  RowMatrixf database_rows;
  Manifest test;
  RowMatrixf test_rows;

  std::shared_ptr<const RetrievalDatabase> make_database() const;
  std::vector<Query> make_queries() const;
  /// Writes db.jsonl, db.ijeb, test.jsonl, test.ijeb into `dir`.
  void write(const std::filesystem::path &dir) const;
};

/// Labels are "class_0".."class_{m-1}"; instances are spread round-robin so
/// every label is present.
SyntheticData make_synthetic(const SyntheticSpec &spec);

} // namespace ijip
