#include "ijip/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace ijip {

namespace fs = std::filesystem;

namespace {

/// Box-Muller on the portable uniform source.
float gaussian(std::mt19937_64 &rng) {
  const double u1 = 1.0 - uniform_real(rng);
  const double u2 = uniform_real(rng);
  return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                            std::cos(2.0 * 3.14159265358979323846 * u2));
}

std::string padded(const char *prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, i);
  return buf;
}

void fill(Manifest &manifest, RowMatrixf &rows, const RowMatrixf &centers,
          std::size_t count, const char *prefix, const SyntheticSpec &spec,
          std::mt19937_64 &rng) {
  const auto m = static_cast<std::size_t>(centers.rows());
  rows.resize(static_cast<Eigen::Index>(count), centers.cols());
  for (std::size_t i = 0; i < count; ++i) {
    const auto label = i % m;
    for (Eigen::Index d = 0; d < centers.cols(); ++d)
      rows(static_cast<Eigen::Index>(i), d) =
          centers(static_cast<Eigen::Index>(label), d) + spec.spread * gaussian(rng);
    rows.row(static_cast<Eigen::Index>(i)).normalize();

    Instance inst;
    inst.id = padded(prefix, i);
    inst.label = manifest.labels[label];
    inst.payload.kind = spec.payload;
    inst.payload.value = spec.payload == PayloadKind::image
                             ? "images/" + inst.id + ".png"
                             : "synthetic sample " + inst.id + " of " + inst.label;
    inst.embedding_row = i;
    manifest.instances.push_back(std::move(inst));
  }
  manifest.kind = spec.payload;
}

} // namespace

SyntheticData make_synthetic(const SyntheticSpec &spec) {
  if (spec.num_labels < 2) throw InvalidArgument("synthetic data needs >= 2 labels");
  if (spec.database_size < spec.num_labels)
    throw InvalidArgument("database_size must cover every label");
  std::mt19937_64 rng(mix64(spec.seed));

  std::vector<std::string> names;
  for (std::size_t j = 0; j < spec.num_labels; ++j) names.push_back("class_" + std::to_string(j));
  const LabelSet labels(names);

  RowMatrixf centers(static_cast<Eigen::Index>(spec.num_labels), spec.dim);
  for (Eigen::Index r = 0; r < centers.rows(); ++r) {
    for (Eigen::Index d = 0; d < spec.dim; ++d) centers(r, d) = gaussian(rng);
    centers.row(r).normalize();
  }

  SyntheticData out;
  out.database.labels = labels;
  out.test.labels = labels;
  fill(out.database, out.database_rows, centers, spec.database_size, "db", spec, rng);
  fill(out.test, out.test_rows, centers, spec.test_size, "q", spec, rng);
  return out;
}

std::shared_ptr<const RetrievalDatabase> SyntheticData::make_database() const {
  return std::make_shared<const RetrievalDatabase>(database, EmbeddingMatrix(database_rows));
}

std::vector<Query> SyntheticData::make_queries() const {
  std::vector<Query> out;
  EmbeddingMatrix rows(test_rows);
  for (const auto &inst : test.instances) {
    Query q;
    q.instance = inst;
    q.embedding = rows.row(static_cast<Eigen::Index>(inst.embedding_row)).transpose();
    out.push_back(std::move(q));
  }
  return out;
}

void SyntheticData::write(const fs::path &dir) const {
  fs::create_directories(dir);
  write_manifest(dir / "db.jsonl", database);
  write_embeddings(dir / "db.ijeb", database_rows);
  write_manifest(dir / "test.jsonl", test);
  write_embeddings(dir / "test.ijeb", test_rows);
}

} // namespace ijip
