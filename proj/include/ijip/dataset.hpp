#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ijip/common.hpp"

namespace ijip {

template <typename Scalar>
using RowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using RowMatrixf = RowMatrix<float>;
using Vectorf = Vector<float>;

/// Ordered, duplicate-free label names C_1..C_m. Position defines the
/// sub-question index used by prompting and the engine.
class LabelSet {
public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> labels);

  const std::vector<std::string> &labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  const std::string &operator[](std::size_t i) const { return labels_[i]; }
  std::optional<std::size_t> index_of(const std::string &label) const;
  bool contains(const std::string &label) const {
    return index_of(label).has_value();
  }

  auto begin() const { return labels_.begin(); }
  auto end() const { return labels_.end(); }

  friend bool operator==(const LabelSet &a, const LabelSet &b) {
    return a.labels_ == b.labels_;
  }

private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class PayloadKind { image, text };

const char *to_string(PayloadKind kind);

struct Payload {
  PayloadKind kind = PayloadKind::image;
  /// Image path relative to the manifest directory, or inline text.
  std::string value;
};

struct Instance {
  std::string id;
  std::string label;
  Payload payload;
  std::size_t embedding_row = 0;
};

struct Manifest {
  LabelSet labels;
  std::vector<Instance> instances;
  PayloadKind kind = PayloadKind::image;
  /// Directory image payloads are resolved against.
  std::filesystem::path base_dir;
};

Manifest parse_manifest(std::istream &in,
                        const std::filesystem::path &base_dir = {});
Manifest load_manifest(const std::filesystem::path &path);
void write_manifest(std::ostream &out, const Manifest &manifest);
void write_manifest(const std::filesystem::path &path,
                    const Manifest &manifest);

/// Row-major float32 embeddings, one L2-normalized row per instance.
class EmbeddingMatrix {
public:
  EmbeddingMatrix() = default;
  /// Takes arbitrary finite rows and normalizes any row whose norm is off by
  /// more than kNormTolerance. Zero rows are rejected.
  explicit EmbeddingMatrix(RowMatrixf rows);

  static constexpr float kNormTolerance = 1e-3f;

  Eigen::Index dim() const { return rows_.cols(); }
  Eigen::Index count() const { return rows_.rows(); }
  const RowMatrixf &rows() const { return rows_; }
  auto row(Eigen::Index i) const { return rows_.row(i); }

  /// Number of rows rescaled at construction.
  std::size_t renormalized_rows() const { return renormalized_; }

private:
  RowMatrixf rows_;
  std::size_t renormalized_ = 0;
};

inline constexpr char kEmbeddingMagic[4] = {'I', 'J', 'E', 'B'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

EmbeddingMatrix read_embeddings(std::istream &in,
                                std::optional<std::size_t> expected_count);
/// Loads an IJEB file. Rows off unit norm are renormalized with a warning.
EmbeddingMatrix load_embeddings(const std::filesystem::path &path,
                                std::optional<std::size_t> expected_count);
void write_embeddings(std::ostream &out, const RowMatrixf &rows);
void write_embeddings(const std::filesystem::path &path, const RowMatrixf &rows);

/// Labeled, embedded example pool. Immutable once built.
class RetrievalDatabase {
public:
  RetrievalDatabase(Manifest manifest, EmbeddingMatrix embeddings,
                    std::optional<EmbeddingMatrix> aux = std::nullopt);

  const LabelSet &labelset() const { return manifest_.labels; }
  const Manifest &manifest() const { return manifest_; }
  const std::vector<Instance> &instances() const { return manifest_.instances; }
  const EmbeddingMatrix &embeddings() const { return embeddings_; }
  const std::optional<EmbeddingMatrix> &aux_embeddings() const { return aux_; }

  std::optional<std::size_t> find(const std::string &id) const;
  /// Stable hash of the (id, label) sequence.
  std::uint64_t fingerprint() const { return fingerprint_; }

private:
  Manifest manifest_;
  EmbeddingMatrix embeddings_;
  std::optional<EmbeddingMatrix> aux_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::uint64_t fingerprint_ = 0;
};

std::shared_ptr<const RetrievalDatabase>
load_database(const std::filesystem::path &manifest,
              const std::filesystem::path &embeddings,
              const std::optional<std::filesystem::path> &aux = std::nullopt);

/// The database restricted to available labels (D_in). Iteration yields
/// database positions, never one whose label is masked.
class IncompleteView {
public:
  IncompleteView(std::shared_ptr<const RetrievalDatabase> base,
                 std::vector<std::string> masked, std::uint64_t seed);

  const RetrievalDatabase &base() const { return *base_; }
  const std::shared_ptr<const RetrievalDatabase> &base_ptr() const {
    return base_;
  }
  const LabelSet &labelset() const { return base_->labelset(); }
  /// Both lists are in label-set order.
  const std::vector<std::string> &available_labels() const {
    return available_;
  }
  const std::vector<std::string> &masked_labels() const { return masked_; }
  bool is_available(const std::string &label) const;
  std::uint64_t seed() const { return seed_; }

  /// Database positions of visible instances, in manifest order.
  const std::vector<std::size_t> &members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  const Instance &instance(std::size_t position) const {
    return base_->instances()[position];
  }

private:
  std::shared_ptr<const RetrievalDatabase> base_;
  std::vector<std::string> available_;
  std::vector<std::string> masked_;
  std::vector<bool> available_mask_;
  std::vector<std::size_t> members_;
  std::uint64_t seed_;
};

/// Number of labels masked for a proportion: floor(p * m).
std::size_t masked_label_count(double missing_proportion, std::size_t m);

/// Masks floor(p*m) labels drawn uniformly without replacement. The draw is
/// a function of (database fingerprint, p, seed).
IncompleteView mask_labels(std::shared_ptr<const RetrievalDatabase> db,
                           double missing_proportion, std::uint64_t seed);

IncompleteView mask_explicit(std::shared_ptr<const RetrievalDatabase> db,
                             const std::vector<std::string> &masked);

/// A query instance together with its embedding rows.
struct Query {
  Instance instance;
  Vectorf embedding;
  std::optional<Vectorf> aux_embedding;
  /// Directory image payloads resolve against.
  std::filesystem::path base_dir;
};

/// Loads queries from a manifest + embeddings pair. The manifest header must
/// match `labels`.
std::vector<Query>
load_queries(const std::filesystem::path &manifest,
             const std::filesystem::path &embeddings, const LabelSet &labels,
             const std::optional<std::filesystem::path> &aux = std::nullopt);

/// Query built from a database row (used when the query is drawn from the
/// database itself and excluded from retrieval by id).
Query query_from_database(const RetrievalDatabase &db, std::size_t position);

} // namespace ijip
