#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ijip/common.hpp"

namespace ijip {

/// dot(a, b) / (|a| |b|). Symmetric; equals dot(a, b) for unit rows.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA> &a,
                                            const Eigen::MatrixBase<DerivedB> &b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size())
    throw InvalidArgument("cosine_similarity: dim mismatch (" +
                          std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  if (!a.allFinite() || !b.allFinite())
    throw InvalidArgument("cosine_similarity: non-finite input");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0))
    throw InvalidArgument("cosine_similarity: zero vector");
  const Scalar s = a.dot(b.template cast<Scalar>()) / (na * nb);
  return std::clamp(s, Scalar(-1), Scalar(1));
}

/// Similarity of each listed row of a unit-row matrix against a unit query:
/// out[i] = rows.row(positions[i]) . query.
template <typename DerivedM, typename DerivedQ>
Eigen::Matrix<typename DerivedM::Scalar, Eigen::Dynamic, 1>
gathered_scores(const Eigen::MatrixBase<DerivedM> &rows,
                std::span<const std::size_t> positions,
                const Eigen::MatrixBase<DerivedQ> &query) {
  using Scalar = typename DerivedM::Scalar;
  if (rows.cols() != query.size())
    throw InvalidArgument("query dim " + std::to_string(query.size()) +
                          " != embedding dim " + std::to_string(rows.cols()));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    out[static_cast<Eigen::Index>(i)] =
        rows.row(static_cast<Eigen::Index>(positions[i])).dot(query);
  return out;
}

/// Ranked entry: score plus a tie-break key.
template <typename Scalar> struct Ranked {
  std::size_t position; // caller-defined position (database row)
  Scalar score;
};

/// Selects the k best entries by (score desc, key asc), ordered best first.
/// `key_less(a, b)` orders equal-score entries.
template <typename Scalar, typename KeyLess>
std::vector<Ranked<Scalar>> top_k(std::vector<Ranked<Scalar>> entries,
                                  std::size_t k, KeyLess key_less) {
  auto better = [&](const Ranked<Scalar> &a, const Ranked<Scalar> &b) {
    if (a.score != b.score) return a.score > b.score;
    return key_less(a.position, b.position);
  };
  k = std::min(k, entries.size());
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k),
                    entries.end(), better);
  entries.resize(k);
  return entries;
}

} // namespace ijip
