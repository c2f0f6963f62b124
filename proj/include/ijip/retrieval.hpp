#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ijip/dataset.hpp"

namespace ijip {

enum class StrategyKind {
  static_first,
  random,
  cluster_retrieval,
  kate,
  cluster_diversity,
  rerank,
};

/// Config spelling: "static", "random", "cluster_retrieval", "kate",
/// "cluster_diversity", "rerank".
std::string_view to_string(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);
const std::vector<StrategyKind> &all_strategies();

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kate;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  /// Top-n pool re-scored by rerank; 0 selects 3k.
  std::size_t rerank_pool = 0;
  std::size_t kmeans_iters = 50;

  std::size_t effective_rerank_pool() const {
    return rerank_pool == 0 ? 3 * k : rerank_pool;
  }
  void validate() const;
};

struct Demonstration {
  /// Position in the originating database.
  std::size_t position;
  const Instance *instance;
  /// Cosine similarity to the query (auxiliary channel for rerank).
  float score;
};

struct DemonstrationSet {
  std::vector<Demonstration> items;
  StrategyKind strategy = StrategyKind::kate;
  /// Fewer than k items were available.
  bool short_set = false;
  /// The chosen strategy degenerated and top-k was used instead.
  bool fell_back = false;
  /// Directory image payloads resolve against.
  std::filesystem::path base_dir;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  std::vector<std::string> ids() const;
  std::vector<std::string> labels() const;
};

/// The k most similar view members, best first; ties by ascending id.
/// `exclude_id` removes the query itself when it lives in the database.
DemonstrationSet retrieve_topk(const IncompleteView &view, const Vectorf &query,
                               std::size_t k,
                               const std::optional<std::string> &exclude_id = std::nullopt);

/// Demonstration selection under one of the six strategies.
DemonstrationSet retrieve_with_strategy(const StrategyConfig &config,
                                        const IncompleteView &view,
                                        const Query &query);

} // namespace ijip
