#include "ijip/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "ijip/kmeans.hpp"
#include "ijip/log.hpp"
#include "ijip/similarity.hpp"

namespace ijip {

namespace {

struct StrategyName {
  StrategyKind kind;
  std::string_view name;
};

constexpr StrategyName kStrategyNames[] = {
    {StrategyKind::static_first, "static"},
    {StrategyKind::random, "random"},
    {StrategyKind::cluster_retrieval, "cluster_retrieval"},
    {StrategyKind::kate, "kate"},
    {StrategyKind::cluster_diversity, "cluster_diversity"},
    {StrategyKind::rerank, "rerank"},
};

} // namespace

std::string_view to_string(StrategyKind kind) {
  for (const auto &n : kStrategyNames)
    if (n.kind == kind) return n.name;
  return "unknown";
}

StrategyKind parse_strategy(std::string_view name) {
  for (const auto &n : kStrategyNames)
    if (n.name == name) return n.kind;
  if (name == "vicl_rerank" || name == "vicl-rerank") return StrategyKind::rerank;
  if (name == "cluster-retrieval") return StrategyKind::cluster_retrieval;
  if (name == "cluster-diversity") return StrategyKind::cluster_diversity;
  throw InvalidArgument("unknown strategy \"" + std::string(name) + "\"");
}

const std::vector<StrategyKind> &all_strategies() {
  static const std::vector<StrategyKind> all = [] {
    std::vector<StrategyKind> v;
    for (const auto &n : kStrategyNames) v.push_back(n.kind);
    return v;
  }();
  return all;
}

void StrategyConfig::validate() const {
  if (k < 1) throw InvalidArgument("strategy k must be >= 1");
  if (effective_rerank_pool() < k)
    throw InvalidArgument("rerank_pool must be >= k");
}

std::vector<std::string> DemonstrationSet::ids() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto &d : items) out.push_back(d.instance->id);
  return out;
}

std::vector<std::string> DemonstrationSet::labels() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto &d : items) out.push_back(d.instance->label);
  return out;
}

namespace {

/// View members eligible as demonstrations for this query.
std::vector<std::size_t> candidates(const IncompleteView &view,
                                    const std::optional<std::string> &exclude_id) {
  if (view.empty()) throw InvalidArgument("retrieval from an empty view");
  std::optional<std::size_t> skip;
  if (exclude_id) skip = view.base().find(*exclude_id);
  std::vector<std::size_t> out;
  out.reserve(view.size());
  for (auto pos : view.members())
    if (!skip || pos != *skip) out.push_back(pos);
  if (out.empty()) throw InvalidArgument("retrieval from an empty view");
  return out;
}

void check_query(const IncompleteView &view, const Vectorf &query) {
  if (query.size() != view.base().embeddings().dim())
    throw InvalidArgument("query dim " + std::to_string(query.size()) +
                          " != embedding dim " +
                          std::to_string(view.base().embeddings().dim()));
  if (!query.allFinite()) throw InvalidArgument("query embedding not finite");
}

Demonstration make_demo(const IncompleteView &view, std::size_t pos, float score) {
  return {pos, &view.instance(pos), score};
}

std::vector<Ranked<float>> score_all(const RowMatrixf &rows,
                                     const std::vector<std::size_t> &positions,
                                     const Vectorf &query) {
  const Vectorf scores = gathered_scores(rows, positions, query);
  std::vector<Ranked<float>> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    out[i] = {positions[i], scores[static_cast<Eigen::Index>(i)]};
  return out;
}

auto id_less(const IncompleteView &view) {
  return [&view](std::size_t a, std::size_t b) {
    return view.instance(a).id < view.instance(b).id;
  };
}

DemonstrationSet topk_from(const IncompleteView &view,
                           const std::vector<std::size_t> &pool,
                           const Vectorf &query, std::size_t k) {
  DemonstrationSet out;
  out.strategy = StrategyKind::kate;
  auto ranked = top_k(score_all(view.base().embeddings().rows(), pool, query), k,
                      id_less(view));
  for (const auto &r : ranked) out.items.push_back(make_demo(view, r.position, r.score));
  out.short_set = pool.size() < k;
  return out;
}

float query_score(const IncompleteView &view, std::size_t pos, const Vectorf &query) {
  return view.base().embeddings().row(static_cast<Eigen::Index>(pos)).dot(query);
}

RowMatrixf gather_rows(const IncompleteView &view, const std::vector<std::size_t> &pool) {
  const auto &rows = view.base().embeddings().rows();
  RowMatrixf out(static_cast<Eigen::Index>(pool.size()), rows.cols());
  for (std::size_t i = 0; i < pool.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(pool[i]));
  return out;
}

DemonstrationSet clustered(const StrategyConfig &config, const IncompleteView &view,
                           const std::vector<std::size_t> &pool, const Query &query) {
  const auto k = config.k;
  if (pool.size() <= k) {
    auto out = topk_from(view, pool, query.embedding, k);
    out.strategy = config.kind;
    return out;
  }
  const RowMatrixf points = gather_rows(view, pool);
  const auto km = kmeans(points, k, config.kmeans_iters, config.seed);
  if (km.empty_clusters > 0) {
    warn("k-means produced " + std::to_string(km.empty_clusters) +
         " empty cluster(s); falling back to top-k");
    auto out = topk_from(view, pool, query.embedding, k);
    out.strategy = config.kind;
    out.fell_back = true;
    return out;
  }

  // One representative per cluster.
  std::vector<std::optional<std::size_t>> rep(k);
  std::vector<float> rep_key(k);
  const bool by_query = config.kind == StrategyKind::cluster_retrieval;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto c = km.assignment[i];
    const auto row = points.row(static_cast<Eigen::Index>(i));
    // Larger key is better.
    const float key = by_query
                          ? row.dot(query.embedding)
                          : -(row - km.centroids.row(static_cast<Eigen::Index>(c))).squaredNorm();
    const bool better =
        !rep[c] || key > rep_key[c] ||
        (key == rep_key[c] && view.instance(pool[i]).id < view.instance(pool[*rep[c]]).id);
    if (better) {
      rep[c] = i;
      rep_key[c] = key;
    }
  }

  DemonstrationSet out;
  out.strategy = config.kind;
  for (std::size_t c = 0; c < k; ++c) {
    const auto pos = pool[*rep[c]];
    out.items.push_back(make_demo(view, pos, query_score(view, pos, query.embedding)));
  }
  if (by_query) {
    std::sort(out.items.begin(), out.items.end(), [&](const auto &a, const auto &b) {
      if (a.score != b.score) return a.score > b.score;
      return a.instance->id < b.instance->id;
    });
  } else {
    std::sort(out.items.begin(), out.items.end(),
              [](const auto &a, const auto &b) { return a.position < b.position; });
  }
  return out;
}

} // namespace

DemonstrationSet retrieve_topk(const IncompleteView &view, const Vectorf &query,
                               std::size_t k, const std::optional<std::string> &exclude_id) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  check_query(view, query);
  auto out = topk_from(view, candidates(view, exclude_id), query, k);
  out.base_dir = view.base().manifest().base_dir;
  return out;
}

namespace {

DemonstrationSet select(const StrategyConfig &config, const IncompleteView &view,
                        const Query &query) {
  check_query(view, query.embedding);
  const auto pool = candidates(view, query.instance.id);
  const auto k = config.k;

  switch (config.kind) {
  case StrategyKind::kate:
    return topk_from(view, pool, query.embedding, k);

  case StrategyKind::static_first: {
    DemonstrationSet out;
    out.strategy = config.kind;
    for (std::size_t i = 0; i < std::min(k, pool.size()); ++i)
      out.items.push_back(make_demo(view, pool[i], query_score(view, pool[i], query.embedding)));
    out.short_set = pool.size() < k;
    return out;
  }

  case StrategyKind::random: {
    DemonstrationSet out;
    out.strategy = config.kind;
    std::mt19937_64 rng(hash_parts({config.seed, fnv1a(query.instance.id), 0x72616e64ULL}));
    std::vector<std::size_t> order = pool;
    const auto take = std::min(k, order.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(order[i], order[i + uniform_index(rng, order.size() - i)]);
      out.items.push_back(make_demo(view, order[i], query_score(view, order[i], query.embedding)));
    }
    out.short_set = pool.size() < k;
    return out;
  }

  case StrategyKind::cluster_retrieval:
  case StrategyKind::cluster_diversity:
    return clustered(config, view, pool, query);

  case StrategyKind::rerank: {
    const auto &aux = view.base().aux_embeddings();
    if (!aux || !query.aux_embedding) {
      auto out = topk_from(view, pool, query.embedding, k);
      out.strategy = config.kind;
      return out;
    }
    if (query.aux_embedding->size() != aux->dim())
      throw InvalidArgument("query auxiliary dim mismatch");
    auto first = top_k(score_all(view.base().embeddings().rows(), pool, query.embedding),
                       config.effective_rerank_pool(), id_less(view));
    std::vector<std::size_t> shortlist;
    for (const auto &r : first) shortlist.push_back(r.position);
    auto second = top_k(score_all(aux->rows(), shortlist, *query.aux_embedding), k,
                        id_less(view));
    DemonstrationSet out;
    out.strategy = config.kind;
    for (const auto &r : second) out.items.push_back(make_demo(view, r.position, r.score));
    out.short_set = pool.size() < k;
    return out;
  }
  }
  throw InvalidArgument("unhandled strategy");
}

} // namespace

DemonstrationSet retrieve_with_strategy(const StrategyConfig &config,
                                        const IncompleteView &view, const Query &query) {
  config.validate();
  auto out = select(config, view, query);
  out.base_dir = view.base().manifest().base_dir;
  return out;
}

} // namespace ijip
