#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "ijip/kmeans.hpp"
#include "ijip/retrieval.hpp"
#include "ijip/similarity.hpp"
#include "ijip/synthetic.hpp"
#include "test_util.hpp"

using namespace ijip;
using ijip::testing::make_db;
using ijip::testing::make_query;

namespace {

std::string pad_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "x%03zu", i);
  return buf;
}

std::shared_ptr<const RetrievalDatabase> db_from_rows(const RowMatrixf &rows,
                                                      std::size_t num_labels = 2) {
  std::vector<std::string> labels;
  for (std::size_t j = 0; j < num_labels; ++j) labels.push_back("L" + std::to_string(j));
  std::vector<std::pair<std::string, std::string>> items;
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    items.emplace_back(pad_id(static_cast<std::size_t>(i)),
                       labels[static_cast<std::size_t>(i) % num_labels]);
  return make_db(labels, items, rows);
}

/// Sort-everything reference: scores in double, order by (score desc, id asc).
std::vector<std::size_t> full_sort_oracle(const RowMatrixf &rows, const Vectorf &q,
                                          std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    double s = 0;
    for (Eigen::Index d = 0; d < rows.cols(); ++d)
      s += static_cast<double>(rows(i, d)) * static_cast<double>(q[d]);
    all.emplace_back(s, static_cast<std::size_t>(i));
  }
  std::sort(all.begin(), all.end(), [](const auto &a, const auto &b) {
    if (a.first != b.first) return a.first > b.first;
    return pad_id(a.second) < pad_id(b.second);
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

RowMatrixf gaussian_unit_rows(std::size_t n, Eigen::Index dim, std::mt19937_64 &rng) {
  std::normal_distribution<float> g;
  RowMatrixf rows(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index d = 0; d < dim; ++d) rows(i, d) = g(rng);
  rows.rowwise().normalize();
  return rows;
}

} // namespace

TEST(Cosine, HandComputedValues) {
  Eigen::Vector3f a(1, 0, 0), b(0, 1, 0);
  EXPECT_FLOAT_EQ(cosine_similarity(a, a), 1.0f);
  EXPECT_FLOAT_EQ(cosine_similarity(a, b), 0.0f);
  Eigen::Vector3f c(0.6f, 0.8f, 0), d(0.8f, 0.6f, 0);
  // 0.6*0.8 + 0.8*0.6
  EXPECT_NEAR(cosine_similarity(c, d), 0.96f, 1e-6f);
  EXPECT_FLOAT_EQ(cosine_similarity(c, d), cosine_similarity(d, c));
}

TEST(Cosine, RejectsBadInput) {
  Eigen::Vector3f a(1, 0, 0), z(0, 0, 0);
  Eigen::VectorXf short_v = Eigen::VectorXf::Unit(2, 0);
  EXPECT_THROW(cosine_similarity(a, z), InvalidArgument);
  EXPECT_THROW(cosine_similarity(a, short_v), InvalidArgument);
  Eigen::Vector3f nan_v(std::nanf(""), 0, 0);
  EXPECT_THROW(cosine_similarity(a, nan_v), InvalidArgument);
}

TEST(TopK, OrdersBySimilarity) {
  // Scores 0.1, 0.9, 0.5 against e0.
  RowMatrixf rows(3, 2);
  rows << 0.1f, std::sqrt(1 - 0.01f), 0.9f, std::sqrt(1 - 0.81f), 0.5f, std::sqrt(0.75f);
  const auto db = db_from_rows(rows);
  const auto view = mask_explicit(db, {});
  const auto out = retrieve_topk(view, Eigen::Vector2f(1, 0), 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.items[0].position, 1u);
  EXPECT_EQ(out.items[1].position, 2u);
  EXPECT_FALSE(out.short_set);
}

TEST(TopK, ShortSetWhenViewTooSmall) {
  const auto db = db_from_rows(RowMatrixf::Identity(3, 3));
  const auto out = retrieve_topk(mask_explicit(db, {}), Eigen::Vector3f(1, 0, 0), 5);
  EXPECT_EQ(out.size(), 3u);
  EXPECT_TRUE(out.short_set);
}

TEST(TopK, TiesBreakByAscendingId) {
  RowMatrixf rows(4, 2);
  rows << 0, 1, 1, 0, 1, 0, 0, 1;
  const auto db = db_from_rows(rows);
  const auto out = retrieve_topk(mask_explicit(db, {}), Eigen::Vector2f(1, 0), 3);
  EXPECT_EQ(out.ids(), (std::vector<std::string>{"x001", "x002", "x000"}));
}

TEST(TopK, ExcludesQueryId) {
  const auto db = db_from_rows(RowMatrixf::Identity(3, 3));
  const auto out = retrieve_topk(mask_explicit(db, {}), Eigen::Vector3f(1, 0, 0), 3, "x000");
  const auto ids = out.ids();
  EXPECT_EQ(std::count(ids.begin(), ids.end(), "x000"), 0);
  EXPECT_EQ(out.size(), 2u);
}

TEST(TopK, MatchesFullSortOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rows = gaussian_unit_rows(50, 8, rng);
    const auto db = db_from_rows(rows);
    const Vectorf q = gaussian_unit_rows(1, 8, rng).row(0).transpose();
    const auto got = retrieve_topk(mask_explicit(db, {}), q, 10);
    const auto want = full_sort_oracle(rows, q, 10);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (got.items[i].position == want[i]) continue;
      // Only float-vs-double rounding on a near-tie may reorder.
      const float a = rows.row(static_cast<Eigen::Index>(want[i])).dot(q);
      EXPECT_NEAR(got.items[i].score, a, 1e-6f) << "trial " << trial << " rank " << i;
    }
    for (std::size_t i = 1; i < got.size(); ++i)
      EXPECT_GE(got.items[i - 1].score, got.items[i].score);
  }
}

TEST(TopK, NeverReturnsMaskedLabels) {
  SyntheticSpec spec;
  const auto data = make_synthetic(spec);
  const auto db = data.make_database();
  const auto queries = data.make_queries();
  const auto view = mask_labels(db, 0.4, 9);
  for (const auto &q : queries)
    for (const auto &label : retrieve_topk(view, q.embedding, 10).labels())
      EXPECT_TRUE(view.is_available(label)) << label;
}

TEST(Strategies, KateEqualsTopK) {
  SyntheticSpec spec;
  const auto data = make_synthetic(spec);
  const auto db = data.make_database();
  const auto view = mask_labels(db, 0.4, 2);
  for (const auto &q : data.make_queries()) {
    StrategyConfig cfg;
    cfg.kind = StrategyKind::kate;
    cfg.k = 7;
    EXPECT_EQ(retrieve_with_strategy(cfg, view, q).ids(),
              retrieve_topk(view, q.embedding, 7, q.instance.id).ids());
  }
}

TEST(Strategies, RandomIsSeededPerQuery) {
  SyntheticSpec spec;
  const auto data = make_synthetic(spec);
  const auto db = data.make_database();
  const auto view = mask_explicit(db, {});
  const auto q = data.make_queries().front();
  StrategyConfig cfg;
  cfg.kind = StrategyKind::random;
  cfg.seed = 4;
  const auto a = retrieve_with_strategy(cfg, view, q).ids();
  EXPECT_EQ(a, retrieve_with_strategy(cfg, view, q).ids());
  EXPECT_EQ(std::set<std::string>(a.begin(), a.end()).size(), a.size());
  cfg.seed = 5;
  EXPECT_NE(a, retrieve_with_strategy(cfg, view, q).ids());
}

TEST(Strategies, StaticTakesManifestOrder) {
  const auto db = db_from_rows(RowMatrixf::Identity(6, 6), 3);
  const auto view = mask_explicit(db, {"L1"});
  StrategyConfig cfg;
  cfg.kind = StrategyKind::static_first;
  cfg.k = 3;
  const auto q = make_query("q", "L0", Eigen::VectorXf::Unit(6, 5));
  EXPECT_EQ(retrieve_with_strategy(cfg, view, q).ids(),
            (std::vector<std::string>{"x000", "x002", "x003"}));
}

TEST(Strategies, ClusterDiversityPicksEachBlobsCentroidNearest) {
  // Three tight blobs on the unit circle at 0, 120 and 240 degrees.
  std::mt19937_64 rng(17);
  std::normal_distribution<float> jitter(0.0f, 0.03f);
  const int per_blob = 6;
  RowMatrixf rows(3 * per_blob, 2);
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < per_blob; ++i) {
      const float angle = static_cast<float>(b) * 2.0943951f + jitter(rng);
      rows.row(b * per_blob + i) << std::cos(angle), std::sin(angle);
    }
  const auto db = db_from_rows(rows);
  const auto view = mask_explicit(db, {});
  StrategyConfig cfg;
  cfg.kind = StrategyKind::cluster_diversity;
  cfg.k = 3;
  cfg.seed = 1;
  const auto q = make_query("query", "L0", Eigen::Vector2f(1, 0));
  const auto got = retrieve_with_strategy(cfg, view, q);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_FALSE(got.fell_back);

  // Exhaustive: blob mean, then the member nearest to it.
  std::vector<std::size_t> want;
  for (int b = 0; b < 3; ++b) {
    Eigen::RowVector2f mean = rows.middleRows(b * per_blob, per_blob).colwise().mean();
    std::size_t best = 0;
    float best_d = 1e9f;
    for (int i = 0; i < per_blob; ++i) {
      const float d = (rows.row(b * per_blob + i) - mean).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::size_t>(b * per_blob + i);
      }
    }
    want.push_back(best);
  }
  std::vector<std::size_t> positions;
  for (const auto &d : got.items) positions.push_back(d.position);
  EXPECT_EQ(positions, want);
}

TEST(Strategies, ClusterRetrievalReturnsKAvailableItems) {
  SyntheticSpec spec;
  const auto data = make_synthetic(spec);
  const auto db = data.make_database();
  const auto view = mask_labels(db, 0.4, 6);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::cluster_retrieval;
  cfg.k = 8;
  for (const auto &q : data.make_queries()) {
    const auto out = retrieve_with_strategy(cfg, view, q);
    ASSERT_EQ(out.size(), 8u);
    for (std::size_t i = 1; i < out.size(); ++i)
      EXPECT_GE(out.items[i - 1].score, out.items[i].score);
    for (const auto &label : out.labels()) EXPECT_TRUE(view.is_available(label));
  }
}

TEST(Strategies, RerankUsesAuxChannelAndFallsBack) {
  // Primary channel ranks rows 0,1,2,3; aux channel reverses the order.
  RowMatrixf primary(4, 2), aux(4, 2);
  primary << 1, 0, 0.9f, 0.43589f, 0.8f, 0.6f, 0.7f, 0.71414f;
  aux << 0, 1, 0.6f, 0.8f, 0.8f, 0.6f, 1, 0;
  Manifest m;
  m.labels = LabelSet({"a", "b"});
  for (int i = 0; i < 4; ++i)
    m.instances.push_back({pad_id(static_cast<std::size_t>(i)), i % 2 ? "b" : "a",
                           {PayloadKind::image, "p.png"}, static_cast<std::size_t>(i)});
  const auto db = std::make_shared<const RetrievalDatabase>(m, EmbeddingMatrix(primary),
                                                            EmbeddingMatrix(aux));
  const auto view = mask_explicit(db, {});
  auto q = make_query("q", "a", Eigen::Vector2f(1, 0));
  StrategyConfig cfg;
  cfg.kind = StrategyKind::rerank;
  cfg.k = 2;
  cfg.rerank_pool = 3;
  // Without a query aux vector this is kate.
  EXPECT_EQ(retrieve_with_strategy(cfg, view, q).ids(), (std::vector<std::string>{"x000", "x001"}));
  q.aux_embedding = Eigen::Vector2f(1, 0);
  // Pool {0,1,2}; aux scores 0, 0.6, 0.8.
  EXPECT_EQ(retrieve_with_strategy(cfg, view, q).ids(), (std::vector<std::string>{"x002", "x001"}));
}

TEST(Strategies, ParseNames) {
  for (auto kind : all_strategies()) EXPECT_EQ(parse_strategy(to_string(kind)), kind);
  EXPECT_EQ(parse_strategy("vicl_rerank"), StrategyKind::rerank);
  EXPECT_THROW(parse_strategy("nearest"), InvalidArgument);
  StrategyConfig bad;
  bad.k = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(KMeans, KEqualsRowCountGivesZeroInertia) {
  std::mt19937_64 rng(3);
  const auto pts = gaussian_unit_rows(7, 4, rng);
  const auto r = kmeans(pts, 7, 20, 1);
  EXPECT_EQ(std::set<std::size_t>(r.assignment.begin(), r.assignment.end()).size(), 7u);
  EXPECT_NEAR(r.inertia, 0.0f, 1e-10f);
  EXPECT_EQ(r.empty_clusters, 0u);
}

TEST(KMeans, SeparatesTwoBlobsLikeExhaustiveSearch) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = 12;
  Eigen::MatrixXd pts(n, 2);
  for (int i = 0; i < n; ++i) pts.row(i) << (i < n / 2 ? -10 : 10) + g(rng), g(rng);
  const auto r = kmeans(pts, 2, 100, 4);

  // Exhaustive best 2-partition by inertia.
  double best = 1e300;
  unsigned best_mask = 0;
  for (unsigned mask = 1; mask < (1u << n) - 1; ++mask) {
    double inertia = 0;
    for (int side = 0; side < 2; ++side) {
      Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
      int count = 0;
      for (int i = 0; i < n; ++i)
        if (((mask >> i) & 1u) == static_cast<unsigned>(side)) mean += pts.row(i), ++count;
      mean /= count;
      for (int i = 0; i < n; ++i)
        if (((mask >> i) & 1u) == static_cast<unsigned>(side))
          inertia += (pts.row(i) - mean).squaredNorm();
    }
    if (inertia < best) best = inertia, best_mask = mask;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const bool same_oracle = ((best_mask >> i) & 1u) == ((best_mask >> j) & 1u);
      EXPECT_EQ(r.assignment[static_cast<std::size_t>(i)] == r.assignment[static_cast<std::size_t>(j)],
                same_oracle);
    }
  EXPECT_NEAR(r.inertia, best, 1e-9);
}

TEST(KMeans, DeterministicForSeed) {
  std::mt19937_64 rng(21);
  const auto pts = gaussian_unit_rows(60, 6, rng);
  const auto a = kmeans(pts, 5, 50, 9);
  const auto b = kmeans(pts, 5, 50, 9);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_TRUE(a.centroids == b.centroids);
  EXPECT_THROW(kmeans(pts, 0, 10, 1), InvalidArgument);
  EXPECT_THROW(kmeans(pts, 61, 10, 1), InvalidArgument);
}

TEST(KMeans, DuplicatePointsLeaveEmptyClusters) {
  Eigen::MatrixXf pts = Eigen::MatrixXf::Ones(5, 2);
  const auto r = kmeans(pts, 3, 10, 1);
  EXPECT_GT(r.empty_clusters, 0u);
}
