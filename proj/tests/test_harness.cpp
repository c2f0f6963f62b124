#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ijip/harness.hpp"
#include "ijip/synthetic.hpp"
#include "test_util.hpp"

using namespace ijip;
using ijip::testing::TempDir;

namespace {

QueryRecord rec(const std::string &gold, Prediction pred) {
  QueryRecord r;
  r.id = "q";
  r.gold = gold;
  r.prediction = std::move(pred);
  return r;
}

ExperimentData synthetic_data(std::size_t tests = 20) {
  SyntheticSpec spec;
  spec.test_size = tests;
  const auto s = make_synthetic(spec);
  return {s.make_database(), s.make_queries()};
}

ExperimentConfig base_config() {
  ExperimentConfig c;
  c.methods = {MethodSpec::parse("ijip"), MethodSpec::parse("kate")};
  c.missing_proportions = {0.1, 0.4, 0.9};
  c.repeats = 3;
  c.master_seed = 5;
  c.k = 5;
  return c;
}

SweepResult run(const ExperimentConfig &c, const ExperimentData &d) {
  return run_experiment(c, d, default_backend_factory(c, d));
}

std::size_t count_lines(const std::string &s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

} // namespace

TEST(Accuracy, CountsCorrectRecords) {
  std::vector<QueryRecord> all(10, rec("cat", "cat"));
  EXPECT_DOUBLE_EQ(accuracy(all), 1.0);
  for (int i = 0; i < 3; ++i) all[static_cast<std::size_t>(i)].prediction = "dog";
  EXPECT_DOUBLE_EQ(accuracy(all), 0.7);
  all[9].prediction.reset();
  EXPECT_DOUBLE_EQ(accuracy(all), 0.6);
  EXPECT_THROW(accuracy({}), InvalidArgument);
}

TEST(Methods, ParseAndName) {
  EXPECT_TRUE(MethodSpec::parse("ijip").is_ijip());
  EXPECT_EQ(MethodSpec::parse("ijip").name(), "ijip");
  EXPECT_EQ(MethodSpec::parse("ijip:random").name(), "ijip:random");
  EXPECT_EQ(MethodSpec::parse("cluster_diversity").kind, MethodSpec::Kind::baseline);
  EXPECT_EQ(MethodSpec::parse("zero_shot").name(), "zero_shot");
  EXPECT_FALSE(MethodSpec::parse("zero_shot_ijip").uses_demonstrations());
  EXPECT_THROW(MethodSpec::parse("magic"), InvalidArgument);
}

TEST(Config, ParsesTomlAndResolvesPaths) {
  const auto c = ExperimentConfig::parse(R"(
master_seed = 9
repeats = 2
[data]
database = "d/db.jsonl"
database_embeddings = "d/db.ijeb"
test = "/abs/test.jsonl"
test_embeddings = "d/test.ijeb"
[backend.mock]
preset = "candidate_scaled"
multiclass_error_prob = 0.3
[experiment]
methods = ["ijip", "ijip:static", "random", "zero_shot"]
k = 4
missing_proportions = [0.1, 0.9]
demo_counts = [1, 2, 3]
[output]
dir = "out"
formats = ["csv", "markdown"]
)",
                                         "/base");
  EXPECT_EQ(c.master_seed, 9u);
  EXPECT_EQ(c.repeats, 2u);
  EXPECT_EQ(c.database, "/base/d/db.jsonl");
  EXPECT_EQ(c.test, "/abs/test.jsonl");
  EXPECT_EQ(c.methods.size(), 4u);
  EXPECT_EQ(c.methods[1].strategy, StrategyKind::static_first);
  EXPECT_EQ(c.k, 4u);
  EXPECT_EQ(c.missing_proportions, (std::vector<double>{0.1, 0.9}));
  EXPECT_EQ(c.demo_counts, (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_TRUE(c.backend.oracle.scale_by_candidates);
  EXPECT_DOUBLE_EQ(c.backend.oracle.binary_flip_prob, 0.02);
  EXPECT_DOUBLE_EQ(c.backend.oracle.multiclass_error_prob, 0.3);
  EXPECT_EQ(c.output_dir, "/base/out");
  EXPECT_EQ(c.formats.size(), 2u);
}

TEST(Config, RejectsBadValues) {
  const std::string data = R"(
[data]
database = "a"
database_embeddings = "b"
test = "c"
test_embeddings = "d"
)";
  EXPECT_THROW(ExperimentConfig::parse("[data]\ndatabase = \"a\"\n"), FormatError);
  EXPECT_THROW(ExperimentConfig::parse(data + "[experiment]\nmissing_proportions = [1.0]\n"),
               FormatError);
  EXPECT_THROW(ExperimentConfig::parse(data + "[experiment]\nk = \"ten\"\n"), FormatError);
  EXPECT_THROW(ExperimentConfig::parse(data + "[experiment]\nmethods = [\"nope\"]\n"),
               InvalidArgument);
  EXPECT_THROW(ExperimentConfig::parse("this is = = not toml"), FormatError);
  EXPECT_NO_THROW(ExperimentConfig::parse(data));
}

TEST(Harness, NoiselessMockIsPerfect) {
  const auto d = synthetic_data();
  auto c = base_config();
  c.methods.clear();
  for (auto kind : all_strategies()) {
    c.methods.push_back({MethodSpec::Kind::ijip, kind});
    c.methods.push_back({MethodSpec::Kind::baseline, kind});
  }
  c.methods.push_back(MethodSpec::parse("zero_shot"));
  c.methods.push_back(MethodSpec::parse("zero_shot_ijip"));
  c.repeats = 1;
  const auto sweep = run(c, d);
  EXPECT_FALSE(sweep.any_failed());
  for (const auto &a : sweep.aggregates()) EXPECT_DOUBLE_EQ(a.mean, 1.0) << a.method;
}

TEST(Harness, MaskedCountsFollowProportion) {
  const auto d = synthetic_data();
  const auto sweep = run(base_config(), d);
  for (const auto &t : sweep.trials) {
    const auto want = static_cast<std::size_t>(std::floor(t.proportion * 10 + 1e-9));
    EXPECT_EQ(t.masked_labels.size(), want);
    for (const auto &r : t.records)
      for (const auto &label : r.demo_labels)
        EXPECT_EQ(std::count(t.masked_labels.begin(), t.masked_labels.end(), label), 0);
  }
}

TEST(Harness, RepeatsDifferOnlyBySeedAndAggregateIsMean) {
  const auto d = synthetic_data();
  auto c = base_config();
  c.backend.oracle.binary_flip_prob = 0.1;
  c.backend.oracle.multiclass_error_prob = 0.3;
  const auto sweep = run(c, d);
  std::set<std::uint64_t> seeds;
  for (const auto &t : sweep.trials) seeds.insert(t.seed);
  EXPECT_EQ(seeds.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_TRUE(seeds.count(repeat_seed(5, r)));

  for (const auto &a : sweep.aggregates()) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto &t : sweep.trials)
      if (t.method == a.method && t.proportion == a.proportion && t.k == a.k)
        sum += t.accuracy(), ++n;
    EXPECT_EQ(n, 3u);
    EXPECT_DOUBLE_EQ(a.mean, sum / 3.0);
  }
  // Same master seed, same results.
  EXPECT_EQ(render_json(sweep), render_json(run(c, d)));
  c.master_seed = 6;
  EXPECT_NE(render_json(sweep), render_json(run(c, d)));
}

TEST(Harness, CaseMixSumsToOne) {
  const auto d = synthetic_data();
  auto c = base_config();
  c.methods = {MethodSpec::parse("ijip")};
  c.backend.oracle.binary_flip_prob = 0.15;
  const auto sweep = run(c, d);
  for (const auto &t : sweep.trials) {
    const auto mix = t.case_mix();
    EXPECT_NEAR(mix.case0 + mix.case1 + mix.caseU, 1.0, 1e-12);
    for (const auto &r : t.records) {
      ASSERT_TRUE(r.dispatch.has_value());
      EXPECT_EQ(r.query_count, *r.dispatch == DispatchCase::case1 ? 1u : 2u);
    }
  }
}

TEST(Harness, ReportCardinality) {
  const auto d = synthetic_data();
  const auto sweep = run(base_config(), d);
  ASSERT_EQ(sweep.trials.size(), 18u);
  const auto csv = render_csv(sweep);
  // Header + 18 trial rows + 6 aggregate rows.
  EXPECT_EQ(count_lines(csv), 1u + 18u + 6u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,proportion,k,repeat,accuracy,mean");
  EXPECT_NE(csv.find("ijip,0.9,5,mean,,"), std::string::npos);

  const auto md = render_markdown(sweep);
  EXPECT_NE(md.find("| Method | 10% | 40% | 90% |"), std::string::npos);
  EXPECT_NE(md.find("| ijip | 100.0 | 100.0 | 100.0 |"), std::string::npos);
}

TEST(Harness, ReportsAreByteIdenticalAndRoundTrip) {
  const auto d = synthetic_data();
  auto c = base_config();
  c.backend.oracle.binary_flip_prob = 0.05;
  c.backend.oracle.multiclass_error_prob = 0.2;
  TempDir a("rep_a"), b("rep_b");
  emit_report(run(c, d), a.path(), c.formats);
  emit_report(run(c, d), b.path(), c.formats);
  for (const char *f : {"results.csv", "results.json", "results.md"})
    EXPECT_EQ(ijip::testing::read_text(a / f), ijip::testing::read_text(b / f)) << f;

  const auto back = sweep_from_json(nlohmann::json::parse(ijip::testing::read_text(a / "results.json")));
  EXPECT_EQ(render_csv(back), ijip::testing::read_text(a / "results.csv"));
  EXPECT_EQ(render_json(back), ijip::testing::read_text(a / "results.json"));
}

TEST(Harness, EmptySweepIsAnError) {
  SweepResult empty;
  EXPECT_THROW(render_csv(empty), InvalidArgument);
  EXPECT_THROW(render_markdown(empty), InvalidArgument);
  TempDir dir("empty");
  EXPECT_THROW(emit_report(empty, dir.path(), {ReportFormat::csv}), InvalidArgument);
}

TEST(Sweep, OneAggregatePerK) {
  const auto d = synthetic_data();
  auto c = base_config();
  c.methods = {MethodSpec::parse("ijip")};
  c.repeats = 1;
  std::vector<std::size_t> ks(15);
  std::iota(ks.begin(), ks.end(), 1);
  const auto sweep = sweep_demonstrations(c, ks, d, default_backend_factory(c, d));
  EXPECT_EQ(sweep.aggregates().size(), 15u);
  for (const auto &t : sweep.trials) EXPECT_DOUBLE_EQ(t.proportion, 0.1);
}

TEST(Sweep, ShortSetsSurfaceInRecords) {
  const auto d = synthetic_data();
  auto c = base_config();
  c.methods = {MethodSpec::parse("ijip")};
  c.sweep_proportion = 0.9; // 20 database rows of one label remain
  c.repeats = 1;
  const auto sweep = sweep_demonstrations(c, {5, 40}, d, default_backend_factory(c, d));
  for (const auto &t : sweep.trials)
    for (const auto &r : t.records) EXPECT_EQ(r.short_set, t.k == 40) << t.k;
}

TEST(Sweep, DemonstrationBlindOracleGivesFlatCurve) {
  const auto d = synthetic_data(400);
  auto c = base_config();
  c.methods = {MethodSpec::parse("kate")};
  c.backend.oracle.multiclass_error_prob = 0.25;
  c.repeats = 1;
  const auto sweep = sweep_demonstrations(c, {1, 4, 8, 16}, d, default_backend_factory(c, d));
  // Binomial 99.9% half-width around the expected 0.75.
  const double tol = 3.3 * std::sqrt(0.75 * 0.25 / 400.0);
  for (const auto &a : sweep.aggregates()) EXPECT_NEAR(a.mean, 0.75, tol) << a.k;
}

TEST(Harness, BackendErrorsBecomeSentinelsOtherErrorsFailTheTrial) {
  const auto d = synthetic_data(4);
  auto c = base_config();
  c.methods = {MethodSpec::parse("kate")};
  c.missing_proportions = {0.0};
  c.repeats = 1;

  // A truth map missing one query makes the mock raise BackendError for it.
  BackendFactory partial = [&](std::uint64_t seed) {
    OracleConfig o;
    o.seed = seed;
    for (std::size_t i = 1; i < d.queries.size(); ++i)
      o.truth[d.queries[i].instance.id] = d.queries[i].instance.label;
    return std::make_unique<MockOracleBackend>(o);
  };
  const auto sweep = run_experiment(c, d, partial);
  ASSERT_FALSE(sweep.any_failed());
  const auto &recs = sweep.trials.front().records;
  EXPECT_FALSE(recs[0].prediction.has_value());
  EXPECT_FALSE(recs[0].error.empty());
  EXPECT_DOUBLE_EQ(sweep.trials.front().accuracy(), 0.75);

  BackendFactory broken = [&](std::uint64_t) {
    return std::make_unique<ijip::testing::ScriptedBackend>(
        [](const ModelRequest &) -> std::string { throw std::runtime_error("boom"); });
  };
  const auto failed = run_experiment(c, d, broken);
  EXPECT_TRUE(failed.any_failed());
  EXPECT_NE(render_csv(failed).find(",NA,"), std::string::npos);
}
