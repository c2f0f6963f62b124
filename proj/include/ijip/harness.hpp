#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ijip/backend.hpp"
#include "ijip/engine.hpp"

namespace ijip {

/// A compared method. Config spellings:
///   "ijip" / "ijip:<strategy>"   two-stage IJIP (kate by default)
///   "zero_shot_ijip"             IJIP with no demonstrations
///   "zero_shot"                  one m-class query, no demonstrations
///   "<strategy>"                 plain IICL baseline with that strategy
struct MethodSpec {
  enum class Kind { ijip, zero_shot_ijip, zero_shot, baseline };
  Kind kind = Kind::ijip;
  StrategyKind strategy = StrategyKind::kate;

  static MethodSpec parse(const std::string &text);
  std::string name() const;
  bool is_ijip() const { return kind == Kind::ijip || kind == Kind::zero_shot_ijip; }
  bool uses_demonstrations() const { return kind == Kind::ijip || kind == Kind::baseline; }
};

enum class ReportFormat { csv, json, markdown };
ReportFormat parse_report_format(const std::string &text);

struct BackendSpec {
  enum class Kind { mock, http };
  Kind kind = Kind::mock;
  /// Noise parameters; truth and seed are filled per repeat.
  OracleConfig oracle;
  HttpBackendConfig http;
  std::size_t max_in_flight = 4;
};

struct ExperimentConfig {
  std::filesystem::path database;
  std::filesystem::path database_embeddings;
  std::optional<std::filesystem::path> database_aux;
  std::filesystem::path test;
  std::filesystem::path test_embeddings;
  std::optional<std::filesystem::path> test_aux;
  std::optional<std::filesystem::path> template_dir;

  BackendSpec backend;
  std::vector<MethodSpec> methods{MethodSpec{}};
  std::size_t k = 10;
  std::vector<double> missing_proportions{0.0};
  std::vector<std::size_t> demo_counts;
  /// Proportion held fixed by the demonstration-count sweep.
  std::optional<double> sweep_proportion;
  std::size_t repeats = 3;
  std::uint64_t master_seed = 0;
  std::size_t rerank_pool = 0;
  std::size_t kmeans_iters = 50;
  EngineOptions engine;

  std::filesystem::path output_dir = "results";
  std::vector<ReportFormat> formats{ReportFormat::csv, ReportFormat::json,
                                    ReportFormat::markdown};
  std::optional<std::filesystem::path> audit_log;

  /// Relative paths resolve against the config file's directory.
  static ExperimentConfig load(const std::filesystem::path &path);
  static ExperimentConfig parse(std::string_view toml_text,
                                const std::filesystem::path &base_dir = {});
  /// Checks ranges that do not depend on the data.
  void validate() const;
  double effective_sweep_proportion() const;
};

/// Seed used by repeat `index`: hash(master_seed, index).
std::uint64_t repeat_seed(std::uint64_t master_seed, std::size_t index);

struct QueryRecord {
  std::string id;
  std::string gold;
  Prediction prediction;
  std::optional<DispatchCase> dispatch;
  std::size_t query_count = 0;
  std::size_t indicator_count = 0;
  bool parse_failed = false;
  bool short_set = false;
  std::vector<std::string> demo_ids;
  std::vector<std::string> demo_labels;
  std::string error;

  bool correct() const { return prediction && *prediction == gold; }
};

/// Fraction of correct predictions; the sentinel never matches.
double accuracy(const std::vector<QueryRecord> &records);

struct CaseMix {
  double case0 = 0, case1 = 0, caseU = 0;
};

struct TrialResult {
  std::string method;
  double proportion = 0;
  std::size_t k = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> masked_labels;
  std::vector<QueryRecord> records;
  bool failed = false;
  std::string error;

  double accuracy() const { return ijip::accuracy(records); }
  /// Only meaningful for IJIP methods.
  CaseMix case_mix() const;
};

struct Aggregate {
  std::string method;
  double proportion = 0;
  std::size_t k = 0;
  double mean = 0;
  std::size_t repeats = 0;
};

struct SweepResult {
  std::uint64_t master_seed = 0;
  std::vector<TrialResult> trials;

  /// Mean over successful repeats, recomputed from raw records, in first-seen
  /// (method, proportion, k) order.
  std::vector<Aggregate> aggregates() const;
  bool any_failed() const;
};

/// In-memory inputs for a run.
struct ExperimentData {
  std::shared_ptr<const RetrievalDatabase> database;
  std::vector<Query> queries;

  static ExperimentData load(const ExperimentConfig &config);
};

/// Backend for one repeat. The mock factory gets the repeat seed.
using BackendFactory = std::function<std::unique_ptr<Backend>(std::uint64_t repeat_seed)>;

/// Mock oracle with truth from the data, or the HTTP client.
BackendFactory default_backend_factory(const ExperimentConfig &config,
                                       const ExperimentData &data);

/// Every (method x proportion x repeat) at k = config.k.
SweepResult run_experiment(const ExperimentConfig &config);
SweepResult run_experiment(const ExperimentConfig &config, const ExperimentData &data,
                           const BackendFactory &factory, AuditLog *audit = nullptr);

/// Every (method x k x repeat) at the fixed sweep proportion.
SweepResult sweep_demonstrations(const ExperimentConfig &config,
                                 const std::vector<std::size_t> &ks);
SweepResult sweep_demonstrations(const ExperimentConfig &config,
                                 const std::vector<std::size_t> &ks,
                                 const ExperimentData &data, const BackendFactory &factory,
                                 AuditLog *audit = nullptr);

std::string render_csv(const SweepResult &sweep);
std::string render_json(const SweepResult &sweep);
std::string render_markdown(const SweepResult &sweep);
SweepResult sweep_from_json(const nlohmann::json &doc);

/// Writes results.{csv,json,md} into `dir`; returns the written paths.
std::vector<std::filesystem::path> emit_report(const SweepResult &sweep,
                                               const std::filesystem::path &dir,
                                               const std::vector<ReportFormat> &formats);

} // namespace ijip
