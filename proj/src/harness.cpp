#include "ijip/harness.hpp"

#include <atomic>
#include <bit>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

namespace ijip {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Methods and formats

MethodSpec MethodSpec::parse(const std::string &text) {
  MethodSpec m;
  if (text == "ijip") return m;
  if (text.rfind("ijip:", 0) == 0) {
    m.strategy = parse_strategy(text.substr(5));
    return m;
  }
  if (text == "zero_shot_ijip") {
    m.kind = Kind::zero_shot_ijip;
    return m;
  }
  if (text == "zero_shot") {
    m.kind = Kind::zero_shot;
    return m;
  }
  m.kind = Kind::baseline;
  m.strategy = parse_strategy(text.rfind("baseline:", 0) == 0 ? text.substr(9) : text);
  return m;
}

std::string MethodSpec::name() const {
  switch (kind) {
  case Kind::ijip:
    return strategy == StrategyKind::kate ? "ijip" : "ijip:" + std::string(to_string(strategy));
  case Kind::zero_shot_ijip: return "zero_shot_ijip";
  case Kind::zero_shot: return "zero_shot";
  case Kind::baseline: return std::string(to_string(strategy));
  }
  return "unknown";
}

ReportFormat parse_report_format(const std::string &text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "json") return ReportFormat::json;
  if (text == "markdown" || text == "md" || text == "markdown-table")
    return ReportFormat::markdown;
  throw InvalidArgument("unknown report format \"" + text + "\"");
}

// ---------------------------------------------------------------------------
// Config

namespace {

[[noreturn]] void config_error(const std::string &what) {
  throw FormatError("config: " + what);
}

template <typename T> std::optional<T> get(const toml::table &tbl, std::string_view path) {
  auto node = tbl.at_path(path);
  if (!node) return std::nullopt;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node.value<double>()) return *v; // accepts integers too
  } else {
    if (auto v = node.value_exact<T>()) return *v;
  }
  config_error("\"" + std::string(path) + "\" has the wrong type");
}

std::optional<fs::path> get_path(const toml::table &tbl, std::string_view key,
                                 const fs::path &base) {
  auto s = get<std::string>(tbl, key);
  if (!s) return std::nullopt;
  fs::path p(*s);
  return p.is_absolute() || base.empty() ? p : base / p;
}

fs::path require_path(const toml::table &tbl, std::string_view key, const fs::path &base) {
  auto p = get_path(tbl, key, base);
  if (!p) config_error("missing \"" + std::string(key) + "\"");
  return *p;
}

std::size_t to_count(std::int64_t v, std::string_view key) {
  if (v < 0) config_error("\"" + std::string(key) + "\" must be non-negative");
  return static_cast<std::size_t>(v);
}

template <typename T, typename Fn>
std::optional<std::vector<T>> get_array(const toml::table &tbl, std::string_view key, Fn convert) {
  auto node = tbl.at_path(key);
  if (!node) return std::nullopt;
  const auto *arr = node.as_array();
  if (!arr) config_error("\"" + std::string(key) + "\" must be an array");
  std::vector<T> out;
  for (const auto &el : *arr) out.push_back(convert(el));
  return out;
}

} // namespace

ExperimentConfig ExperimentConfig::parse(std::string_view text, const fs::path &base) {
  toml::table tbl;
  try {
    tbl = toml::parse(text);
  } catch (const toml::parse_error &e) {
    std::ostringstream ss;
    ss << e.description() << " at line " << e.source().begin.line;
    config_error(ss.str());
  }

  ExperimentConfig c;
  if (auto v = get<std::int64_t>(tbl, "master_seed")) c.master_seed = static_cast<std::uint64_t>(*v);
  if (auto v = get<std::int64_t>(tbl, "repeats")) c.repeats = to_count(*v, "repeats");

  c.database = require_path(tbl, "data.database", base);
  c.database_embeddings = require_path(tbl, "data.database_embeddings", base);
  c.database_aux = get_path(tbl, "data.database_aux", base);
  c.test = require_path(tbl, "data.test", base);
  c.test_embeddings = require_path(tbl, "data.test_embeddings", base);
  c.test_aux = get_path(tbl, "data.test_aux", base);

  if (auto kind = get<std::string>(tbl, "backend.kind")) {
    if (*kind == "mock") c.backend.kind = BackendSpec::Kind::mock;
    else if (*kind == "http") c.backend.kind = BackendSpec::Kind::http;
    else config_error("backend.kind must be \"mock\" or \"http\"");
  }
  if (auto v = get<std::int64_t>(tbl, "backend.max_in_flight"))
    c.backend.max_in_flight = std::max<std::size_t>(1, to_count(*v, "backend.max_in_flight"));

  auto &oracle = c.backend.oracle;
  if (auto preset = get<std::string>(tbl, "backend.mock.preset")) {
    if (*preset == "candidate_scaled") {
      oracle.binary_flip_prob = 0.02;
      oracle.multiclass_error_prob = 0.2;
      oracle.scale_by_candidates = true;
    } else if (*preset != "noiseless") {
      config_error("unknown backend.mock.preset \"" + *preset + "\"");
    }
  }
  if (auto v = get<double>(tbl, "backend.mock.binary_flip_prob")) oracle.binary_flip_prob = *v;
  if (auto v = get<double>(tbl, "backend.mock.multiclass_error_prob"))
    oracle.multiclass_error_prob = *v;
  if (auto v = get<bool>(tbl, "backend.mock.scale_by_candidates")) oracle.scale_by_candidates = *v;

  auto &http = c.backend.http;
  http = HttpBackendConfig::from_env();
  if (auto v = get<std::string>(tbl, "backend.http.api_base")) http.api_base = *v;
  if (auto v = get<std::string>(tbl, "backend.http.model")) http.model = *v;
  if (auto v = get<std::int64_t>(tbl, "backend.http.max_retries"))
    http.max_retries = static_cast<int>(to_count(*v, "backend.http.max_retries"));
  if (auto v = get<std::int64_t>(tbl, "backend.http.timeout_s"))
    http.timeout = std::chrono::seconds(*v);
  if (auto v = get<std::int64_t>(tbl, "backend.http.initial_backoff_ms"))
    http.initial_backoff = std::chrono::milliseconds(*v);
  http.max_in_flight = c.backend.max_in_flight;

  if (auto methods = get_array<MethodSpec>(tbl, "experiment.methods", [](const toml::node &n) {
        auto s = n.value<std::string>();
        if (!s) config_error("experiment.methods entries must be strings");
        return MethodSpec::parse(*s);
      }))
    c.methods = *methods;
  if (auto v = get<std::int64_t>(tbl, "experiment.k")) c.k = to_count(*v, "experiment.k");
  if (auto props = get_array<double>(tbl, "experiment.missing_proportions",
                                     [](const toml::node &n) {
                                       auto v = n.value<double>();
                                       if (!v) config_error("missing_proportions must be numbers");
                                       return *v;
                                     }))
    c.missing_proportions = *props;
  if (auto ks = get_array<std::size_t>(tbl, "experiment.demo_counts", [](const toml::node &n) {
        auto v = n.value_exact<std::int64_t>();
        if (!v || *v < 1) config_error("demo_counts must be positive integers");
        return static_cast<std::size_t>(*v);
      }))
    c.demo_counts = *ks;
  if (auto v = get<double>(tbl, "experiment.sweep_proportion")) c.sweep_proportion = *v;
  if (auto v = get<std::int64_t>(tbl, "experiment.rerank_pool"))
    c.rerank_pool = to_count(*v, "experiment.rerank_pool");
  if (auto v = get<std::int64_t>(tbl, "experiment.kmeans_iters"))
    c.kmeans_iters = to_count(*v, "experiment.kmeans_iters");
  if (auto v = get<std::int64_t>(tbl, "experiment.judgment_max_tokens"))
    c.engine.judgment_max_tokens = static_cast<int>(*v);
  if (auto v = get<std::int64_t>(tbl, "experiment.label_max_tokens"))
    c.engine.label_max_tokens = static_cast<int>(*v);
  if (auto v = get<double>(tbl, "experiment.temperature")) c.engine.temperature = *v;

  if (auto dir = get_path(tbl, "output.dir", base)) c.output_dir = *dir;
  if (auto f = get_array<ReportFormat>(tbl, "output.formats", [](const toml::node &n) {
        auto s = n.value<std::string>();
        if (!s) config_error("output.formats entries must be strings");
        return parse_report_format(*s);
      }))
    c.formats = *f;
  c.audit_log = get_path(tbl, "output.audit_log", base);
  c.template_dir = get_path(tbl, "prompts.template_dir", base);

  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str(), path.parent_path());
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void ExperimentConfig::validate() const {
  if (repeats < 1) config_error("repeats must be >= 1");
  if (k < 1) config_error("experiment.k must be >= 1");
  if (methods.empty()) config_error("experiment.methods is empty");
  if (missing_proportions.empty()) config_error("experiment.missing_proportions is empty");
  for (double p : missing_proportions)
    if (!(p >= 0.0 && p < 1.0)) config_error("missing proportions must be in [0, 1)");
  if (sweep_proportion && !(*sweep_proportion >= 0.0 && *sweep_proportion < 1.0))
    config_error("sweep_proportion must be in [0, 1)");
  backend.oracle.validate();
  if (engine.temperature < 0) config_error("temperature must be >= 0");
}

double ExperimentConfig::effective_sweep_proportion() const {
  return sweep_proportion.value_or(missing_proportions.front());
}

std::uint64_t repeat_seed(std::uint64_t master_seed, std::size_t index) {
  return hash_parts({master_seed, static_cast<std::uint64_t>(index), fnv1a("repeat")});
}

// ---------------------------------------------------------------------------
// Results

double accuracy(const std::vector<QueryRecord> &records) {
  if (records.empty()) throw InvalidArgument("accuracy of an empty record set");
  std::size_t correct = 0;
  for (const auto &r : records) correct += r.correct() ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

CaseMix TrialResult::case_mix() const {
  CaseMix mix;
  std::size_t n = 0;
  for (const auto &r : records) {
    if (!r.dispatch) continue;
    ++n;
    switch (*r.dispatch) {
    case DispatchCase::case0: mix.case0 += 1; break;
    case DispatchCase::case1: mix.case1 += 1; break;
    case DispatchCase::caseU: mix.caseU += 1; break;
    }
  }
  if (n > 0) {
    mix.case0 /= static_cast<double>(n);
    mix.case1 /= static_cast<double>(n);
    mix.caseU /= static_cast<double>(n);
  }
  return mix;
}

std::vector<Aggregate> SweepResult::aggregates() const {
  std::vector<Aggregate> out;
  std::vector<double> sums;
  for (const auto &t : trials) {
    if (t.failed || t.records.empty()) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const Aggregate &a) {
      return a.method == t.method && a.proportion == t.proportion && a.k == t.k;
    });
    if (it == out.end()) {
      out.push_back({t.method, t.proportion, t.k, 0.0, 0});
      sums.push_back(0.0);
      it = out.end() - 1;
    }
    const auto idx = static_cast<std::size_t>(it - out.begin());
    sums[idx] += t.accuracy();
    it->repeats += 1;
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i].mean = sums[i] / static_cast<double>(out[i].repeats);
  return out;
}

bool SweepResult::any_failed() const {
  return std::any_of(trials.begin(), trials.end(), [](const auto &t) { return t.failed; });
}

// ---------------------------------------------------------------------------
// Running

ExperimentData ExperimentData::load(const ExperimentConfig &config) {
  ExperimentData d;
  d.database = load_database(config.database, config.database_embeddings, config.database_aux);
  d.queries = load_queries(config.test, config.test_embeddings, d.database->labelset(),
                           config.test_aux);
  if (d.queries.empty()) throw FormatError("test manifest has no instances");
  return d;
}

BackendFactory default_backend_factory(const ExperimentConfig &config,
                                       const ExperimentData &data) {
  if (config.backend.kind == BackendSpec::Kind::http) {
    auto http = config.backend.http;
    return [http](std::uint64_t) { return std::make_unique<HttpBackend>(http); };
  }
  auto oracle = config.backend.oracle;
  for (const auto &inst : data.database->instances()) oracle.truth[inst.id] = inst.label;
  for (const auto &q : data.queries) oracle.truth[q.instance.id] = q.instance.label;
  const auto in_flight = config.backend.max_in_flight;
  return [oracle, in_flight](std::uint64_t seed) {
    auto cfg = oracle;
    cfg.seed = seed;
    return std::make_unique<MockOracleBackend>(std::move(cfg), in_flight);
  };
}

namespace {

QueryRecord run_query(const IjipEngine &engine, const MethodSpec &method,
                      const IncompleteView &view, const Query &query,
                      const StrategyConfig &strategy) {
  QueryRecord rec;
  rec.id = query.instance.id;
  rec.gold = query.instance.label;
  auto take_demos = [&](const DemonstrationSet &demos) {
    rec.short_set = demos.short_set;
    rec.demo_ids = demos.ids();
    rec.demo_labels = demos.labels();
  };

  switch (method.kind) {
  case MethodSpec::Kind::ijip:
  case MethodSpec::Kind::zero_shot_ijip: {
    const auto out = method.kind == MethodSpec::Kind::ijip
                         ? engine.classify(view, query, strategy)
                         : engine.classify_zero_shot(view.labelset(), query);
    rec.prediction = out.prediction;
    rec.dispatch = out.dispatch;
    rec.query_count = out.query_count;
    rec.indicator_count = out.judgment.indicator_count();
    rec.parse_failed = out.judgment.parse_failed;
    if (out.note) rec.error = *out.note;
    take_demos(out.demonstrations);
    break;
  }
  case MethodSpec::Kind::baseline:
  case MethodSpec::Kind::zero_shot: {
    const auto out = method.kind == MethodSpec::Kind::baseline
                         ? engine.baseline_classify(view, query, strategy)
                         : engine.zero_shot_classify(view.labelset(), query);
    rec.prediction = out.prediction;
    rec.query_count = out.query_count;
    if (out.note) rec.error = *out.note;
    take_demos(out.demonstrations);
    break;
  }
  }
  return rec;
}

/// Runs every query of a trial, up to max_in_flight at a time. Records stay
/// in test-manifest order.
void run_trial(TrialResult &trial, const IjipEngine &engine, const MethodSpec &method,
               const IncompleteView &view, const std::vector<Query> &queries,
               const StrategyConfig &strategy, std::size_t workers) {
  trial.records.assign(queries.size(), {});
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::optional<std::string> failure;

  auto work = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= queries.size()) return;
      {
        std::lock_guard lock(failure_mutex);
        if (failure) return;
      }
      try {
        trial.records[i] = run_query(engine, method, view, queries[i], strategy);
      } catch (const BackendError &e) {
        auto &rec = trial.records[i];
        rec.id = queries[i].instance.id;
        rec.gold = queries[i].instance.label;
        rec.prediction.reset();
        rec.error = e.what();
      } catch (const std::exception &e) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = "query " + queries[i].instance.id + ": " + e.what();
      }
    }
  };

  workers = std::clamp<std::size_t>(workers, 1, queries.size());
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) {
    trial.failed = true;
    trial.error = *failure;
    trial.records.clear();
  }
}

SweepResult run_grid(const ExperimentConfig &config, const ExperimentData &data,
                     const BackendFactory &factory, const std::vector<double> &proportions,
                     const std::vector<std::size_t> &ks, AuditLog *audit) {
  config.validate();
  if (!data.database || data.queries.empty())
    throw InvalidArgument("experiment needs a database and at least one query");
  const auto templates = config.template_dir ? PromptTemplates::load(*config.template_dir)
                                             : PromptTemplates::defaults();

  SweepResult sweep;
  sweep.master_seed = config.master_seed;

  std::vector<std::uint64_t> seeds;
  std::vector<std::unique_ptr<Backend>> backends;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    seeds.push_back(repeat_seed(config.master_seed, r));
    backends.push_back(factory(seeds.back()));
  }

  // Views are shared by every method within a (proportion, repeat) cell.
  std::map<std::pair<std::size_t, std::size_t>, std::optional<IncompleteView>> views;
  std::map<std::pair<std::size_t, std::size_t>, std::string> view_errors;
  for (std::size_t pi = 0; pi < proportions.size(); ++pi) {
    for (std::size_t r = 0; r < config.repeats; ++r) {
      try {
        views[{pi, r}] = mask_labels(data.database, proportions[pi], seeds[r]);
      } catch (const std::exception &e) {
        views[{pi, r}] = std::nullopt;
        view_errors[{pi, r}] = e.what();
      }
    }
  }

  for (const auto &method : config.methods) {
    for (std::size_t pi = 0; pi < proportions.size(); ++pi) {
      for (const auto k : ks) {
        for (std::size_t r = 0; r < config.repeats; ++r) {
          TrialResult trial;
          trial.method = method.name();
          trial.proportion = proportions[pi];
          trial.k = k;
          trial.repeat = r;
          trial.seed = seeds[r];
          const auto &view = views.at({pi, r});
          if (!view) {
            trial.failed = true;
            trial.error = view_errors.at({pi, r});
            sweep.trials.push_back(std::move(trial));
            continue;
          }
          trial.masked_labels = view->masked_labels();

          StrategyConfig strategy;
          strategy.kind = method.strategy;
          strategy.k = k;
          strategy.seed = seeds[r];
          strategy.rerank_pool = config.rerank_pool;
          strategy.kmeans_iters = config.kmeans_iters;
          try {
            strategy.validate();
            IjipEngine engine(*backends[r], templates, config.engine, audit);
            run_trial(trial, engine, method, *view, data.queries, strategy,
                      backends[r]->max_in_flight());
          } catch (const std::exception &e) {
            trial.failed = true;
            trial.error = e.what();
            trial.records.clear();
          }
          sweep.trials.push_back(std::move(trial));
        }
      }
    }
  }
  return sweep;
}

std::unique_ptr<AuditLog> open_audit(const ExperimentConfig &config) {
  if (!config.audit_log) return nullptr;
  if (config.audit_log->has_parent_path())
    fs::create_directories(config.audit_log->parent_path());
  return std::make_unique<AuditLog>(*config.audit_log);
}

} // namespace

SweepResult run_experiment(const ExperimentConfig &config, const ExperimentData &data,
                           const BackendFactory &factory, AuditLog *audit) {
  return run_grid(config, data, factory, config.missing_proportions, {config.k}, audit);
}

SweepResult run_experiment(const ExperimentConfig &config) {
  const auto data = ExperimentData::load(config);
  const auto audit = open_audit(config);
  return run_experiment(config, data, default_backend_factory(config, data), audit.get());
}

SweepResult sweep_demonstrations(const ExperimentConfig &config,
                                 const std::vector<std::size_t> &ks,
                                 const ExperimentData &data, const BackendFactory &factory,
                                 AuditLog *audit) {
  if (ks.empty()) throw InvalidArgument("demonstration sweep needs at least one k");
  for (auto k : ks)
    if (k < 1) throw InvalidArgument("demonstration counts must be >= 1");
  return run_grid(config, data, factory, {config.effective_sweep_proportion()}, ks, audit);
}

SweepResult sweep_demonstrations(const ExperimentConfig &config,
                                 const std::vector<std::size_t> &ks) {
  const auto data = ExperimentData::load(config);
  const auto audit = open_audit(config);
  return sweep_demonstrations(config, ks, data, default_backend_factory(config, data),
                              audit.get());
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string short_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void require_non_empty(const SweepResult &sweep) {
  if (sweep.trials.empty()) throw InvalidArgument("cannot report an empty sweep");
}

ordered_json record_json(const QueryRecord &r) {
  ordered_json j;
  j["id"] = r.id;
  j["gold"] = r.gold;
  j["prediction"] = r.prediction ? json(*r.prediction) : json(nullptr);
  j["dispatch_case"] = r.dispatch ? json(std::string(to_string(*r.dispatch))) : json(nullptr);
  j["query_count"] = r.query_count;
  j["indicator_count"] = r.indicator_count;
  j["parse_failed"] = r.parse_failed;
  j["short_set"] = r.short_set;
  j["demo_ids"] = r.demo_ids;
  j["demo_labels"] = r.demo_labels;
  j["error"] = r.error;
  return j;
}

std::optional<DispatchCase> parse_dispatch(const json &j) {
  if (j.is_null()) return std::nullopt;
  const auto s = j.get<std::string>();
  if (s == "case0") return DispatchCase::case0;
  if (s == "case1") return DispatchCase::case1;
  if (s == "caseU") return DispatchCase::caseU;
  throw FormatError("unknown dispatch_case \"" + s + "\"");
}

} // namespace

std::string render_csv(const SweepResult &sweep) {
  require_non_empty(sweep);
  std::ostringstream out;
  out << "method,proportion,k,repeat,accuracy,mean\n";
  for (const auto &t : sweep.trials) {
    out << csv_field(t.method) << ',' << short_num(t.proportion) << ',' << t.k << ','
        << t.repeat << ',' << (t.failed ? std::string("NA") : fixed6(t.accuracy())) << ",\n";
  }
  for (const auto &a : sweep.aggregates()) {
    out << csv_field(a.method) << ',' << short_num(a.proportion) << ',' << a.k
        << ",mean,," << fixed6(a.mean) << '\n';
  }
  return out.str();
}

std::string render_json(const SweepResult &sweep) {
  require_non_empty(sweep);
  ordered_json doc;
  doc["master_seed"] = sweep.master_seed;
  doc["trials"] = ordered_json::array();
  for (const auto &t : sweep.trials) {
    ordered_json j;
    j["method"] = t.method;
    j["proportion"] = t.proportion;
    j["k"] = t.k;
    j["repeat"] = t.repeat;
    j["seed"] = t.seed;
    j["masked_labels"] = t.masked_labels;
    j["failed"] = t.failed;
    j["error"] = t.error;
    j["accuracy"] = t.failed ? json(nullptr) : json(t.accuracy());
    if (!t.failed && !t.records.empty() && t.records.front().dispatch) {
      const auto mix = t.case_mix();
      j["case_mix"] = {{"case0", mix.case0}, {"case1", mix.case1}, {"caseU", mix.caseU}};
    } else {
      j["case_mix"] = nullptr;
    }
    j["records"] = ordered_json::array();
    for (const auto &r : t.records) j["records"].push_back(record_json(r));
    doc["trials"].push_back(std::move(j));
  }
  doc["aggregates"] = ordered_json::array();
  for (const auto &a : sweep.aggregates()) {
    ordered_json j;
    j["method"] = a.method;
    j["proportion"] = a.proportion;
    j["k"] = a.k;
    j["mean"] = a.mean;
    j["repeats"] = a.repeats;
    doc["aggregates"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

std::string render_markdown(const SweepResult &sweep) {
  require_non_empty(sweep);
  const auto aggs = sweep.aggregates();
  std::vector<std::size_t> ks;
  std::vector<double> props;
  std::vector<std::string> methods;
  for (const auto &t : sweep.trials) {
    if (std::find(ks.begin(), ks.end(), t.k) == ks.end()) ks.push_back(t.k);
    if (std::find(props.begin(), props.end(), t.proportion) == props.end())
      props.push_back(t.proportion);
    if (std::find(methods.begin(), methods.end(), t.method) == methods.end())
      methods.push_back(t.method);
  }

  std::ostringstream out;
  out << "Accuracy (%) by proportion of missing labels, mean over repeats.\n";
  for (const auto k : ks) {
    out << "\n### k = " << k << "\n\n| Method |";
    for (double p : props) out << ' ' << short_num(p * 100.0) << "% |";
    out << "\n|---|";
    for (std::size_t i = 0; i < props.size(); ++i) out << "---:|";
    out << '\n';
    for (const auto &m : methods) {
      out << "| " << m << " |";
      for (double p : props) {
        auto it = std::find_if(aggs.begin(), aggs.end(), [&](const Aggregate &a) {
          return a.method == m && a.proportion == p && a.k == k;
        });
        if (it == aggs.end()) {
          out << " - |";
        } else {
          char buf[32];
          std::snprintf(buf, sizeof buf, " %.1f |", it->mean * 100.0);
          out << buf;
        }
      }
      out << '\n';
    }
  }
  return out.str();
}

SweepResult sweep_from_json(const json &doc) {
  SweepResult sweep;
  try {
    sweep.master_seed = doc.at("master_seed").get<std::uint64_t>();
    for (const auto &j : doc.at("trials")) {
      TrialResult t;
      t.method = j.at("method").get<std::string>();
      t.proportion = j.at("proportion").get<double>();
      t.k = j.at("k").get<std::size_t>();
      t.repeat = j.at("repeat").get<std::size_t>();
      t.seed = j.at("seed").get<std::uint64_t>();
      t.masked_labels = j.at("masked_labels").get<std::vector<std::string>>();
      t.failed = j.at("failed").get<bool>();
      t.error = j.at("error").get<std::string>();
      for (const auto &rj : j.at("records")) {
        QueryRecord r;
        r.id = rj.at("id").get<std::string>();
        r.gold = rj.at("gold").get<std::string>();
        if (!rj.at("prediction").is_null()) r.prediction = rj.at("prediction").get<std::string>();
        r.dispatch = parse_dispatch(rj.at("dispatch_case"));
        r.query_count = rj.at("query_count").get<std::size_t>();
        r.indicator_count = rj.at("indicator_count").get<std::size_t>();
        r.parse_failed = rj.at("parse_failed").get<bool>();
        r.short_set = rj.at("short_set").get<bool>();
        r.demo_ids = rj.at("demo_ids").get<std::vector<std::string>>();
        r.demo_labels = rj.at("demo_labels").get<std::vector<std::string>>();
        r.error = rj.at("error").get<std::string>();
        t.records.push_back(std::move(r));
      }
      sweep.trials.push_back(std::move(t));
    }
  } catch (const json::exception &e) {
    throw FormatError(std::string("raw results: ") + e.what());
  }
  return sweep;
}

std::vector<fs::path> emit_report(const SweepResult &sweep, const fs::path &dir,
                                  const std::vector<ReportFormat> &formats) {
  require_non_empty(sweep);
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::vector<fs::path> written;
  for (const auto f : formats) {
    fs::path path;
    std::string body;
    switch (f) {
    case ReportFormat::csv: path = dir / "results.csv"; body = render_csv(sweep); break;
    case ReportFormat::json: path = dir / "results.json"; body = render_json(sweep); break;
    case ReportFormat::markdown: path = dir / "results.md"; body = render_markdown(sweep); break;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write report " + path.string());
    out << body;
    if (!out) throw Error("failed writing report " + path.string());
    written.push_back(path);
  }
  return written;
}

} // namespace ijip
