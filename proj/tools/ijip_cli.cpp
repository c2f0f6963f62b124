// ijip: validate data, classify one query, run experiments, re-emit reports.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ijip/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MockFlags {
  std::optional<double> binary_flip;
  std::optional<double> class_error;
  bool candidate_scaled = false;

  void add(CLI::App &app) {
    app.add_option("--binary-flip", binary_flip,
                   "Mock: probability each yes/no sub-answer is flipped")
        ->check(CLI::Range(0.0, 0.5));
    app.add_option("--class-error", class_error,
                   "Mock: probability a class answer is wrong")
        ->check(CLI::Range(0.0, 1.0));
    app.add_flag("--candidate-scaled", candidate_scaled,
                 "Mock: scale class error by (c-1)/(m-1) for c offered labels");
  }

  void apply(ijip::OracleConfig &oracle) const {
    if (binary_flip) oracle.binary_flip_prob = *binary_flip;
    if (class_error) oracle.multiclass_error_prob = *class_error;
    if (candidate_scaled) oracle.scale_by_candidates = true;
    oracle.validate();
  }
};

ijip::BackendSpec::Kind parse_backend(const std::string &s) {
  if (s == "mock") return ijip::BackendSpec::Kind::mock;
  if (s == "http") return ijip::BackendSpec::Kind::http;
  throw UsageError("--backend must be http or mock");
}

std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateArgs {
  fs::path manifest, embeddings;
  std::optional<fs::path> aux, test_manifest, test_embeddings;
  bool json = false;
};

int cmd_validate(const ValidateArgs &a) {
  const auto manifest = ijip::load_manifest(a.manifest);
  const auto emb = ijip::load_embeddings(a.embeddings, manifest.instances.size());
  const auto renormalized = emb.renormalized_rows();
  const ijip::RetrievalDatabase db(manifest, emb,
                                   a.aux ? std::optional(ijip::load_embeddings(
                                               *a.aux, manifest.instances.size()))
                                         : std::nullopt);

  std::map<std::string, std::size_t> per_label;
  for (const auto &inst : manifest.instances) per_label[inst.label] += 1;

  std::optional<std::size_t> test_count;
  if (a.test_manifest) {
    if (!a.test_embeddings) throw UsageError("--test-manifest needs --test-embeddings");
    test_count = ijip::load_queries(*a.test_manifest, *a.test_embeddings, db.labelset()).size();
  }

  if (a.json) {
    ordered_json j;
    j["m"] = db.labelset().size();
    j["labels"] = db.labelset().labels();
    j["count"] = manifest.instances.size();
    j["dim"] = emb.dim();
    j["payload"] = ijip::to_string(manifest.kind);
    j["renormalized_rows"] = renormalized;
    j["aux"] = a.aux.has_value();
    ordered_json counts = ordered_json::object();
    for (const auto &label : db.labelset()) counts[label] = per_label[label];
    j["per_label"] = counts;
    j["test_count"] = test_count ? ordered_json(*test_count) : ordered_json(nullptr);
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  std::cout << "m = " << db.labelset().size() << '\n'
            << "count = " << manifest.instances.size() << '\n'
            << "dim = " << emb.dim() << '\n'
            << "payload = " << ijip::to_string(manifest.kind) << '\n'
            << "norm check: " << renormalized << " row(s) renormalized\n";
  for (const auto &label : db.labelset())
    std::cout << "  " << label << ": " << per_label[label] << '\n';
  if (test_count) std::cout << "test count = " << *test_count << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// classify

struct ClassifyArgs {
  fs::path manifest, embeddings;
  std::optional<fs::path> aux, test_manifest, test_embeddings, test_aux, template_dir;
  std::string query_id;
  std::string backend = "mock";
  std::uint64_t seed = 0;
  std::size_t k = 10;
  std::string strategy = "kate";
  std::optional<std::string> mask;
  std::optional<double> missing;
  bool baseline = false;
  MockFlags mock;
};

ordered_json demos_json(const ijip::DemonstrationSet &demos) {
  ordered_json out = ordered_json::array();
  for (const auto &d : demos.items)
    out.push_back({{"id", d.instance->id}, {"label", d.instance->label}, {"score", d.score}});
  return out;
}

int cmd_classify(const ClassifyArgs &a) {
  if (a.mask && a.missing) throw UsageError("--mask and --missing are exclusive");
  const auto db = ijip::load_database(a.manifest, a.embeddings, a.aux);

  std::optional<ijip::Query> query;
  std::vector<ijip::Query> tests;
  if (a.test_manifest) {
    if (!a.test_embeddings) throw UsageError("--test-manifest needs --test-embeddings");
    tests = ijip::load_queries(*a.test_manifest, *a.test_embeddings, db->labelset(), a.test_aux);
    for (const auto &q : tests)
      if (q.instance.id == a.query_id) query = q;
  }
  if (!query) {
    const auto pos = db->find(a.query_id);
    if (!pos) throw ijip::InvalidArgument("unknown query id \"" + a.query_id + "\"");
    query = ijip::query_from_database(*db, *pos);
  }

  const auto view = a.mask       ? ijip::mask_explicit(db, split_list(*a.mask))
                    : a.missing ? ijip::mask_labels(db, *a.missing, a.seed)
                                : ijip::mask_explicit(db, {});

  std::unique_ptr<ijip::Backend> backend;
  if (parse_backend(a.backend) == ijip::BackendSpec::Kind::http) {
    backend = std::make_unique<ijip::HttpBackend>(ijip::HttpBackendConfig::from_env());
  } else {
    ijip::OracleConfig oracle;
    a.mock.apply(oracle);
    oracle.seed = a.seed;
    for (const auto &inst : db->instances()) oracle.truth[inst.id] = inst.label;
    for (const auto &q : tests) oracle.truth[q.instance.id] = q.instance.label;
    backend = std::make_unique<ijip::MockOracleBackend>(std::move(oracle));
  }

  ijip::StrategyConfig strategy;
  strategy.kind = ijip::parse_strategy(a.strategy);
  strategy.k = a.k;
  strategy.seed = a.seed;
  strategy.validate();

  const ijip::IjipEngine engine(*backend,
                                a.template_dir ? ijip::PromptTemplates::load(*a.template_dir)
                                               : ijip::PromptTemplates::defaults());
  ordered_json j;
  j["query_id"] = query->instance.id;
  j["gold"] = query->instance.label;
  j["masked_labels"] = view.masked_labels();
  if (a.baseline) {
    const auto out = engine.baseline_classify(view, *query, strategy);
    j["method"] = ijip::to_string(strategy.kind);
    j["prediction"] = ijip::prediction_text(out.prediction);
    j["correct"] = out.prediction == query->instance.label;
    j["query_count"] = out.query_count;
    j["demonstrations"] = demos_json(out.demonstrations);
    j["reply"] = out.transcript.reply;
    if (out.note) j["note"] = *out.note;
  } else {
    const auto out = engine.classify(view, *query, strategy);
    j["method"] = "ijip";
    j["strategy"] = ijip::to_string(strategy.kind);
    j["prediction"] = ijip::prediction_text(out.prediction);
    j["correct"] = out.prediction == query->instance.label;
    j["dispatch_case"] = ijip::to_string(out.dispatch);
    j["indicator_count"] = out.u();
    j["judgments"] = ijip::render_judgments(out.judgment);
    j["parse_failed"] = out.judgment.parse_failed;
    j["stage2_candidates"] = out.stage2_candidates;
    j["query_count"] = out.query_count;
    j["short_set"] = out.demonstrations.short_set;
    j["demonstrations"] = demos_json(out.demonstrations);
    ordered_json transcripts = ordered_json::array();
    for (const auto &t : out.transcripts)
      transcripts.push_back(
          {{"mode", ijip::to_string(t.mode)}, {"prompt_hash", t.prompt_hash}, {"reply", t.reply}});
    j["transcripts"] = transcripts;
    if (out.note) j["note"] = *out.note;
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// run / sweep-demos

struct RunArgs {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::size_t> k;
  std::optional<std::string> ks;
  std::optional<std::string> strategy;
  std::optional<double> missing;
  std::optional<fs::path> out, template_dir;
  bool json = false;
  MockFlags mock;
};

ijip::ExperimentConfig load_run_config(const RunArgs &a) {
  auto config = ijip::ExperimentConfig::load(a.config);
  if (a.seed) config.master_seed = *a.seed;
  if (a.backend) config.backend.kind = parse_backend(*a.backend);
  if (a.k) config.k = *a.k;
  if (a.strategy) {
    config.methods.clear();
    for (const auto &m : split_list(*a.strategy)) config.methods.push_back(ijip::MethodSpec::parse(m));
  }
  if (a.out) config.output_dir = *a.out;
  if (a.template_dir) config.template_dir = *a.template_dir;
  a.mock.apply(config.backend.oracle);
  config.validate();
  return config;
}

int finish(const ijip::SweepResult &sweep, const ijip::ExperimentConfig &config, bool json) {
  const auto written = ijip::emit_report(sweep, config.output_dir, config.formats);
  if (json) {
    ordered_json j;
    j["reports"] = ordered_json::array();
    for (const auto &p : written) j["reports"].push_back(p.string());
    j["aggregates"] = ordered_json::array();
    for (const auto &agg : sweep.aggregates())
      j["aggregates"].push_back({{"method", agg.method},
                                 {"proportion", agg.proportion},
                                 {"k", agg.k},
                                 {"mean", agg.mean},
                                 {"repeats", agg.repeats}});
    j["failed_trials"] = std::count_if(sweep.trials.begin(), sweep.trials.end(),
                                       [](const auto &t) { return t.failed; });
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << ijip::render_markdown(sweep);
    for (const auto &p : written) std::cout << "wrote " << p.string() << '\n';
  }
  for (const auto &t : sweep.trials)
    if (t.failed)
      std::cerr << "trial failed: " << t.method << " p=" << t.proportion << " k=" << t.k
                << " repeat=" << t.repeat << ": " << t.error << '\n';
  return sweep.any_failed() ? kRuntimeFailure : 0;
}

int cmd_run(const RunArgs &a) {
  if (a.missing) throw UsageError("run takes proportions from the config; use sweep-demos --missing");
  const auto config = load_run_config(a);
  return finish(ijip::run_experiment(config), config, a.json);
}

int cmd_sweep(RunArgs a) {
  auto config = load_run_config(a);
  if (a.missing) config.sweep_proportion = *a.missing;
  std::vector<std::size_t> ks = config.demo_counts;
  if (a.ks) {
    ks.clear();
    for (const auto &s : split_list(*a.ks)) {
      std::size_t v = 0;
      try {
        v = std::stoul(s);
      } catch (const std::exception &) {
        throw UsageError("--ks expects comma-separated integers");
      }
      ks.push_back(v);
    }
  }
  if (ks.empty()) throw UsageError("no demonstration counts: pass --ks or set experiment.demo_counts");
  config.validate();
  return finish(ijip::sweep_demonstrations(config, ks), config, a.json);
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  fs::path input;
  fs::path out = ".";
  std::string formats = "csv,json,markdown";
};

int cmd_report(const ReportArgs &a) {
  std::ifstream in(a.input, std::ios::binary);
  if (!in) throw ijip::FormatError("cannot open " + a.input.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw ijip::FormatError(a.input.string() + ": " + e.what());
  }
  std::vector<ijip::ReportFormat> formats;
  for (const auto &f : split_list(a.formats)) formats.push_back(ijip::parse_report_format(f));
  const auto sweep = ijip::sweep_from_json(doc);
  for (const auto &p : ijip::emit_report(sweep, a.out, formats))
    std::cout << "wrote " << p.string() << '\n';
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Incomplete in-context learning with iterative judgments and integrated "
               "prediction"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  ValidateArgs va;
  auto *validate = app.add_subcommand("validate", "Check a manifest and its embedding file");
  validate->add_option("--manifest", va.manifest, "Database manifest (.jsonl)")->required();
  validate->add_option("--embeddings", va.embeddings, "Database embeddings (.ijeb)")->required();
  validate->add_option("--aux-embeddings", va.aux, "Auxiliary embeddings for rerank");
  validate->add_option("--test-manifest", va.test_manifest, "Test manifest to check too");
  validate->add_option("--test-embeddings", va.test_embeddings, "Test embeddings");
  validate->add_flag("--json", va.json, "Print the summary as JSON");

  ClassifyArgs ca;
  auto *classify = app.add_subcommand("classify", "Run IJIP on one query and print the outcome as JSON");
  classify->add_option("--manifest", ca.manifest, "Database manifest (.jsonl)")->required();
  classify->add_option("--embeddings", ca.embeddings, "Database embeddings (.ijeb)")->required();
  classify->add_option("--aux-embeddings", ca.aux, "Auxiliary database embeddings for rerank");
  classify->add_option("--test-manifest", ca.test_manifest,
                       "Manifest to look the query up in (default: the database, with the "
                       "query excluded from retrieval)");
  classify->add_option("--test-embeddings", ca.test_embeddings, "Embeddings for --test-manifest");
  classify->add_option("--test-aux-embeddings", ca.test_aux, "Auxiliary test embeddings");
  classify->add_option("--query-id", ca.query_id, "Id of the query instance")->required();
  classify->add_option("--backend", ca.backend, "Model backend")
      ->check(CLI::IsMember({"http", "mock"}))
      ->capture_default_str();
  classify->add_option("--seed", ca.seed, "Seed for masking, retrieval and the mock")
      ->capture_default_str();
  classify->add_option("--k", ca.k, "Number of demonstrations")->capture_default_str();
  auto *mask_opt = classify->add_option("--mask", ca.mask, "Comma-separated labels to mask");
  classify->add_option("--missing", ca.missing, "Proportion of labels to mask at random")
      ->check(CLI::Range(0.0, 1.0))
      ->excludes(mask_opt);
  classify->add_option("--strategy", ca.strategy, "Demonstration strategy")->capture_default_str();
  classify->add_flag("--baseline", ca.baseline, "Plain single-query baseline instead of IJIP");
  classify->add_option("--template-dir", ca.template_dir, "Prompt template directory");
  classify->add_flag("--json", "Accepted for symmetry; output is always JSON");
  ca.mock.add(*classify);

  RunArgs ra;
  auto *run = app.add_subcommand("run", "Run the method x proportion x repeat grid from a config");
  auto add_run_flags = [](CLI::App *cmd, RunArgs &r) {
    cmd->add_option("--config", r.config, "Experiment config (.toml)")->required();
    cmd->add_option("--seed", r.seed, "Override the master seed");
    cmd->add_option("--backend", r.backend, "Override the backend")
        ->check(CLI::IsMember({"http", "mock"}));
    cmd->add_option("--k", r.k, "Override the demonstration count");
    cmd->add_option("--strategy", r.strategy,
                    "Override the method list (comma-separated, e.g. ijip,kate,random)");
    cmd->add_option("--out", r.out, "Report directory");
    cmd->add_option("--template-dir", r.template_dir, "Prompt template directory");
    cmd->add_flag("--json", r.json, "Print a JSON summary instead of the markdown table");
    r.mock.add(*cmd);
  };
  add_run_flags(run, ra);
  run->add_option("--missing", ra.missing, "Not accepted here; see sweep-demos");

  RunArgs sa;
  auto *sweep = app.add_subcommand("sweep-demos", "Sweep the demonstration count at a fixed proportion");
  add_run_flags(sweep, sa);
  sweep->add_option("--ks", sa.ks, "Comma-separated demonstration counts");
  sweep->add_option("--missing", sa.missing, "Proportion of labels masked during the sweep")
      ->check(CLI::Range(0.0, 1.0));

  ReportArgs rp;
  auto *report = app.add_subcommand("report", "Re-emit reports from a stored results.json");
  report->add_option("--input", rp.input, "Raw results (results.json)")->required();
  report->add_option("--out", rp.out, "Output directory")->capture_default_str();
  report->add_option("--format", rp.formats, "Comma-separated: csv,json,markdown")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*validate) return cmd_validate(va);
    if (*classify) return cmd_classify(ca);
    if (*run) return cmd_run(ra);
    if (*sweep) return cmd_sweep(sa);
    if (*report) return cmd_report(rp);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}
