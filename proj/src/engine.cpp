#include "ijip/engine.hpp"

namespace ijip {

std::string_view to_string(DispatchCase c) {
  switch (c) {
  case DispatchCase::case0: return "case0";
  case DispatchCase::case1: return "case1";
  case DispatchCase::caseU: return "caseU";
  }
  return "unknown";
}

IjipEngine::IjipEngine(Backend &backend, PromptTemplates templates,
                       EngineOptions options, AuditLog *audit)
    : backend_(&backend), templates_(std::move(templates)), options_(options),
      audit_(audit) {}

ModelResponse IjipEngine::ask(const RenderedPrompt &prompt, int max_tokens,
                              std::string tag) const {
  ModelRequest request{prompt, max_tokens, options_.temperature, std::move(tag)};
  return complete(request, *backend_, audit_);
}

StageOneResult IjipEngine::iterative_judgments(const IncompleteView &view,
                                               const Query &query,
                                               const StrategyConfig &strategy) const {
  return iterative_judgments(retrieve_with_strategy(strategy, view, query),
                             view.labelset(), query);
}

StageOneResult IjipEngine::iterative_judgments(DemonstrationSet demos,
                                               const LabelSet &labels,
                                               const Query &query) const {
  const auto prompt = build_iterative_judgment_prompt(demos, labels, query, templates_);
  const auto reply = ask(prompt, options_.judgment_max_tokens,
                         query.instance.id + "/judgments");

  StageOneResult out;
  out.demonstrations = std::move(demos);
  out.transcript = {prompt.mode, prompt.hash(), reply.text};
  try {
    out.judgment = parse_judgments(reply.text, labels.size());
  } catch (const ParseFailure &e) {
    out.judgment = JudgmentVector::all_negative(labels.size());
    out.judgment.parse_failed = true;
    out.judgment.warnings.emplace_back(e.what());
  }
  return out;
}

IjipOutcome IjipEngine::integrated_prediction(const JudgmentVector &judgment,
                                              const DemonstrationSet &demos,
                                              const LabelSet &labels,
                                              const Query &query) const {
  if (judgment.m() != labels.size())
    throw InvalidArgument("judgment vector length differs from labelset size");

  IjipOutcome out;
  out.judgment = judgment;
  out.demonstrations = demos;
  out.query_count = 1;

  const auto positives = judgment.positive_labels(labels);
  if (positives.size() == 1) {
    out.dispatch = DispatchCase::case1;
    out.prediction = positives.front();
    return out;
  }

  if (positives.empty()) {
    out.dispatch = DispatchCase::case0;
    out.stage2_candidates = labels.labels();
  } else {
    // u == m gives the full labelset, i.e. the case0 prompt.
    out.dispatch = DispatchCase::caseU;
    out.stage2_candidates = positives;
  }

  const auto prompt =
      build_multiclass_prompt(demos, out.stage2_candidates, labels, query, templates_);
  const auto reply = ask(prompt, options_.label_max_tokens,
                         query.instance.id + "/" + std::string(to_string(out.dispatch)));
  out.query_count = 2;
  out.transcripts.push_back({prompt.mode, prompt.hash(), reply.text});
  try {
    out.prediction = parse_label(reply.text, out.stage2_candidates);
  } catch (const NoMatch &e) {
    out.prediction.reset();
    out.note = e.what();
  }
  return out;
}

IjipOutcome IjipEngine::classify(const IncompleteView &view, const Query &query,
                                 const StrategyConfig &strategy) const {
  auto stage1 = iterative_judgments(view, query, strategy);
  auto out = integrated_prediction(stage1.judgment, stage1.demonstrations,
                                   view.labelset(), query);
  out.transcripts.insert(out.transcripts.begin(), stage1.transcript);
  return out;
}

IjipOutcome IjipEngine::classify_zero_shot(const LabelSet &labels, const Query &query) const {
  auto stage1 = iterative_judgments(DemonstrationSet{}, labels, query);
  auto out = integrated_prediction(stage1.judgment, stage1.demonstrations, labels, query);
  out.transcripts.insert(out.transcripts.begin(), stage1.transcript);
  return out;
}

BaselineOutcome IjipEngine::single_query(DemonstrationSet demos, const LabelSet &labels,
                                         const Query &query) const {
  const auto prompt = build_multiclass_prompt(demos, labels.labels(), labels, query, templates_);
  const auto reply = ask(prompt, options_.label_max_tokens, query.instance.id + "/baseline");
  BaselineOutcome out;
  out.demonstrations = std::move(demos);
  out.transcript = {prompt.mode, prompt.hash(), reply.text};
  try {
    out.prediction = parse_label(reply.text, labels.labels());
  } catch (const NoMatch &e) {
    out.note = e.what();
  }
  return out;
}

BaselineOutcome IjipEngine::baseline_classify(const IncompleteView &view, const Query &query,
                                              const StrategyConfig &strategy) const {
  return single_query(retrieve_with_strategy(strategy, view, query), view.labelset(), query);
}

BaselineOutcome IjipEngine::zero_shot_classify(const LabelSet &labels,
                                               const Query &query) const {
  return single_query(DemonstrationSet{}, labels, query);
}

} // namespace ijip
