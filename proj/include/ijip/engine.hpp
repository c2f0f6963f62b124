#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ijip/backend.hpp"
#include "ijip/prompting.hpp"
#include "ijip/retrieval.hpp"

namespace ijip {

/// Integrated-prediction routing on the indicator count I_x:
/// 0 -> full m-class query, 1 -> direct assignment, u > 1 -> restricted query.
enum class DispatchCase { case0, case1, caseU };

std::string_view to_string(DispatchCase c);

struct Transcript {
  PromptMode mode;
  std::string prompt_hash;
  std::string reply;
};

struct StageOneResult {
  JudgmentVector judgment;
  DemonstrationSet demonstrations;
  Transcript transcript;
};

struct IjipOutcome {
  Prediction prediction;
  DispatchCase dispatch = DispatchCase::case0;
  JudgmentVector judgment;
  std::size_t query_count = 0;
  DemonstrationSet demonstrations;
  /// Labels offered in Stage 2 (empty for case1).
  std::vector<std::string> stage2_candidates;
  std::vector<Transcript> transcripts;
  /// Why the prediction is the sentinel, when it is.
  std::optional<std::string> note;

  /// I_x for caseU, 0 or 1 otherwise.
  std::size_t u() const { return judgment.indicator_count(); }
};

struct BaselineOutcome {
  Prediction prediction;
  DemonstrationSet demonstrations;
  Transcript transcript;
  std::size_t query_count = 1;
  std::optional<std::string> note;
};

struct EngineOptions {
  int judgment_max_tokens = 256;
  int label_max_tokens = 32;
  double temperature = 0.0;
};

/// Runs IJIP and the plain IICL baseline against one backend. Stateless
/// apart from the backend and audit log; safe to share across threads.
class IjipEngine {
public:
  explicit IjipEngine(Backend &backend,
                      PromptTemplates templates = PromptTemplates::defaults(),
                      EngineOptions options = {}, AuditLog *audit = nullptr);

  /// Stage 1: retrieve D_d once, ask all m sub-questions in one query.
  /// An unparseable reply yields the all-negative vector flagged
  /// parse_failed, which routes to case0.
  StageOneResult iterative_judgments(const IncompleteView &view, const Query &query,
                                     const StrategyConfig &strategy) const;
  StageOneResult iterative_judgments(DemonstrationSet demos, const LabelSet &labels,
                                     const Query &query) const;

  /// Stage 2: dispatch on I_x, reusing the Stage-1 demonstrations.
  IjipOutcome integrated_prediction(const JudgmentVector &judgment,
                                    const DemonstrationSet &demos,
                                    const LabelSet &labels, const Query &query) const;

  IjipOutcome classify(const IncompleteView &view, const Query &query,
                       const StrategyConfig &strategy) const;
  /// Both stages with no demonstrations.
  IjipOutcome classify_zero_shot(const LabelSet &labels, const Query &query) const;

  /// One m-class query with strategy-selected demonstrations.
  BaselineOutcome baseline_classify(const IncompleteView &view, const Query &query,
                                    const StrategyConfig &strategy) const;
  /// One m-class query with no demonstrations.
  BaselineOutcome zero_shot_classify(const LabelSet &labels, const Query &query) const;

private:
  ModelResponse ask(const RenderedPrompt &prompt, int max_tokens, std::string tag) const;
  BaselineOutcome single_query(DemonstrationSet demos, const LabelSet &labels,
                               const Query &query) const;

  Backend *backend_;
  PromptTemplates templates_;
  EngineOptions options_;
  AuditLog *audit_;
};

} // namespace ijip
