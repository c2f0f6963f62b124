#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ijip/dataset.hpp"
#include "ijip/retrieval.hpp"

namespace ijip {

/// No sub-answer index could be recognized in a Stage-1 reply.
class ParseFailure : public Error {
public:
  using Error::Error;
};

/// A Stage-2 reply matched zero or several candidates.
class NoMatch : public Error {
public:
  using Error::Error;
};

enum class PromptMode { iterative_judgment, multiclass, restricted };

std::string_view to_string(PromptMode mode);

struct BinaryDemonstration {
  const Instance *instance;
  bool positive; // label == sub_label
};

/// Demonstrations relabeled for one sub-question: C_j versus not-C_j.
struct BinaryDemonstrationSet {
  std::string sub_label;
  std::vector<BinaryDemonstration> items;
};

BinaryDemonstrationSet relabel_binary(const DemonstrationSet &demos,
                                      const std::string &sub_label);

struct PromptPart {
  enum class Kind { text, payload };
  Kind kind = Kind::text;
  /// Text for text parts.
  std::string text;
  /// Attachment for payload parts.
  Payload payload;
  std::string instance_id;
  std::filesystem::path base_dir;
  bool is_query = false;
};

struct RenderedPrompt {
  PromptMode mode = PromptMode::multiclass;
  std::vector<PromptPart> parts;
  /// Full labelset for iterative judgments, the offered labels otherwise.
  std::vector<std::string> candidate_labels;
  /// Size of the full labelset m.
  std::size_t num_labels = 0;
  std::string query_id;

  /// Text with attachments rendered as "[image: path]" / "[text: ...]".
  std::string flat_text() const;
  /// Hex SHA-256 of flat_text().
  std::string hash() const;
  std::size_t query_payload_count() const;
};

/// Prompt text templates, one per mode plus the sub-blocks they expand.
/// Placeholders are written {{name}}; unknown names are rejected at render.
struct PromptTemplates {
  /// {{m}} {{subquestions}} {{questions}} {{query}} {{noun}}
  std::string iterative_judgment;
  /// {{index}} {{label}} {{demos}} {{noun}}; rendered per sub-question when
  /// there are demonstrations.
  std::string subquestion;
  /// {{index}} {{label}} {{noun}}
  std::string question;
  /// {{payload}} {{label}} {{answer}} {{noun}}
  std::string binary_demo;
  /// {{demos}} {{candidates}} {{query}} {{noun}}
  std::string multiclass;
  /// Same placeholders as multiclass.
  std::string restricted;
  /// {{payload}} {{label}} {{noun}}
  std::string labeled_demo;

  static const PromptTemplates &defaults();
  /// Defaults overridden by any of <dir>/<name>.txt that exist.
  static PromptTemplates load(const std::filesystem::path &dir);
  static const std::vector<std::string> &file_names();
};

RenderedPrompt build_iterative_judgment_prompt(const DemonstrationSet &demos,
                                               const LabelSet &labels,
                                               const Query &query,
                                               const PromptTemplates &templates =
                                                   PromptTemplates::defaults());

/// m-class prompt when `candidates` is the full labelset, restricted
/// otherwise. Demonstrations keep their original labels.
RenderedPrompt build_multiclass_prompt(const DemonstrationSet &demos,
                                       const std::vector<std::string> &candidates,
                                       const LabelSet &labels, const Query &query,
                                       const PromptTemplates &templates =
                                           PromptTemplates::defaults());

/// Stage-1 answers y^1..y^m and the indicator count I_x.
struct JudgmentVector {
  std::vector<bool> positive;
  /// Stage-1 reply had no recognizable sub-answer; all entries negative.
  bool parse_failed = false;
  std::vector<std::string> warnings;

  std::size_t m() const { return positive.size(); }
  std::size_t indicator_count() const;
  /// Labels judged positive, in label order.
  std::vector<std::string> positive_labels(const LabelSet &labels) const;

  static JudgmentVector all_negative(std::size_t m);
};

/// Scans "j: yes|no" lines. Missing indices default to negative with a
/// warning. Throws ParseFailure when no index is recognized.
JudgmentVector parse_judgments(std::string_view reply, std::size_t m);

/// Inverse of parse_judgments for well-formed vectors.
std::string render_judgments(const JudgmentVector &judgment);

/// Exact normalized match, then unique word-bounded substring match.
/// Throws NoMatch on zero or ambiguous matches.
std::string parse_label(std::string_view reply,
                        const std::vector<std::string> &candidates);

} // namespace ijip
