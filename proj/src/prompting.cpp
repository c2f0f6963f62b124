#include "ijip/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

#include "ijip/digest.hpp"

namespace ijip {

namespace fs = std::filesystem;

std::string_view to_string(PromptMode mode) {
  switch (mode) {
  case PromptMode::iterative_judgment: return "iterative_judgment";
  case PromptMode::multiclass: return "multiclass";
  case PromptMode::restricted: return "restricted";
  }
  return "unknown";
}

BinaryDemonstrationSet relabel_binary(const DemonstrationSet &demos,
                                      const std::string &sub_label) {
  BinaryDemonstrationSet out{sub_label, {}};
  out.items.reserve(demos.size());
  for (const auto &d : demos.items)
    out.items.push_back({d.instance, d.instance->label == sub_label});
  return out;
}

// ---------------------------------------------------------------------------
// Templates

const PromptTemplates &PromptTemplates::defaults() {
  static const PromptTemplates t{
      // iterative_judgment
      "Each numbered sub-question below is shown with example {{noun}}s "
      "answered yes or no.\n"
      "{{subquestions}}"
      "Query {{noun}}:\n"
      "{{query}}\n"
      "Based on this {{noun}}, answer {{m}} sub-questions.\n"
      "{{questions}}"
      "Reply with exactly {{m}} lines of the form \"<number>: yes\" or "
      "\"<number>: no\", one line per sub-question in order, and nothing "
      "else.\n",
      // subquestion
      "Examples for sub-question {{index}} ({{label}}):\n"
      "{{demos}}",
      // question
      "{{index}}. Is the label of this {{noun}} {{label}}?\n",
      // binary_demo
      "{{payload}}\n"
      "Is the label of this {{noun}} {{label}}? {{answer}}\n",
      // multiclass
      "Classify the query {{noun}}.\n"
      "{{demos}}"
      "Query {{noun}}:\n"
      "{{query}}\n"
      "Choose exactly one label from: {{candidates}}. Reply with the label "
      "only.\n",
      // restricted
      "Classify the query {{noun}}.\n"
      "{{demos}}"
      "Query {{noun}}:\n"
      "{{query}}\n"
      "Choose exactly one label from: {{candidates}}. Reply with the label "
      "only.\n",
      // labeled_demo
      "{{payload}}\n"
      "Label: {{label}}\n",
  };
  return t;
}

const std::vector<std::string> &PromptTemplates::file_names() {
  static const std::vector<std::string> names = {
      "iterative_judgment", "subquestion", "question", "binary_demo",
      "multiclass",         "restricted",  "labeled_demo"};
  return names;
}

namespace {

std::string *template_slot(PromptTemplates &t, const std::string &name) {
  if (name == "iterative_judgment") return &t.iterative_judgment;
  if (name == "subquestion") return &t.subquestion;
  if (name == "question") return &t.question;
  if (name == "binary_demo") return &t.binary_demo;
  if (name == "multiclass") return &t.multiclass;
  if (name == "restricted") return &t.restricted;
  if (name == "labeled_demo") return &t.labeled_demo;
  return nullptr;
}

} // namespace

PromptTemplates PromptTemplates::load(const fs::path &dir) {
  if (!fs::is_directory(dir))
    throw FormatError("template directory not found: " + dir.string());
  PromptTemplates t = defaults();
  for (const auto &name : file_names()) {
    const auto path = dir / (name + ".txt");
    if (!fs::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    *template_slot(t, name) = ss.str();
  }
  return t;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

using Expansion = std::variant<std::string, std::vector<PromptPart>>;
using Vars = std::map<std::string, Expansion, std::less<>>;

void append_text(std::vector<PromptPart> &out, std::string_view text) {
  if (text.empty()) return;
  if (!out.empty() && out.back().kind == PromptPart::Kind::text)
    out.back().text.append(text);
  else
    out.push_back({PromptPart::Kind::text, std::string(text), {}, {}, {}, false});
}

void append_parts(std::vector<PromptPart> &out, const std::vector<PromptPart> &parts) {
  for (const auto &p : parts) {
    if (p.kind == PromptPart::Kind::text)
      append_text(out, p.text);
    else
      out.push_back(p);
  }
}

void expand(std::string_view tmpl, const Vars &vars, std::vector<PromptPart> &out,
            std::string_view template_name) {
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      append_text(out, tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      append_text(out, tmpl.substr(pos));
      break;
    }
    append_text(out, tmpl.substr(pos, open - pos));
    auto name = tmpl.substr(open + 2, close - open - 2);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.front())))
      name.remove_prefix(1);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back())))
      name.remove_suffix(1);
    auto it = vars.find(name);
    if (it == vars.end())
      throw FormatError("template \"" + std::string(template_name) +
                        "\": unknown placeholder {{" + std::string(name) + "}}");
    if (const auto *s = std::get_if<std::string>(&it->second))
      append_text(out, *s);
    else
      append_parts(out, std::get<std::vector<PromptPart>>(it->second));
    pos = close + 2;
  }
}

std::vector<PromptPart> render(std::string_view tmpl, const Vars &vars,
                               std::string_view template_name) {
  std::vector<PromptPart> out;
  expand(tmpl, vars, out, template_name);
  return out;
}

const char *noun_for(PayloadKind kind) {
  return kind == PayloadKind::image ? "image" : "text";
}

std::vector<PromptPart> payload_part(const Instance &inst, const fs::path &base_dir,
                                     bool is_query) {
  PromptPart p;
  p.kind = PromptPart::Kind::payload;
  p.payload = inst.payload;
  p.instance_id = inst.id;
  p.base_dir = base_dir;
  p.is_query = is_query;
  return {p};
}

std::string join(const std::vector<std::string> &items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.append(sep);
    out.append(items[i]);
  }
  return out;
}

std::size_t count_query_parts(const std::vector<PromptPart> &parts) {
  return static_cast<std::size_t>(std::count_if(
      parts.begin(), parts.end(), [](const auto &p) { return p.is_query; }));
}

void require_single_query(const RenderedPrompt &prompt, std::string_view template_name) {
  if (prompt.query_payload_count() != 1)
    throw FormatError("template \"" + std::string(template_name) +
                      "\" must reference {{query}} exactly once");
}

} // namespace

std::string RenderedPrompt::flat_text() const {
  std::string out;
  for (const auto &p : parts) {
    if (p.kind == PromptPart::Kind::text) {
      out += p.text;
    } else {
      out += "[";
      out += to_string(p.payload.kind);
      out += ": ";
      out += p.payload.value;
      out += "]";
    }
  }
  return out;
}

std::string RenderedPrompt::hash() const { return sha256_hex(flat_text()); }

std::size_t RenderedPrompt::query_payload_count() const {
  return count_query_parts(parts);
}

RenderedPrompt build_iterative_judgment_prompt(const DemonstrationSet &demos,
                                               const LabelSet &labels,
                                               const Query &query,
                                               const PromptTemplates &templates) {
  if (labels.size() < 2) throw InvalidArgument("label set needs m >= 2");
  const std::string noun = noun_for(query.instance.payload.kind);
  std::vector<PromptPart> blocks;
  std::string questions;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const std::string index = std::to_string(j + 1);
    const auto &label = labels[j];
    {
      std::vector<PromptPart> q;
      expand(templates.question,
             Vars{{"index", index}, {"label", label}, {"noun", noun}}, q, "question");
      for (const auto &p : q)
        if (p.kind == PromptPart::Kind::text) questions += p.text;
    }
    if (demos.empty()) continue;

    std::vector<PromptPart> demo_parts;
    for (const auto &item : relabel_binary(demos, label).items) {
      expand(templates.binary_demo,
             Vars{{"payload", payload_part(*item.instance, demos.base_dir, false)},
                  {"label", label},
                  {"answer", std::string(item.positive ? "yes" : "no")},
                  {"noun", noun}},
             demo_parts, "binary_demo");
    }
    expand(templates.subquestion,
           Vars{{"index", index}, {"label", label}, {"demos", demo_parts}, {"noun", noun}},
           blocks, "subquestion");
  }

  RenderedPrompt out;
  out.mode = PromptMode::iterative_judgment;
  out.candidate_labels = labels.labels();
  out.num_labels = labels.size();
  out.query_id = query.instance.id;
  out.parts = render(templates.iterative_judgment,
                     Vars{{"m", std::to_string(labels.size())},
                          {"subquestions", blocks},
                          {"questions", questions},
                          {"query", payload_part(query.instance, query.base_dir, true)},
                          {"noun", noun}},
                     "iterative_judgment");
  require_single_query(out, "iterative_judgment");
  return out;
}

RenderedPrompt build_multiclass_prompt(const DemonstrationSet &demos,
                                       const std::vector<std::string> &candidates,
                                       const LabelSet &labels, const Query &query,
                                       const PromptTemplates &templates) {
  if (candidates.size() < 2)
    throw InvalidArgument("multiclass prompt needs at least 2 candidates");
  for (const auto &c : candidates)
    if (!labels.contains(c)) throw InvalidArgument("candidate \"" + c + "\" not in labelset");

  const std::string noun = noun_for(query.instance.payload.kind);
  std::vector<PromptPart> demo_parts;
  for (const auto &d : demos.items) {
    expand(templates.labeled_demo,
           Vars{{"payload", payload_part(*d.instance, demos.base_dir, false)},
                {"label", d.instance->label},
                {"noun", noun}},
           demo_parts, "labeled_demo");
  }

  RenderedPrompt out;
  out.mode = candidates == labels.labels() ? PromptMode::multiclass : PromptMode::restricted;
  out.candidate_labels = candidates;
  out.num_labels = labels.size();
  out.query_id = query.instance.id;
  const auto &tmpl = out.mode == PromptMode::multiclass ? templates.multiclass
                                                        : templates.restricted;
  const char *name = out.mode == PromptMode::multiclass ? "multiclass" : "restricted";
  out.parts = render(tmpl,
                     Vars{{"demos", demo_parts},
                          {"candidates", join(candidates, ", ")},
                          {"query", payload_part(query.instance, query.base_dir, true)},
                          {"noun", noun}},
                     name);
  require_single_query(out, name);
  return out;
}

// ---------------------------------------------------------------------------
// Stage-1 replies

std::size_t JudgmentVector::indicator_count() const {
  return static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
}

std::vector<std::string> JudgmentVector::positive_labels(const LabelSet &labels) const {
  if (labels.size() != positive.size())
    throw InvalidArgument("judgment vector length differs from labelset size");
  std::vector<std::string> out;
  for (std::size_t j = 0; j < positive.size(); ++j)
    if (positive[j]) out.push_back(labels[j]);
  return out;
}

JudgmentVector JudgmentVector::all_negative(std::size_t m) {
  JudgmentVector v;
  v.positive.assign(m, false);
  return v;
}

namespace {

char lower(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_blank(char c) { return c == ' ' || c == '\t'; }

bool starts_with_icase(std::string_view s, std::size_t at, std::string_view word) {
  if (s.size() - at < word.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i)
    if (lower(s[at + i]) != word[i]) return false;
  return true;
}

struct SubAnswer {
  std::size_t index;
  bool positive;
};

/// Recognizes "[punct] [question|sub-question|q] <n> <sep> [punct] yes|no".
std::optional<SubAnswer> scan_line(std::string_view line) {
  std::size_t i = 0;
  const auto n = line.size();
  while (i < n && !is_alnum(line[i])) ++i;
  for (std::string_view prefix : {"sub-question", "subquestion", "question", "q"}) {
    if (starts_with_icase(line, i, prefix) &&
        (i + prefix.size() >= n || !is_alpha(line[i + prefix.size()]))) {
      i += prefix.size();
      while (i < n && (is_blank(line[i]) || line[i] == '#')) ++i;
      break;
    }
  }
  const auto digits_start = i;
  while (i < n && is_digit(line[i]) && i - digits_start < 7) ++i;
  if (i == digits_start || (i < n && is_digit(line[i]))) return std::nullopt;
  const auto index = std::stoul(std::string(line.substr(digits_start, i - digits_start)));
  while (i < n && is_blank(line[i])) ++i;
  if (i >= n || std::string_view(":.)-=]").find(line[i]) == std::string_view::npos)
    return std::nullopt;
  ++i;
  while (i < n && !is_alnum(line[i])) ++i;
  if (starts_with_icase(line, i, "yes") && (i + 3 >= n || !is_alpha(line[i + 3])))
    return SubAnswer{index, true};
  if (starts_with_icase(line, i, "no") && (i + 2 >= n || !is_alpha(line[i + 2])))
    return SubAnswer{index, false};
  return std::nullopt;
}

} // namespace

JudgmentVector parse_judgments(std::string_view reply, std::size_t m) {
  JudgmentVector out = JudgmentVector::all_negative(m);
  std::vector<bool> seen(m, false);
  std::size_t recognized = 0;

  std::size_t start = 0;
  while (start <= reply.size()) {
    auto end = reply.find('\n', start);
    if (end == std::string_view::npos) end = reply.size();
    const auto line = reply.substr(start, end - start);
    start = end + 1;

    const auto ans = scan_line(line);
    if (!ans) continue;
    if (ans->index < 1 || ans->index > m) {
      out.warnings.push_back("ignored out-of-range sub-answer index " +
                             std::to_string(ans->index));
      continue;
    }
    const auto j = ans->index - 1;
    if (seen[j]) {
      out.warnings.push_back("duplicate sub-answer " + std::to_string(ans->index) +
                             "; keeping the first");
      continue;
    }
    seen[j] = true;
    out.positive[j] = ans->positive;
    ++recognized;
  }

  if (recognized == 0)
    throw ParseFailure("no sub-answer of the form \"j: yes|no\" found in reply");
  for (std::size_t j = 0; j < m; ++j)
    if (!seen[j])
      out.warnings.push_back("missing sub-answer " + std::to_string(j + 1) +
                             "; treated as no");
  return out;
}

std::string render_judgments(const JudgmentVector &judgment) {
  std::string out;
  for (std::size_t j = 0; j < judgment.m(); ++j) {
    if (j) out += '\n';
    out += std::to_string(j + 1);
    out += judgment.positive[j] ? ": yes" : ": no";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage-2 replies

namespace {

std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(lower(c));
  auto strip = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) ||
           std::string_view(".,;:!?\"'`*()[]").find(c) != std::string_view::npos;
  };
  while (!out.empty() && strip(out.back())) out.pop_back();
  std::size_t lead = 0;
  while (lead < out.size() && strip(out[lead])) ++lead;
  return out.substr(lead);
}

} // namespace

std::string parse_label(std::string_view reply, const std::vector<std::string> &candidates) {
  if (candidates.size() < 2) throw InvalidArgument("parse_label needs >= 2 candidates");
  const std::string text = normalize(reply);

  std::vector<std::string> norm;
  for (const auto &c : candidates) norm.push_back(normalize(c));
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (!norm[i].empty() && norm[i] == text) return candidates[i];

  // Word-bounded occurrences per candidate.
  struct Span {
    std::size_t begin, end;
  };
  std::vector<std::vector<Span>> hits(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto &needle = norm[i];
    if (needle.empty()) continue;
    for (auto at = text.find(needle); at != std::string::npos;
         at = text.find(needle, at + 1)) {
      const auto stop = at + needle.size();
      const bool left_ok = at == 0 || !is_alnum(text[at - 1]);
      const bool right_ok = stop == text.size() || !is_alnum(text[stop]);
      if (left_ok && right_ok) hits[i].push_back({at, stop});
    }
  }

  // Drop candidates found only inside a longer candidate's occurrence.
  std::vector<std::size_t> matched;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const bool free_standing = std::any_of(hits[i].begin(), hits[i].end(), [&](Span s) {
      for (std::size_t o = 0; o < candidates.size(); ++o) {
        if (o == i || norm[o].size() <= norm[i].size()) continue;
        for (auto t : hits[o])
          if (t.begin <= s.begin && s.end <= t.end) return false;
      }
      return true;
    });
    if (free_standing) matched.push_back(i);
  }

  if (matched.size() == 1) return candidates[matched.front()];
  if (matched.empty())
    throw NoMatch("reply matches no candidate label");
  std::string names;
  for (auto i : matched) names += (names.empty() ? "" : ", ") + candidates[i];
  throw NoMatch("reply is ambiguous between: " + names);
}

} // namespace ijip
