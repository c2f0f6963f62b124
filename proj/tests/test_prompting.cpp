#include <gtest/gtest.h>

#include "ijip/prompting.hpp"
#include "test_util.hpp"

using namespace ijip;
using ijip::testing::make_db;
using ijip::testing::make_query;
using ijip::testing::TempDir;

namespace {

const LabelSet kDogCatFish({"dog", "cat", "fish"});

/// Demonstration set over the given items. The backing database gets one
/// extra instance per label so every label is present.
struct Fixture {
  std::shared_ptr<const RetrievalDatabase> db;
  DemonstrationSet demos;

  explicit Fixture(std::vector<std::pair<std::string, std::string>> items) {
    const auto n = items.size();
    for (const auto &label : kDogCatFish) items.emplace_back("pad_" + label, label);
    const auto total = static_cast<Eigen::Index>(items.size());
    db = make_db(kDogCatFish.labels(), items, RowMatrixf::Identity(total, total));
    items.resize(n);
    for (std::size_t i = 0; i < items.size(); ++i)
      demos.items.push_back({i, &db->instances()[i], 1.0f});
  }
};

std::size_t count(const std::string &hay, const std::string &needle) {
  std::size_t n = 0;
  for (auto at = hay.find(needle); at != std::string::npos; at = hay.find(needle, at + 1)) ++n;
  return n;
}

Query dog_query() { return make_query("q1", "dog", Eigen::Vector3f(1, 0, 0)); }

} // namespace

TEST(Relabel, MarksOnlyTheSubLabel) {
  Fixture f({{"a", "cat"}, {"b", "dog"}, {"c", "cat"}});
  const auto bin = relabel_binary(f.demos, "cat");
  ASSERT_EQ(bin.items.size(), 3u);
  EXPECT_TRUE(bin.items[0].positive);
  EXPECT_FALSE(bin.items[1].positive);
  EXPECT_TRUE(bin.items[2].positive);
  EXPECT_EQ(bin.sub_label, "cat");
}

TEST(Relabel, AbsentLabelIsAllNo) {
  Fixture f({{"a", "cat"}, {"b", "dog"}, {"c", "cat"}});
  for (const auto &item : relabel_binary(f.demos, "fish").items) EXPECT_FALSE(item.positive);
  EXPECT_TRUE(relabel_binary(DemonstrationSet{}, "fish").items.empty());
}

TEST(JudgmentPrompt, AsksEverySubQuestionInLabelOrder) {
  Fixture f({{"a", "cat"}, {"b", "dog"}, {"c", "cat"}});
  const auto p = build_iterative_judgment_prompt(f.demos, kDogCatFish, dog_query());
  const auto text = p.flat_text();
  const auto dog = text.find("Is the label of this image dog?");
  const auto cat = text.find("Is the label of this image cat?");
  const auto fish = text.find("Is the label of this image fish?");
  ASSERT_NE(dog, std::string::npos);
  ASSERT_NE(cat, std::string::npos);
  ASSERT_NE(fish, std::string::npos);
  EXPECT_LT(dog, cat);
  EXPECT_LT(cat, fish);
  EXPECT_EQ(p.mode, PromptMode::iterative_judgment);
  EXPECT_EQ(p.candidate_labels, kDogCatFish.labels());
  EXPECT_EQ(p.query_payload_count(), 1u);
  // Each sub-question shows all three demonstrations with its own answers.
  EXPECT_EQ(count(text, "[image: images/a.png]"), 3u);
  EXPECT_NE(text.find("Is the label of this image cat? yes"), std::string::npos);
  EXPECT_NE(text.find("Is the label of this image fish? no"), std::string::npos);
  EXPECT_EQ(count(text, "Is the label of this image fish? yes"), 0u);
}

TEST(JudgmentPrompt, ZeroShotHasNoDemoBlocks) {
  const auto p = build_iterative_judgment_prompt(DemonstrationSet{}, kDogCatFish, dog_query());
  const auto text = p.flat_text();
  EXPECT_EQ(count(text, "Examples for sub-question"), 0u);
  EXPECT_EQ(count(text, "[image:"), 1u);
  EXPECT_EQ(count(text, "Is the label of this image"), 3u);
}

TEST(JudgmentPrompt, TwoLabelsTwoLines) {
  const LabelSet two({"yes_cls", "no_cls"});
  const auto p = build_iterative_judgment_prompt(DemonstrationSet{}, two, dog_query());
  const auto text = p.flat_text();
  EXPECT_NE(text.find("1. Is the label"), std::string::npos);
  EXPECT_NE(text.find("2. Is the label"), std::string::npos);
  EXPECT_EQ(text.find("3. Is the label"), std::string::npos);
  EXPECT_NE(text.find("exactly 2 lines"), std::string::npos);
}

TEST(MulticlassPrompt, FullSetIsMulticlassSubsetIsRestricted) {
  Fixture f({{"a", "cat"}, {"b", "dog"}});
  const auto full = build_multiclass_prompt(f.demos, kDogCatFish.labels(), kDogCatFish, dog_query());
  EXPECT_EQ(full.mode, PromptMode::multiclass);
  EXPECT_NE(full.flat_text().find("dog, cat, fish"), std::string::npos);
  EXPECT_NE(full.flat_text().find("Label: cat"), std::string::npos);

  const auto three = build_multiclass_prompt(f.demos, {"cat", "fish"}, kDogCatFish, dog_query());
  EXPECT_EQ(three.mode, PromptMode::restricted);
  EXPECT_EQ(three.candidate_labels, (std::vector<std::string>{"cat", "fish"}));
  EXPECT_NE(three.flat_text().find("from: cat, fish."), std::string::npos);
  // The candidate line never offers the excluded label.
  EXPECT_EQ(three.flat_text().find("dog,"), std::string::npos);

  EXPECT_THROW(build_multiclass_prompt(f.demos, {"cat"}, kDogCatFish, dog_query()),
               InvalidArgument);
  EXPECT_THROW(build_multiclass_prompt(f.demos, {"cat", "wolf"}, kDogCatFish, dog_query()),
               InvalidArgument);
}

TEST(Templates, UnknownPlaceholderAndMissingQueryAreErrors) {
  auto t = PromptTemplates::defaults();
  t.question = "{{index}} {{colour}}\n";
  EXPECT_THROW(build_iterative_judgment_prompt(DemonstrationSet{}, kDogCatFish, dog_query(), t),
               FormatError);
  t = PromptTemplates::defaults();
  t.multiclass = "no query here {{candidates}}";
  EXPECT_THROW(build_multiclass_prompt(DemonstrationSet{}, kDogCatFish.labels(), kDogCatFish,
                                       dog_query(), t),
               FormatError);
}

TEST(Templates, DirectoryOverridesDefaults) {
  TempDir dir("tmpl");
  ijip::testing::write_text(dir / "question.txt", "Q{{index}}: {{label}}?\n");
  const auto t = PromptTemplates::load(dir.path());
  EXPECT_EQ(t.question, "Q{{index}}: {{label}}?\n");
  EXPECT_EQ(t.multiclass, PromptTemplates::defaults().multiclass);
  const auto p = build_iterative_judgment_prompt(DemonstrationSet{}, kDogCatFish, dog_query(), t);
  EXPECT_NE(p.flat_text().find("Q2: cat?"), std::string::npos);
  EXPECT_THROW(PromptTemplates::load(dir / "missing"), FormatError);
}

TEST(Templates, ShippedFilesMatchEmbeddedDefaults) {
  const auto shipped = PromptTemplates::load(IJIP_TEMPLATE_DIR);
  const auto &d = PromptTemplates::defaults();
  EXPECT_EQ(shipped.iterative_judgment, d.iterative_judgment);
  EXPECT_EQ(shipped.subquestion, d.subquestion);
  EXPECT_EQ(shipped.question, d.question);
  EXPECT_EQ(shipped.binary_demo, d.binary_demo);
  EXPECT_EQ(shipped.multiclass, d.multiclass);
  EXPECT_EQ(shipped.restricted, d.restricted);
  EXPECT_EQ(shipped.labeled_demo, d.labeled_demo);
}

TEST(PromptHash, StableAndContentSensitive) {
  const auto a = build_iterative_judgment_prompt(DemonstrationSet{}, kDogCatFish, dog_query());
  const auto b = build_iterative_judgment_prompt(DemonstrationSet{}, kDogCatFish, dog_query());
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 64u);
  const auto c = build_iterative_judgment_prompt(
      DemonstrationSet{}, kDogCatFish, make_query("q2", "dog", Eigen::Vector3f(1, 0, 0)));
  EXPECT_NE(a.hash(), c.hash());
}

TEST(ParseJudgments, WellFormedReply) {
  const auto v = parse_judgments("1: yes\n2: no\n3: no", 3);
  EXPECT_EQ(v.positive, (std::vector<bool>{true, false, false}));
  EXPECT_EQ(v.indicator_count(), 1u);
  EXPECT_TRUE(v.warnings.empty());
  EXPECT_EQ(v.positive_labels(kDogCatFish), (std::vector<std::string>{"dog"}));
}

TEST(ParseJudgments, MissingIndexDefaultsToNoWithWarning) {
  const auto v = parse_judgments("1: yes\n3: yes", 3);
  EXPECT_EQ(v.positive, (std::vector<bool>{true, false, true}));
  EXPECT_EQ(v.indicator_count(), 2u);
  ASSERT_EQ(v.warnings.size(), 1u);
  EXPECT_NE(v.warnings[0].find('2'), std::string::npos);
}

TEST(ParseJudgments, NoRecognizableIndexThrows) {
  EXPECT_THROW(parse_judgments("I think it is a dog.", 3), ParseFailure);
  EXPECT_THROW(parse_judgments("", 3), ParseFailure);
}

TEST(ParseJudgments, TolerantFormatting) {
  const auto v = parse_judgments("Sure!\n**1.** Yes\n- 2) NO\nQuestion 3 = yes, it is\n", 3);
  EXPECT_EQ(v.positive, (std::vector<bool>{true, false, true}));
  const auto dup = parse_judgments("1: yes\n1: no\n2: no\n7: yes", 2);
  EXPECT_EQ(dup.positive, (std::vector<bool>{true, false}));
  EXPECT_EQ(dup.warnings.size(), 2u);
  // "nope" and "yesterday" are not answers.
  EXPECT_THROW(parse_judgments("1: nope\n2: yesterday", 2), ParseFailure);
}

TEST(ParseJudgments, RenderRoundTrip) {
  JudgmentVector v;
  v.positive = {false, true, true, false};
  EXPECT_EQ(render_judgments(v), "1: no\n2: yes\n3: yes\n4: no");
  EXPECT_EQ(parse_judgments(render_judgments(v), 4).positive, v.positive);
}

TEST(ParseLabel, SubstringAndCase) {
  const std::vector<std::string> c = kDogCatFish.labels();
  EXPECT_EQ(parse_label("The answer is Cat.", c), "cat");
  EXPECT_EQ(parse_label("CAT", c), "cat");
  EXPECT_THROW(parse_label("cat or dog", c), NoMatch);
  EXPECT_THROW(parse_label("a bird", c), NoMatch);
  // Word boundaries: "catalog" is not "cat".
  EXPECT_THROW(parse_label("catalog", c), NoMatch);
}

TEST(ParseLabel, LongerCandidateWins) {
  const std::vector<std::string> c = {"sea", "sea lion", "lion"};
  EXPECT_EQ(parse_label("It is a sea lion.", c), "sea lion");
  EXPECT_EQ(parse_label("sea", c), "sea");
  EXPECT_THROW(parse_label("a lion by the sea", c), NoMatch);
}
