#include <gtest/gtest.h>

#include "tablequake/error.hpp"
#include "tablequake/io.hpp"
#include "tablequake/perturbation.hpp"
#include "tablequake/prompt.hpp"
#include "tablequake/run_store.hpp"
#include "test_support.hpp"

using namespace tablequake;

namespace {

QAInstance target() {
  return QAInstance{"t", Table({"city", "pop"}, {{"Lima", "10"}}), "Population of Lima?", {"10"},
                    "11", ""};
}

Exemplar exemplar(int i) {
  const auto s = std::to_string(i);
  return Exemplar{QAInstance{"e" + s, Table({"k"}, {{"v" + s}}), "Value " + s + "?", {"v" + s},
                             std::nullopt, ""},
                  "v" + s};
}

PromptSpec spec_with(int shots, bool include_table = true) {
  PromptSpec spec;
  spec.shots = shots;
  for (int i = 0; i < shots; ++i) spec.exemplars.push_back(exemplar(i));
  spec.include_table = include_table;
  return spec;
}

}  // namespace

TEST(Prompt, ZeroShotLayout) {
  const TemplateRegistry reg;
  const auto text = build_prompt(target(), spec_with(0), reg);
  EXPECT_EQ(text, std::string(kDefaultInstructions) +
                      "\n\n| city | pop |\n| --- | --- |\n| Lima | 10 |\n"
                      "Question: Population of Lima?\nAnswer:\n");
}

TEST(Prompt, WithoutTableIsThePromptMinusTheTableBlock) {
  const TemplateRegistry reg;
  const auto with = build_prompt(target(), spec_with(0), reg);
  const auto without = build_prompt(target(), spec_with(0, false), reg);
  const std::string block = "| city | pop |\n| --- | --- |\n| Lima | 10 |\n";
  auto expected = with;
  expected.erase(expected.find(block), block.size());
  EXPECT_EQ(without, expected);
  EXPECT_EQ(without.find("| --- |"), std::string::npos);
}

TEST(Prompt, ExemplarsPrecedeTargetInOrder) {
  const TemplateRegistry reg;
  const auto text = build_prompt(target(), spec_with(3), reg);
  const auto p0 = text.find("Question: Value 0?");
  const auto p1 = text.find("Question: Value 1?");
  const auto p2 = text.find("Question: Value 2?");
  const auto pt = text.find("Question: Population of Lima?");
  ASSERT_NE(p0, std::string::npos);
  EXPECT_LT(p0, p1);
  EXPECT_LT(p1, p2);
  EXPECT_LT(p2, pt);
  EXPECT_NE(text.find("Answer: v1\n\n"), std::string::npos);
}

TEST(Prompt, LengthGrowsWithShots) {
  const TemplateRegistry reg;
  std::size_t last = 0;
  for (int k = 0; k <= 3; ++k) {
    const auto len = build_prompt(target(), spec_with(k), reg).size();
    EXPECT_GT(len, last);
    last = len;
  }
}

TEST(Prompt, NoTablePromptsHaveNoSeparator) {
  const TemplateRegistry reg;
  const auto nt = perturb(target(), {Kind::NT, std::nullopt});
  EXPECT_EQ(build_prompt(nt, spec_with(2, false), reg).find("| --- |"), std::string::npos);
}

TEST(Prompt, Validation) {
  const TemplateRegistry reg;
  auto spec = spec_with(2);
  spec.shots = 1;
  EXPECT_THROW(build_prompt(target(), spec, reg), Error);
  spec = spec_with(0);
  spec.shots = 4;
  EXPECT_THROW(build_prompt(target(), spec, reg), Error);
  spec = spec_with(0);
  spec.template_id = "missing";
  try {
    build_prompt(target(), spec, reg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownTemplate);
  }
}

TEST(Prompt, TemplateFiles) {
  testing_support::TempDir dir;
  io::write_file_atomic(dir / "terse.txt", "{table}Q: {question}\nA:");
  TemplateRegistry reg;
  EXPECT_EQ(reg.load_file(dir / "terse.txt"), "terse");
  PromptSpec spec;
  spec.template_id = "terse";
  EXPECT_EQ(build_prompt(target(), spec, reg),
            "| city | pop |\n| --- | --- |\n| Lima | 10 |\nQ: Population of Lima?\nA:\n");

  io::write_file_atomic(dir / "bad.txt", "{question} {nope}");
  reg.load_file(dir / "bad.txt");
  spec.template_id = "bad";
  EXPECT_THROW(build_prompt(target(), spec, reg), Error);
  io::write_file_atomic(dir / "noq.txt", "{table}");
  EXPECT_THROW(reg.load_file(dir / "noq.txt"), Error);
}

TEST(Prompt, HashIsStableAcrossRenders) {
  const TemplateRegistry reg;
  const auto item = perturb(target(), {Kind::RowSwap, 5});
  EXPECT_EQ(fnv1a64(build_prompt(item, spec_with(1), reg)),
            fnv1a64(build_prompt(item, spec_with(1), reg)));
}

TEST(Prompt, ExemplarFileDefaultsAnswerToGold) {
  const auto ex = parse_exemplars(
      R"({"id":"e","header":["a"],"rows":[["x"]],"question":"q","gold":["x"]})" "\n"
      R"({"id":"f","header":["a"],"rows":[["y"]],"question":"q","gold":["y"],"answer":"Y!"})" "\n");
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[0].answer, "x");
  EXPECT_EQ(ex[1].answer, "Y!");
}

TEST(PromptRecord, JsonRoundTrip) {
  PromptRecord r{"t#row", "t", Kind::RowSwap, 2, "default", "text\n", 0xfeedfacecafebeefULL};
  const auto j = prompt_record_to_json(r);
  EXPECT_EQ(j.at("prompt_hash"), "feedfacecafebeef");
  const auto back = prompt_record_from_json(j);
  EXPECT_EQ(back.id, r.id);
  EXPECT_EQ(back.kind, r.kind);
  EXPECT_EQ(back.prompt_hash, r.prompt_hash);
  EXPECT_EQ(back.prompt, r.prompt);
}
