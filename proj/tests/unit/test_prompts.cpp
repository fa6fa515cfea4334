#include <gtest/gtest.h>

#include "autoevol/data_model.hpp"
#include "autoevol/errors.hpp"
#include "autoevol/prompts.hpp"
#include "test_support.hpp"

using namespace autoevol;
using namespace autoevol::testing;

namespace {

// Independent reference: split on the marker and keep the last piece.
struct RefResult {
  std::string text;
  bool warning;
};

RefResult reference_extract(const std::string& out, const std::string& marker) {
  std::vector<std::string> pieces;
  std::size_t start = 0;
  for (;;) {
    const auto hit = out.find(marker, start);
    if (hit == std::string::npos) break;
    pieces.push_back(out.substr(start, hit - start));
    start = hit + marker.size();
  }
  if (pieces.empty()) return {trim(out), true};
  std::string tail = trim(out.substr(start));
  if (!tail.empty() && tail[0] == ':') tail = trim(tail.substr(1));
  return {tail, false};
}

}  // namespace

TEST(Template, RenderExact) {
  PromptTemplate t(TemplateName::ResponseGeneration, "Evolve: {instruction}");
  EXPECT_EQ(t.render({{"instruction", "add 2+2"}}), "Evolve: add 2+2");
}

TEST(Template, MissingBindingNamesPlaceholder) {
  PromptTemplate t(TemplateName::ResponseGeneration, "Evolve: {instruction}");
  try {
    t.render({});
    FAIL();
  } catch (const RenderError& e) {
    EXPECT_EQ(e.placeholder(), "instruction");
  }
}

TEST(Template, NonIdentifierBracesAreLiteral) {
  PromptTemplate t(TemplateName::ResponseGeneration,
                   R"({"tag": "x"} {instruction} { spaced } {9bad} {})");
  EXPECT_EQ(t.placeholders(), (std::set<std::string>{"instruction"}));
  EXPECT_EQ(t.render({{"instruction", "I"}}), R"({"tag": "x"} I { spaced } {9bad} {})");
}

TEST(Template, BoundValuesAreNotReexpanded) {
  PromptTemplate t(TemplateName::ResponseGeneration, "{instruction}");
  EXPECT_EQ(t.render({{"instruction", "{instruction}"}}), "{instruction}");
}

TEST(Template, RequiredPlaceholdersEnforced) {
  EXPECT_THROW(PromptTemplate(TemplateName::TrajectoryAnalysis, "no slot"), ValidationError);
  EXPECT_THROW(PromptTemplate(TemplateName::MethodOptimization, "{feedback} {current_method}"),
               ValidationError);
}

TEST(Template, BuiltinsRenderParseIdentity) {
  const auto set = TemplateSet::builtin();
  for (auto name : all_template_names()) {
    const auto& t = set.get(name);
    std::map<std::string, std::string> self;
    for (const auto& p : t.placeholders()) self[p] = "{" + p + "}";
    EXPECT_EQ(t.render(self), t.body()) << to_string(name);
    std::string joined;
    for (const auto& s : t.segments()) joined += s.placeholder ? "{" + s.text + "}" : s.text;
    EXPECT_EQ(joined, t.body());
  }
}

TEST(Template, RandomBodiesRenderParseIdentity) {
  Rng rng(5);
  const std::string alphabet = "ab {}_x1\n{instruction}{a}{";
  for (int trial = 0; trial < 500; ++trial) {
    std::string body = "{instruction}";
    const std::size_t n = rng.below(40);
    for (std::size_t i = 0; i < n; ++i) body += alphabet[rng.below(alphabet.size())];
    PromptTemplate t(TemplateName::ResponseGeneration, body);
    std::map<std::string, std::string> self;
    for (const auto& p : t.placeholders()) self[p] = "{" + p + "}";
    ASSERT_EQ(t.render(self), body);
  }
}

TEST(Template, InitialMethodContainsDirective) {
  const auto set = TemplateSet::builtin();
  const auto rendered = render_method(set.get(TemplateName::InitialMethod).body(),
                                      "Tomas has 8 stickers and buys 4 more. How many now?");
  EXPECT_NE(rendered.find("list all the possible methods to make this instruction more complex"),
            std::string::npos);
  EXPECT_NE(rendered.find("Tomas has 8 stickers"), std::string::npos);
  EXPECT_NE(rendered.find(kDefaultMarker), std::string::npos);
  EXPECT_EQ(rendered.find("{instruction}"), std::string::npos);
}

TEST(Template, WeakMethodHasMarker) {
  const auto set = TemplateSet::builtin();
  EXPECT_NE(set.get(TemplateName::WeakInitialMethod).body().find(kDefaultMarker),
            std::string::npos);
}

TEST(Template, RenderMethodWithoutSlotAppends) {
  EXPECT_EQ(render_method("Rewrite it.", "Q"), "Rewrite it.\n\n#Instruction#:\nQ");
  EXPECT_EQ(render_method("A {instruction} B {instruction}", "Q"), "A Q B Q");
  EXPECT_EQ(render_method("{trajectories} {instruction}", "Q"), "{trajectories} Q");
}

TEST(Template, LoadDirectoryOverridesAndFallsBack) {
  TempDir dir;
  write_file(dir / "response_generation.txt", "Answer carefully:\n{instruction}");
  const auto set = TemplateSet::load_directory(dir.path());
  EXPECT_EQ(set.get(TemplateName::ResponseGeneration).render({{"instruction", "x"}}),
            "Answer carefully:\nx");
  EXPECT_EQ(set.get(TemplateName::Tagging).body(),
            TemplateSet::builtin().get(TemplateName::Tagging).body());
  write_file(dir / "trajectory_analysis.txt", "no placeholder");
  EXPECT_THROW(TemplateSet::load_directory(dir.path()), ValidationError);
  EXPECT_THROW(TemplateSet::load_directory(dir / "missing"), Error);
}

TEST(Extract, Basic) {
  const auto r = extract_final_instruction("…plan…\n#Finally Rewritten Instruction#\nSolve for x.");
  EXPECT_EQ(r.text, "Solve for x.");
  EXPECT_FALSE(r.format_warning);
}

TEST(Extract, LastOccurrenceWins) {
  const auto r = extract_final_instruction(
      "#Finally Rewritten Instruction#\nfirst\n#Finally Rewritten Instruction#\nsecond");
  EXPECT_EQ(r.text, "second");
}

TEST(Extract, ColonHeading) {
  EXPECT_EQ(extract_final_instruction("Step 4 #Finally Rewritten Instruction#:\n  Do it. ").text,
            "Do it.");
}

TEST(Extract, NoMarkerWarns) {
  const auto r = extract_final_instruction("  Solve for y.\n");
  EXPECT_EQ(r.text, "Solve for y.");
  EXPECT_TRUE(r.format_warning);
}

TEST(Extract, EmptyThrows) {
  EXPECT_THROW(extract_final_instruction("plan\n#Finally Rewritten Instruction#:  \n"),
               EmptyEvolutionError);
  EXPECT_THROW(extract_final_instruction("   "), EmptyEvolutionError);
}

TEST(Extract, Idempotent) {
  const auto once = extract_final_instruction("x\n#Finally Rewritten Instruction#\nFinal text.");
  const auto twice = extract_final_instruction(once.text);
  EXPECT_EQ(twice.text, once.text);
}

TEST(Extract, CustomMarker) {
  EXPECT_EQ(extract_final_instruction("a <<OUT>> b", "<<OUT>>").text, "b");
}

TEST(Extract, FiftyCaseCorpusMatchesReference) {
  Rng rng(50);
  const std::string marker = kDefaultMarker;
  const std::vector<std::string> fillers = {"Step 1 #Methods List#:", "Step 2 #Plan#:", "blah",
                                            "Step 3 #Rewritten Instruction#:", "\n", "  ",
                                            "Compute 3+4 with units.", "Solve for x: 2x=6."};
  int checked = 0;
  for (int i = 0; i < 50; ++i) {
    std::string out;
    const std::size_t parts = 1 + rng.below(5);
    for (std::size_t p = 0; p < parts; ++p) {
      out += fillers[rng.below(fillers.size())] + "\n";
      if (rng.below(3) == 0) out += "Step 4 " + marker + (rng.below(2) ? ":" : "") + "\n";
    }
    out += "Final question " + std::to_string(i) + "?";
    if (rng.below(4) == 0) out += "\n";
    const auto ref = reference_extract(out, marker);
    const auto got = extract_final_instruction(out, marker);
    EXPECT_EQ(got.text, ref.text) << out;
    EXPECT_EQ(got.format_warning, ref.warning) << out;
    ++checked;
  }
  EXPECT_EQ(checked, 50);
}

TEST(Utf8, TruncateNeverSplitsSequence) {
  const std::string s = "aé日本🙂";
  for (std::size_t n = 0; n <= s.size(); ++n) {
    const auto t = utf8_truncate(s, n);
    EXPECT_LE(t.size(), n);
    EXPECT_EQ(s.compare(0, t.size(), t), 0);
    EXPECT_NO_THROW((void)nlohmann::json(t).dump());
  }
}
