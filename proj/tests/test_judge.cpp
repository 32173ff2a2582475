#include <doctest.h>

#include "prefpo/error.hpp"
#include "prefpo/judge.hpp"
#include "support.hpp"

using namespace prefpo;
using namespace prefpo::judge;

namespace {

struct Exemplar {
  Prompt prompt;
  Criteria criteria;
  std::string literal;
  std::string reply;
};

Exemplar exemplar(const std::string& name) {
  const Json all = Json::parse(testing::read_file(testing::fixture("judge_exemplars.json")));
  const Json& e = all.at(name);
  Exemplar x{{"p1", e.at("prompt"), Origin::seed, std::nullopt, 0}, {}, e.at("prompt_literal"), e.at("reply")};
  for (const auto& d : e.at("criteria")) x.criteria.items.push_back({"freeform", Json::object(), d});
  return x;
}

std::shared_ptr<ScriptedBackend> replay(const std::string& reply) {
  return std::make_shared<ScriptedBackend>(
      std::vector<ScriptedBackend::Record>{{std::nullopt, std::nullopt, reply, std::nullopt, 1, true}});
}

}  // namespace

TEST_CASE("judge prompts are rendered the way the exemplars show them") {
  for (const char* name : {"hygiene_6", "hygiene_7", "hacking_1", "hacking_2"}) {
    const auto x = exemplar(name);
    CHECK(escape_prompt(x.prompt.text) == x.literal);
    std::string expected = "Prompt: \"" + x.literal + "\"\nCriteria:[\n";
    for (const auto& c : x.criteria.items) expected += "   " + Json(c.description).dump() + "\n";
    expected += "]";
    const auto t = std::string(name).starts_with("hygiene") ? render_hygiene_judge(x.prompt, x.criteria)
                                                             : render_hacking_judge(x.prompt, x.criteria);
    REQUIRE(t.size() == 2);
    const auto at = t[1].content.rfind("Now evaluate this prompt:\n");
    REQUIRE(at != std::string::npos);
    CHECK(t[1].content.substr(at + 26, expected.size()) == expected);
    CHECK(t[1].content.find("{{") == std::string::npos);
  }
}

TEST_CASE("hygiene exemplars replay to their published totals") {
  auto x6 = exemplar("hygiene_6");
  auto g6 = grade_hygiene(x6.prompt, x6.criteria, testing::gateway_with(replay(x6.reply)), testing::spec("judge"));
  CHECK(g6.total == 6.0);
  CHECK(g6.per_run.size() == 3);
  auto x7 = exemplar("hygiene_7");
  auto g7 = grade_hygiene(x7.prompt, x7.criteria, testing::gateway_with(replay(x7.reply)), testing::spec("judge"));
  CHECK(g7.total == 0.0);
  CHECK(g7.readability == 0.0);
}

TEST_CASE("hacking exemplars replay to their published grades") {
  auto x1 = exemplar("hacking_1");
  const auto v1 = judge_hacking(x1.prompt, x1.criteria, testing::gateway_with(replay(x1.reply)), testing::spec("j"));
  CHECK(v1.verdict);
  CHECK(v1.unanimous);
  CHECK(v1.reasonings[0].starts_with("Our prompt first tells us"));
  auto x2 = exemplar("hacking_2");
  const auto v2 = judge_hacking(x2.prompt, x2.criteria, testing::gateway_with(replay(x2.reply)), testing::spec("j"));
  CHECK_FALSE(v2.verdict);
}

TEST_CASE("majority and unanimity over all vote combinations") {
  for (int mask = 0; mask < 8; ++mask) {
    const std::array<bool, 3> votes{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
    const int fails = __builtin_popcount(static_cast<unsigned>(mask));
    const auto v = aggregate_votes(votes);
    CHECK(v.verdict == (fails >= 2));
    CHECK(v.unanimous == (fails == 0 || fails == 3));
  }
}

TEST_CASE("score parsing is strict about the last block") {
  const auto s = parse_hygiene_scores(
      "Scores: Readability: 0/2\nlater...\nScores:\n- **Readability**: 1/2\n- Specification Quality: 2/2\n"
      "- Maintainability: 0/2");
  CHECK(s.axes == std::array<int, 3>{1, 2, 0});
  CHECK_THROWS_AS(parse_hygiene_scores("no scores here"), ParseError);
  CHECK_THROWS_AS(parse_hygiene_scores("Scores:\n- Readability: 3/2\n- Specification Quality: 1/2\n"
                                       "- Maintainability: 1/2"),
                  ParseError);
  CHECK_THROWS_AS(parse_hygiene_scores("Scores:\n- Readability: 1/2\n- Maintainability: 1/2"), ParseError);
  CHECK(parse_hack_grade("Reasoning: fine\nGrade: PASS").first == false);
  CHECK(parse_hack_grade("Reasoning: Grade: pass is wrong\n**Grade:** fail").first == true);
  CHECK_THROWS_AS(parse_hack_grade("Grade: maybe"), ParseError);
}

TEST_CASE("a judge run that never parses fails the grade") {
  auto be = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Record>{
      {std::nullopt, std::nullopt, "Scores:\n- Readability: 2/2\n- Specification Quality: 2/2\n- Maintainability: 2/2",
       std::nullopt, 2, false},
      {std::nullopt, std::nullopt, "I refuse", std::nullopt, 1, true}});
  const Prompt p{"p1", "Write.", Origin::seed, std::nullopt, 0};
  const Criteria c{{}, std::string("Be nice")};
  CHECK_THROWS_AS(grade_hygiene(p, c, testing::gateway_with(be), testing::spec("j")), ParseError);
  CHECK(be->request_count() == 2 + 3);
}

TEST_CASE("corpus judging records failures per prompt") {
  auto x2 = exemplar("hacking_2");
  auto be = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Record>{
      {"bad prompt", std::nullopt, "unparseable", std::nullopt, 1, true},
      {std::nullopt, std::nullopt, x2.reply, std::nullopt, 1, true}});
  const Gateway gw = testing::gateway_with(be);
  std::vector<std::pair<Prompt, Criteria>> corpus{
      {x2.prompt, x2.criteria}, {{"p2", "bad prompt", Origin::seed, std::nullopt, 0}, x2.criteria}};
  const auto report = judge_corpus(corpus, gw, testing::spec("j"), {.hygiene = false, .hacking = true});
  CHECK(report.judged == 1);
  CHECK(report.failed == 1);
  CHECK(report.rows[1].error.has_value());
  CHECK(report.hacking_flag_rate == 0.0);
  CHECK(report.unanimity_rate == 1.0);
  CHECK(aggregates_json(report).at("record") == "aggregates");
}
