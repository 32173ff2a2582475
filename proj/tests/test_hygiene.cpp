#include <doctest.h>

#include "prefpo/error.hpp"
#include "prefpo/hygiene.hpp"
#include "support.hpp"

using namespace prefpo;
using namespace prefpo::hygiene;

TEST_CASE("length counts code points") {
  CHECK(length_chars(testing::read_file(testing::fixture("textgrad_prompt.txt"))) == 4002);
  CHECK(length_chars("caf\xC3\xA9") == 4);
}

TEST_CASE("repetition ratio counts every occurrence of a repeated trigram") {
  CHECK(repetition_ratio("a b c a b c") == doctest::Approx(0.5));
  CHECK(repetition_ratio("a b c a b c a b c") == doctest::Approx(1.0));
  CHECK(repetition_ratio("a b") == 0.0);
  CHECK(repetition_ratio("one two three four") == 0.0);
  CHECK(repetition_ratio("A b c a b c") == doctest::Approx(0.0));
}

TEST_CASE("similarity matches difflib on frozen cases") {
  const Json doc = Json::parse(testing::read_file(testing::fixture("difflib_oracle.json")));
  for (const auto& c : doc.at("cases")) {
    const auto a = c.at("a").get<std::string>();
    const auto b = c.at("b").get<std::string>();
    INFO(Json(a).dump(), " vs ", Json(b).dump());
    CHECK(lexical_similarity(a, b) == doctest::Approx(c.at("ratio").get<double>()).epsilon(1e-12));
    CHECK(repetition_ratio(b) == doctest::Approx(c.at("rep_b").get<double>()).epsilon(1e-12));
  }
}

TEST_CASE("similarity edge cases") {
  CHECK(lexical_similarity("", "") == 1.0);
  CHECK(lexical_similarity("abc", "abc") == 1.0);
  CHECK(lexical_similarity("abc", "") == 0.0);
  CHECK(lexical_similarity("abcd", "bcde") == doctest::Approx(0.75));
}

TEST_CASE("fixture values match the published hygiene figures") {
  const auto tg = testing::read_file(testing::fixture("textgrad_prompt.txt"));
  const auto seed = testing::read_file(testing::fixture("coffee_shop_seed.txt"));
  // Frozen from Python difflib / collections.Counter on the same files.
  CHECK(repetition_ratio(tg) == doctest::Approx(0.11641791044776119).epsilon(1e-12));
  CHECK(lexical_similarity(seed, tg) == doctest::Approx(0.03566265060240964).epsilon(1e-12));
  CHECK(lexical_similarity(tg, seed) == doctest::Approx(0.05927710843373494).epsilon(1e-12));
}

TEST_CASE("hygiene report relates the prompt to its seed") {
  const Prompt seed{"s", "write a poem about the sea", Origin::seed, std::nullopt, 0};
  const Prompt p{"p2", "write a poem about the sea and the sea and the sea", Origin::optimized, "s", 1};
  const auto m = hygiene_report(p, seed);
  CHECK(m.length_chars == p.text.size());
  CHECK(m.length_ratio == doctest::Approx(static_cast<double>(p.text.size()) / seed.text.size()));
  CHECK(m.repetition_increase == doctest::Approx(m.repetition - repetition_ratio(seed.text)));
  CHECK(hygiene_report(seed, seed).similarity_to_seed == 1.0);
  CHECK_THROWS_AS(hygiene_report(p, Prompt{"s", "", Origin::seed, std::nullopt, 0}), EmptySeed);
}

TEST_CASE("summary gives mean and sample sd") {
  HygieneMetrics a, b;
  a.length_chars = 10;
  b.length_chars = 20;
  const auto s = summarize({a, b});
  CHECK(s.n == 2);
  CHECK(s.length_chars.mean == doctest::Approx(15.0));
  CHECK(s.length_chars.sd == doctest::Approx(7.0710678118654755));
  CHECK_THROWS_AS(summarize({}), EmptyInput);
}
