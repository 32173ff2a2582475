#include <doctest.h>

#include <numeric>
#include <set>

#include "prefpo/engine.hpp"
#include "prefpo/error.hpp"
#include "support.hpp"

using namespace prefpo;
using testing::crit;

namespace {

PromptPool two_seeds() {
  PromptPool pool;
  pool.add_new("Write a short poem about rain.", Origin::seed, std::nullopt, 0);
  pool.add_new("Compose a brief rain poem.", Origin::seed, std::nullopt, 0);
  return pool;
}

Criteria poem_criteria() {
  return {{crit("word_max", {{"max_words", 60}}, "Response must have at most 60 words"),
           crit("no_commas", Json::object(), "Response must not contain commas")},
          std::nullopt};
}

std::string serialize(const RunResult& r) {
  Json logs = Json::array();
  for (const auto& l : r.logs) logs.push_back(l);
  return Json{{"pool", r.pool}, {"logs", logs}}.dump();
}

}  // namespace

TEST_CASE("elo expected score and update") {
  CHECK(elo_expected(1500, 1500) == 0.5);
  EloState s;
  s.ratings = {{"p1", 1500}, {"p2", 1500}};
  const auto n = elo_update(s, "p1", "p2");
  CHECK(n.ratings.at("p1") == 1516.0);
  CHECK(n.ratings.at("p2") == 1484.0);
  CHECK(s.ratings.at("p1") == 1500.0);
  CHECK_THROWS_AS(elo_update(s, "p1", "p1"), PreconditionError);
  CHECK_THROWS_AS(elo_update(s, "p1", "p9"), UnknownPromptId);
  CHECK(elo_expected(1600, 1400) == doctest::Approx(1.0 / (1.0 + std::pow(10.0, -0.5))));
}

TEST_CASE("uniform sampling draws distinct prompts with both orders") {
  PromptPool pool;
  for (int i = 0; i < 5; ++i) pool.add_new("prompt " + std::to_string(i), Origin::seed, std::nullopt, 0);
  Rng rng(3);
  std::map<std::pair<std::string, std::string>, int> seen;
  for (int i = 0; i < 4000; ++i) {
    const auto [a, b] = sample_pair(pool, Sampling::uniform, nullptr, rng);
    REQUIRE(a.id != b.id);
    ++seen[{a.id, b.id}];
  }
  CHECK(seen.size() == 20);
  for (const auto& [_, n] : seen) CHECK(std::abs(n - 200) < 70);
  PromptPool one;
  one.add_new("x", Origin::seed, std::nullopt, 0);
  CHECK_THROWS_AS(sample_pair(one, Sampling::uniform, nullptr, rng), PoolTooSmall);
}

TEST_CASE("elo sampling picks the top two with index tie-break") {
  PromptPool pool;
  for (int i = 0; i < 4; ++i) pool.add_new("prompt " + std::to_string(i), Origin::seed, std::nullopt, 0);
  EloState s;
  s.ratings = {{"p1", 1490}, {"p2", 1520}, {"p3", 1500}, {"p4", 1520}};
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto [a, b] = sample_pair(pool, Sampling::elo, &s, rng);
    std::set<std::string> ids{a.id, b.id};
    CHECK(ids == std::set<std::string>{"p2", "p4"});
  }
  CHECK_THROWS_AS(sample_pair(pool, Sampling::elo, nullptr, rng), PreconditionError);
}

TEST_CASE("bootstrap adds a variant to a single seed") {
  testing::Simulator sim;
  const Gateway gw = testing::gateway_with(sim.backend());
  const Prompt seed{"p1", "Write a haiku.", Origin::seed, std::nullopt, 0};
  const auto pool = bootstrap_pool({seed}, poem_criteria(), gw, testing::spec("variant"));
  REQUIRE(pool.size() == 2);
  CHECK(pool[1].origin == Origin::variant);
  CHECK(pool[1].parent_id == "p1");
  CHECK(pool[1].text == "Variant of: Write a haiku.");

  auto bad = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Record>{
      {std::nullopt, std::nullopt, "not json", std::nullopt, 1, true}});
  CHECK_THROWS_AS(bootstrap_pool({seed}, poem_criteria(), testing::gateway_with(bad), testing::spec("variant")),
                  VariantGenerationFailed);
  CHECK(bad->request_count() == 3);
}

TEST_CASE("each iteration rewrites the non-preferred prompt") {
  testing::Simulator sim;
  const Gateway gw = testing::gateway_with(sim.backend());
  const auto result = run(testing::scripted_config(15), gw, two_seeds(), poem_criteria());
  CHECK(result.pool.size() == 17);
  CHECK(result.skipped == 0);
  REQUIRE(result.logs.size() == 15);
  for (const auto& log : result.logs) {
    REQUIRE(log.verdict);
    REQUIRE(log.new_prompt_id);
    const Prompt* p = result.pool.find(*log.new_prompt_id);
    REQUIRE(p != nullptr);
    CHECK(p->origin == Origin::optimized);
    CHECK(p->parent_id == log.verdict->non_preferred_id());
    CHECK(p->created_at_iteration == log.iteration);
    CHECK(log.discriminator_attempts == 1);
  }
  CHECK(pool_violations(result.pool).empty());
}

TEST_CASE("reruns with the same seed are identical") {
  testing::Simulator s1, s2, s3;
  const auto a = run(testing::scripted_config(10, 5), testing::gateway_with(s1.backend()), two_seeds(), poem_criteria());
  const auto b = run(testing::scripted_config(10, 5), testing::gateway_with(s2.backend()), two_seeds(), poem_criteria());
  const auto c = run(testing::scripted_config(10, 6), testing::gateway_with(s3.backend()), two_seeds(), poem_criteria());
  CHECK(serialize(a) == serialize(b));
  CHECK(serialize(a) != serialize(c));
}

TEST_CASE("discriminator never sees prompt text") {
  testing::Simulator sim;
  auto be = sim.backend();
  const auto result = run(testing::scripted_config(12), testing::gateway_with(be), two_seeds(), poem_criteria());
  int checked = 0;
  for (const auto& req : be->requests()) {
    if (req.model != "discriminator") continue;
    ++checked;
    for (const auto& p : result.pool.prompts()) {
      for (const auto& m : req.messages) CHECK(m.content.find(p.text) == std::string::npos);
    }
  }
  CHECK(checked == 12);
}

TEST_CASE("optimizer sees the discriminator exchange") {
  testing::Simulator sim;
  auto be = sim.backend();
  run(testing::scripted_config(1), testing::gateway_with(be), two_seeds(), poem_criteria());
  std::optional<ScriptedBackend::Request> disc, opt;
  for (const auto& r : be->requests()) {
    if (r.model == "discriminator") disc = r;
    if (r.model == "optimizer") opt = r;
  }
  REQUIRE(disc);
  REQUIRE(opt);
  REQUIRE(opt->messages.size() == 4);
  CHECK(opt->messages[0] == disc->messages[0]);
  CHECK(opt->messages[1] == disc->messages[1]);
  CHECK(opt->messages[2].role == ChatRole::assistant);
  CHECK(opt->messages[2].content.find("preferred") != std::string::npos);
}

TEST_CASE("parse failures are retried, then skipped, then abort the run") {
  testing::Simulator sim;
  auto be = sim.backend();
  be->push({std::nullopt, "discriminator", "I prefer the first one.", std::nullopt, 2, false});
  const auto ok = run(testing::scripted_config(3), testing::gateway_with(be), two_seeds(), poem_criteria());
  CHECK(ok.logs[0].discriminator_attempts == 3);
  CHECK(ok.logs[0].outcome == IterationOutcome::inserted);

  testing::Simulator sim2;
  auto be2 = sim2.backend();
  be2->push({std::nullopt, "discriminator", "no verdict", std::nullopt, 3, false});
  const auto skipped = run(testing::scripted_config(3), testing::gateway_with(be2), two_seeds(), poem_criteria());
  CHECK(skipped.skipped == 1);
  CHECK(skipped.logs[0].outcome == IterationOutcome::skipped);
  CHECK(skipped.logs[0].skip_reason->starts_with("discriminator"));
  CHECK(skipped.pool.size() == 4);

  testing::Simulator sim3;
  auto be3 = sim3.backend();
  be3->push({std::nullopt, "optimizer", "{}", std::nullopt, 1, true});
  std::vector<IterationLog> streamed;
  CHECK_THROWS_AS(run(testing::scripted_config(3), testing::gateway_with(be3), two_seeds(), poem_criteria(), nullptr,
                      [&](const IterationLog& l) { streamed.push_back(l); }),
                  AbortedRun);
  CHECK(streamed.size() == 2);
}

TEST_CASE("duplicate rewrites are suppressed but still count as comparisons") {
  testing::Simulator sim;
  auto be = sim.backend();
  be->push({std::nullopt, "optimizer", R"({"prompt": "Same rewrite"})", std::nullopt, 1, true});
  RunConfig cfg = testing::scripted_config(6);
  cfg.sampling = Sampling::elo;
  const auto r = run(cfg, testing::gateway_with(be), two_seeds(), poem_criteria());
  CHECK(r.pool.size() == 3);
  CHECK(r.dedup_suppressed == 5);
  CHECK(r.skipped == 0);
  const auto& ratings = *r.pool.ratings();
  const double sum = std::accumulate(ratings.begin(), ratings.end(), 0.0,
                                     [](double s, const auto& kv) { return s + kv.second; });
  CHECK(sum == doctest::Approx(1500.0 * 3));
  CHECK(r.logs.back().elo.has_value());
}

TEST_CASE("elo run enters new prompts at the base rating") {
  testing::Simulator sim;
  RunConfig cfg = testing::scripted_config(1);
  cfg.sampling = Sampling::elo;
  const auto r = run(cfg, testing::gateway_with(sim.backend()), two_seeds(), poem_criteria());
  const auto& ratings = *r.pool.ratings();
  CHECK(ratings.at("p3") == 1500.0);
  CHECK(ratings.at(r.logs[0].verdict->preferred_id()) == 1516.0);
  CHECK(ratings.at(r.logs[0].verdict->non_preferred_id()) == 1484.0);
}

TEST_CASE("labeled mode caches task outputs per prompt and sample") {
  testing::Simulator sim;
  auto be = sim.backend();
  RunConfig cfg = testing::scripted_config(4);
  cfg.mode = Mode::labeled_qa;
  const std::vector<TaskSample> train{{"2+2?", "4", std::nullopt}, {"3+3?", "6", std::nullopt}};
  const auto r = run(cfg, testing::gateway_with(be), two_seeds(), Criteria{}, &train);
  std::size_t task_calls = 0;
  for (const auto& req : be->requests()) task_calls += req.model == "task" ? 1 : 0;
  // Every prompt that took part is generated once per sample.
  std::set<std::string> compared;
  for (const auto& l : r.logs) compared.insert({l.prompt_a_id, l.prompt_b_id});
  CHECK(task_calls == compared.size() * train.size());
}

TEST_CASE("run rejects unusable inputs") {
  testing::Simulator sim;
  const Gateway gw = testing::gateway_with(sim.backend());
  RunConfig cfg = testing::scripted_config(3);
  PromptPool one;
  one.add_new("x", Origin::seed, std::nullopt, 0);
  CHECK_THROWS_AS(run(cfg, gw, one, poem_criteria()), AbortedRun);
  CHECK_THROWS_AS(run(cfg, gw, two_seeds(), Criteria{}), AbortedRun);
  cfg.seed.reset();
  CHECK_THROWS_AS(run(cfg, gw, two_seeds(), poem_criteria()), AbortedRun);
  cfg = testing::scripted_config(3);
  cfg.mode = Mode::labeled_qa;
  const std::vector<TaskSample> unlabeled{{"q", std::nullopt, std::nullopt}};
  CHECK_THROWS_AS(run(cfg, gw, two_seeds(), Criteria{}, &unlabeled), AbortedRun);
}

TEST_CASE("iteration logs round-trip through JSON") {
  testing::Simulator sim;
  RunConfig cfg = testing::scripted_config(3);
  cfg.sampling = Sampling::elo;
  const auto r = run(cfg, testing::gateway_with(sim.backend()), two_seeds(), poem_criteria());
  for (const auto& l : r.logs) {
    const Json j = l;
    CHECK(j.get<IterationLog>() == l);
  }
  Json bad = r.logs[0];
  bad.erase("new_prompt_id");
  CHECK_THROWS_AS(bad.get<IterationLog>(), FormatError);
}
