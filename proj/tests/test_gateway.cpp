#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <cstdlib>
#include <thread>

#include "prefpo/error.hpp"
#include "prefpo/model_gateway.hpp"
#include "prefpo/templates.hpp"
#include "support.hpp"

using namespace prefpo;
using testing::crit;

TEST_CASE("templates render in a single pass") {
  CHECK(templates::render("a {{x}} b", {{"x", "{{y}}"}}) == "a {{y}} b");
  CHECK_THROWS_AS(templates::render("{{x}}", {}), TemplateError);
  CHECK_THROWS_AS(templates::render("plain", {{"x", "1"}}), TemplateError);
  CHECK_THROWS_AS(templates::get("missing.txt"), TemplateError);
  CHECK(templates::names().size() == 15);
}

TEST_CASE("embedded templates match their committed checksums") {
  CHECK(templates::integrity_violations().empty());
  CHECK_NOTHROW(templates::verify_integrity());
  CHECK(templates::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("scripted backend consumes records in order") {
  auto be = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Record>{
      {"alpha", std::nullopt, "first", std::nullopt, 1, false},
      {std::nullopt, "judge", "judged", std::nullopt, 2, false},
      {std::nullopt, std::nullopt, "fallback", std::nullopt, 1, true}});
  const Gateway gw = testing::gateway_with(be);
  const Transcript msg{{ChatRole::user, "alpha beta"}};
  CHECK(gw.complete(testing::spec("task"), msg).content == "first");
  CHECK(gw.complete(testing::spec("task"), msg).content == "fallback");
  CHECK(gw.complete(testing::spec("judge"), msg).content == "judged");
  CHECK(gw.complete(testing::spec("judge"), msg).content == "judged");
  CHECK(gw.complete(testing::spec("judge"), msg).content == "fallback");
  CHECK(be->request_count() == 5);
  CHECK(be->requests()[2].model == "judge");
}

TEST_CASE("script documents parse and reject bad records") {
  const auto recs = ScriptedBackend::parse_script(Json::parse(
      R"({"records": [{"match": "x", "reply": "y", "times": 2}, {"error": "transport", "sticky": true}]})"));
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].times == 2);
  CHECK(recs[1].error == ScriptedBackend::Failure::transport);
  CHECK_THROWS_AS(ScriptedBackend::parse_script(Json::parse(R"([{"match": "x"}])")), FormatError);
  CHECK_THROWS_AS(ScriptedBackend::parse_script(Json::parse(R"([{"error": "boom"}])")), FormatError);
}

TEST_CASE("gateway retries transport errors with doubling backoff") {
  auto be = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Record>{
      {std::nullopt, std::nullopt, std::nullopt, ScriptedBackend::Failure::transport, 2, false},
      {std::nullopt, std::nullopt, "ok", std::nullopt, 1, false}});
  Gateway gw;
  gw.add_endpoint("mock", be);
  std::vector<long> sleeps;
  gw.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  ModelSpec s = testing::spec("task");
  s.backoff = std::chrono::milliseconds(100);
  CHECK(gw.complete(s, {{ChatRole::user, "hi"}}).content == "ok");
  CHECK(sleeps == std::vector<long>{100, 200});

  be->push({std::nullopt, std::nullopt, std::nullopt, ScriptedBackend::Failure::transport, 3, false});
  CHECK_THROWS_AS(gw.complete(s, {{ChatRole::user, "hi"}}), TransportError);
}

TEST_CASE("auth errors and empty replies are not retried") {
  auto be = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Record>{
      {"auth", std::nullopt, std::nullopt, ScriptedBackend::Failure::auth, 1, false},
      {"empty", std::nullopt, "  \n", std::nullopt, 1, false}});
  const Gateway gw = testing::gateway_with(be);
  CHECK_THROWS_AS(gw.complete(testing::spec("t"), {{ChatRole::user, "auth"}}), AuthError);
  CHECK_THROWS_AS(gw.complete(testing::spec("t"), {{ChatRole::user, "empty"}}), MalformedResponse);
  CHECK(be->request_count() == 2);
  CHECK_THROWS_AS(gw.complete(testing::spec("t"), {}), PreconditionError);
  CHECK_THROWS_AS(gw.complete(testing::spec("t", "nowhere"), {{ChatRole::user, "x"}}), PreconditionError);
}

TEST_CASE("verdict parsing takes the last JSON object") {
  const auto v = parse_verdict("I think {\"preferred\": 1} hmm.\n```json\n{\"preferred\": \"2\", \"feedback\": "
                               "\"Output 1 misses the {end} phrase\"}\n```");
  CHECK(v.preferred == 2);
  CHECK(v.feedback == "Output 1 misses the {end} phrase");
  CHECK_THROWS_AS(parse_verdict("no json"), ParseError);
  CHECK_THROWS_AS(parse_verdict(R"({"preferred": 3, "feedback": "x"})"), ParseError);
  CHECK_THROWS_AS(parse_verdict(R"({"preferred": 1, "feedback": " "})"), ParseError);
  CHECK(parse_rewrite(R"({"prompt": "new"})", "prompt") == "new");
  CHECK_THROWS_AS(parse_rewrite(R"({"instruction": "new"})", "prompt"), ParseError);
}

TEST_CASE("criteria discriminator shows outputs and criteria but not prompts") {
  const Criteria c{{crit("word_min", {{"min_words", 5}}, "At least 5 words")}, std::string("Be friendly")};
  const auto t = render_discriminator_criteria("OUT-A", "OUT-B", c);
  REQUIRE(t.size() == 2);
  CHECK(t[0].role == ChatRole::system);
  CHECK(t[1].content.find("OUTPUT 1:\nOUT-A") != std::string::npos);
  CHECK(t[1].content.find("1. At least 5 words\n2. Be friendly\n") != std::string::npos);
  CHECK_THROWS_AS(render_discriminator_criteria("a", "b", Criteria{}), EmptyCriteria);
}

TEST_CASE("bbh discriminator requires aligned samples") {
  const TaskSample s1{"Q1?", "A", std::nullopt}, s2{"Q2?", "B", std::nullopt};
  std::vector<SampleOutput> a{{s1, {"p1", 0, "resp a1", 0}}, {s2, {"p1", 1, "resp a2", 0}}};
  std::vector<SampleOutput> b{{s1, {"p2", 0, "resp b1", 0}}, {s2, {"p2", 1, "resp b2", 0}}};
  const auto t = render_discriminator_bbh(a, b, true);
  CHECK(t[1].content.find("resp b2") != std::string::npos);
  CHECK(t[1].content.find("Q2?") != std::string::npos);
  b.pop_back();
  CHECK_THROWS_AS(render_discriminator_bbh(a, b, true), MismatchedSamples);
}

TEST_CASE("optimizer transcript extends the discriminator history") {
  const Transcript history{{ChatRole::system, "sys"}, {ChatRole::user, "compare"}, {ChatRole::assistant, "{...}"}};
  const Prompt loser{"p2", "Write a poem.", Origin::seed, std::nullopt, 0};
  const auto t = render_optimizer(history, loser, "too short", OptimizerMode::criteria);
  REQUIRE(t.size() == 4);
  CHECK(std::equal(history.begin(), history.end(), t.begin()));
  CHECK(t[3].content.find("CURRENT PROMPT:\nWrite a poem.") != std::string::npos);
  const auto bbh = render_optimizer(history, loser, "fb", OptimizerMode::bbh, 2);
  CHECK(bbh[3].content.find('2') != std::string::npos);
  CHECK_THROWS_AS(render_optimizer(history, loser, "", OptimizerMode::criteria), PreconditionError);
}

TEST_CASE("variant transcript lists requirements") {
  const Prompt seed{"p1", "Write a poem.", Origin::seed, std::nullopt, 0};
  const Criteria c{{crit("no_commas", Json::object(), "No commas")}, std::nullopt};
  const auto t = render_variant(seed, c);
  CHECK(t[1].content.find("  1. No commas\n") != std::string::npos);
  CHECK(t[1].content.find("Write a poem.") != std::string::npos);
}

TEST_CASE("http backend speaks the chat completions protocol") {
  httplib::Server server;
  Json last_body;
  std::string last_auth;
  int status = 200;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    last_body = Json::parse(req.body);
    last_auth = req.get_header_value("Authorization");
    res.status = status;
    res.set_content(status == 200 ? R"({"choices":[{"message":{"role":"assistant","content":"hello"}}]})"
                                  : R"({"error":"x"})",
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("PREFPO_TEST_KEY", "sk-test", 1);
  HttpBackend be(EndpointConfig{EndpointType::openai, "", "http://127.0.0.1:" + std::to_string(port) + "/v1/",
                                "PREFPO_TEST_KEY", false});
  ModelSpec s = testing::spec("gpt-test", "live");
  s.reasoning_effort = ReasoningEffort::low;
  s.timeout = std::chrono::milliseconds(5000);
  const Transcript msgs{{ChatRole::system, "be brief"}, {ChatRole::user, "hi"}};

  CHECK(be.send(s, msgs) == "hello");
  CHECK(last_auth == "Bearer sk-test");
  CHECK(last_body.at("model") == "gpt-test");
  CHECK(last_body.at("messages").at(0).at("role") == "system");
  CHECK_FALSE(last_body.contains("reasoning_effort"));

  HttpBackend reasoning(EndpointConfig{EndpointType::openai, "", "http://127.0.0.1:" + std::to_string(port) + "/v1",
                                       "PREFPO_TEST_KEY", true});
  CHECK(reasoning.request_body(s, msgs).at("reasoning_effort") == "low");

  status = 401;
  CHECK_THROWS_AS(be.send(s, msgs), AuthError);
  status = 429;
  CHECK_THROWS_AS(be.send(s, msgs), TransportError);
  status = 503;
  CHECK_THROWS_AS(be.send(s, msgs), TransportError);
  status = 400;
  CHECK_THROWS_AS(be.send(s, msgs), RequestRejected);

  server.stop();
  t.join();
}
