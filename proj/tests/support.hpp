#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <unistd.h>

#include "prefpo/domain.hpp"
#include "prefpo/model_gateway.hpp"

namespace prefpo::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(PREFPO_FIXTURES) / name; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << content;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("prefpo-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ModelSpec spec(const std::string& model, const std::string& endpoint = "mock") {
  ModelSpec s;
  s.endpoint = endpoint;
  s.model = model;
  s.max_retries = 2;
  s.backoff = std::chrono::milliseconds(0);
  return s;
}

/// Run config wired to one scripted endpoint named "mock"; each role uses a
/// model named after it.
inline RunConfig scripted_config(int iterations, std::uint64_t seed = 7) {
  RunConfig cfg;
  cfg.iterations = iterations;
  cfg.seed = seed;
  cfg.runs_per_eval = 3;
  cfg.endpoints["mock"] = EndpointConfig{EndpointType::scripted, "unused.json", "", "OPENAI_API_KEY", false};
  for (Role r : kAllRoles) cfg.models[r] = spec(std::string(to_string(r)));
  return cfg;
}

inline Gateway gateway_with(std::shared_ptr<Backend> backend) {
  Gateway g;
  g.add_endpoint("mock", std::move(backend));
  g.set_sleeper([](std::chrono::milliseconds) {});
  return g;
}

inline std::string verdict_json(int preferred, const std::string& feedback = "needs work") {
  return Json{{"preferred", preferred}, {"feedback", feedback}}.dump();
}

inline Criterion crit(std::string kind, Json params, std::string description = "") {
  if (description.empty()) description = kind;
  return Criterion{std::move(kind), std::move(params), std::move(description)};
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

inline std::string between(const std::string& s, const std::string& from, const std::string& to) {
  const auto a = s.find(from);
  if (a == std::string::npos) return {};
  const auto b = s.find(to, a + from.size());
  return s.substr(a + from.size(), b == std::string::npos ? std::string::npos : b - a - from.size());
}

/// Deterministic stand-in for every model role, keyed by the model name
/// ("task", "discriminator", "optimizer", "variant"):
///   task          "Response <hash of the user message>"
///   discriminator prefers the output with the smaller hash
///   optimizer     a fresh "Revised prompt N" each call
///   variant       "Variant of: <seed>"
class Simulator {
 public:
  std::shared_ptr<ScriptedBackend> backend() {
    return std::make_shared<ScriptedBackend>(
        std::vector<ScriptedBackend::Record>{},
        [this](const ModelSpec& spec, const Transcript& msgs) -> std::optional<std::string> {
          const std::string& last = msgs.back().content;
          if (spec.model == "task") return "Response " + std::to_string(fnv1a(last) % 100000);
          if (spec.model == "discriminator") {
            const auto a = between(last, "OUTPUT 1:\n", "\n\nOUTPUT 2:");
            const auto b = between(last, "OUTPUT 2:\n", "\n\nCRITERIA");
            const int preferred = fnv1a(a) <= fnv1a(b) ? 1 : 2;
            return verdict_json(preferred, "Output " + std::to_string(3 - preferred) + " is weaker");
          }
          if (spec.model == "optimizer") {
            const std::string text = "Revised prompt " + std::to_string(++rewrites);
            return Json{{"prompt", text}, {"instruction", text}}.dump();
          }
          if (spec.model == "variant") {
            return Json{{"prompt", "Variant of: " + between(last, "Original prompt:\n", "\n\n")}}.dump();
          }
          return std::nullopt;
        });
  }

  int rewrites = 0;
};

}  // namespace prefpo::testing
