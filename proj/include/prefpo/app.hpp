#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prefpo/domain.hpp"
#include "prefpo/task_eval.hpp"

namespace prefpo::app {

namespace fs = std::filesystem;

/// Exit codes shared by every command.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 1;
inline constexpr int kAborted = 2;

struct TaskConfig {
  std::vector<std::string> prompts;  // seed prompt texts
  std::optional<fs::path> pool;       // alternative to `prompts`
  Criteria criteria;
  std::optional<fs::path> train;
  std::optional<fs::path> validation;
  AnswerKind task_kind = AnswerKind::exact_match;
  AnswerAliases answer_aliases = default_answer_aliases();
};

struct AppConfig {
  RunConfig run;
  TaskConfig task;
  fs::path output_dir = "prefpo-out";
  /// Directory of the config file; relative paths resolve against it.
  fs::path base_dir = ".";
  Json source;  // parsed document, kept for the manifest
};

/// Throws FormatError on unreadable files or malformed documents.
AppConfig load_config(const fs::path& path);
AppConfig parse_config(const Json& doc, const fs::path& base_dir);

/// Pool document, or a JSON array of seed prompt strings.
PromptPool load_pool(const fs::path& path);
void save_pool(const fs::path& path, const PromptPool& pool);

/// Criteria document: {"items": [...], "freeform": ...} or an array of criteria.
Criteria load_criteria(const fs::path& path);

/// UTC timestamp; SOURCE_DATE_EPOCH overrides the clock when set.
std::string timestamp_now();

struct Io {
  std::ostream& out;
  std::ostream& err;
};

struct OptimizeOptions {
  fs::path config;
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<int> k;
};
int cmd_optimize(const OptimizeOptions& opts, Io io);

struct EvaluateOptions {
  fs::path config;
  std::optional<fs::path> pool;
  fs::path dataset;
  std::optional<fs::path> out;
  std::optional<int> k;
  std::optional<Mode> mode;
  std::optional<std::uint64_t> seed;
  int resamples = 10000;
};
int cmd_evaluate(const EvaluateOptions& opts, Io io);

struct HygieneOptions {
  fs::path pool;
  fs::path seed_prompt;
  bool with_judge = false;
  std::optional<fs::path> config;
  std::optional<fs::path> criteria;
  std::optional<fs::path> out;
};
int cmd_hygiene(const HygieneOptions& opts, Io io);

struct HackAuditOptions {
  fs::path config;
  fs::path pool;
  fs::path criteria;
  std::optional<fs::path> out;
};
int cmd_hack_audit(const HackAuditOptions& opts, Io io);

struct CurateOptions {
  fs::path config;
  fs::path dataset;
  fs::path out;
  std::optional<int> k;
};
int cmd_curate(const CurateOptions& opts, Io io);

struct ConvertOptions {
  fs::path input;
  fs::path out;
};
int cmd_convert_ifeval(const ConvertOptions& opts, Io io);

}  // namespace prefpo::app
