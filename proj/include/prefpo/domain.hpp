#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace prefpo {

using Json = nlohmann::ordered_json;

enum class Origin { seed, variant, optimized };
enum class Preference { a, b };
enum class Mode { labeled_qa, criteria_only };
enum class Sampling { uniform, elo };
enum class Role { task, discriminator, optimizer, variant, judge };
enum class ReasoningEffort { low, medium, high };
enum class AnswerKind { multiple_choice, binary, exact_match };

std::string_view to_string(Origin v);
std::string_view to_string(Preference v);
std::string_view to_string(Mode v);
std::string_view to_string(Sampling v);
std::string_view to_string(Role v);
std::string_view to_string(ReasoningEffort v);
std::string_view to_string(AnswerKind v);

Origin parse_origin(std::string_view s);
Preference parse_preference(std::string_view s);
Mode parse_mode(std::string_view s);
Sampling parse_sampling(std::string_view s);
Role parse_role(std::string_view s);
ReasoningEffort parse_reasoning_effort(std::string_view s);
AnswerKind parse_answer_kind(std::string_view s);

inline constexpr Role kAllRoles[] = {Role::task, Role::discriminator, Role::optimizer,
                                     Role::variant, Role::judge};

/// A candidate instruction plus its lineage.
struct Prompt {
  std::string id;
  std::string text;
  Origin origin = Origin::seed;
  std::optional<std::string> parent_id;
  int created_at_iteration = 0;

  bool operator==(const Prompt&) const = default;
};

std::vector<std::string> prompt_violations(const Prompt& p);

/// Ordered, append-only set of prompts with optional Elo ratings.
///
/// Ids are assigned by the pool ("p1", "p2", ...) and never derived from the
/// text, so duplicate texts stay distinguishable in lineage audits.
class PromptPool {
 public:
  PromptPool() = default;

  const std::vector<Prompt>& prompts() const noexcept { return prompts_; }
  std::size_t size() const noexcept { return prompts_.size(); }
  bool empty() const noexcept { return prompts_.empty(); }
  const Prompt& operator[](std::size_t i) const { return prompts_.at(i); }

  /// Appends a prompt whose id is already set. Throws PreconditionError on a
  /// duplicate id or an invalid prompt.
  const Prompt& add(Prompt p);

  /// Appends a prompt, assigning the next free sequential id.
  const Prompt& add_new(std::string text, Origin origin, std::optional<std::string> parent_id,
                        int created_at_iteration);

  std::string next_id() const;
  const Prompt* find(std::string_view id) const noexcept;
  std::optional<std::size_t> index_of(std::string_view id) const noexcept;
  bool contains_text(std::string_view text) const noexcept;

  const std::optional<std::map<std::string, double>>& ratings() const noexcept { return ratings_; }
  void set_ratings(std::optional<std::map<std::string, double>> ratings) {
    ratings_ = std::move(ratings);
  }

  bool operator==(const PromptPool&) const = default;

 private:
  std::vector<Prompt> prompts_;
  std::optional<std::map<std::string, double>> ratings_;
};

std::vector<std::string> pool_violations(const PromptPool& pool);

/// One machine-checkable constraint. `params` follow the schema of `kind`
/// (see checkers.hpp); `description` is the text shown to LLM roles.
struct Criterion {
  std::string kind;
  Json params = Json::object();
  std::string description;

  bool operator==(const Criterion&) const = default;
};

struct Criteria {
  std::vector<Criterion> items;
  std::optional<std::string> freeform;

  bool empty() const noexcept { return items.empty() && (!freeform || freeform->empty()); }
  bool operator==(const Criteria&) const = default;
};

struct TaskSample {
  std::string input;
  std::optional<std::string> expected;
  std::optional<AnswerKind> task_kind;

  bool operator==(const TaskSample&) const = default;
};

struct GeneratedOutput {
  std::string prompt_id;
  std::optional<std::size_t> sample_index;
  std::string text;
  int run_index = 0;

  bool operator==(const GeneratedOutput&) const = default;
};

struct ComparisonRecord {
  int iteration = 0;
  std::string prompt_a_id;
  std::string prompt_b_id;
  Preference preferred = Preference::a;
  std::string feedback;
  std::string raw_judge_payload;

  const std::string& preferred_id() const noexcept {
    return preferred == Preference::a ? prompt_a_id : prompt_b_id;
  }
  const std::string& non_preferred_id() const noexcept {
    return preferred == Preference::a ? prompt_b_id : prompt_a_id;
  }
  bool operator==(const ComparisonRecord&) const = default;
};

std::vector<std::string> comparison_violations(const ComparisonRecord& r);

struct ModelSpec {
  std::string endpoint;
  std::string model;
  double temperature = 0.0;
  std::optional<ReasoningEffort> reasoning_effort;
  int max_retries = 3;
  std::chrono::milliseconds timeout{120000};
  /// First backoff delay; doubles on each retry.
  std::chrono::milliseconds backoff{1000};

  bool operator==(const ModelSpec&) const = default;
};

enum class EndpointType { scripted, openai };
std::string_view to_string(EndpointType v);

struct EndpointConfig {
  EndpointType type = EndpointType::scripted;
  /// Scripted endpoints: path of the script file.
  std::string script;
  /// OpenAI-compatible endpoints.
  std::string base_url;
  std::string api_key_env = "OPENAI_API_KEY";
  bool supports_reasoning_effort = false;

  bool operator==(const EndpointConfig&) const = default;
};

struct RunConfig {
  int iterations = 15;
  Mode mode = Mode::criteria_only;
  Sampling sampling = Sampling::uniform;
  bool minimal_change = false;
  int runs_per_eval = 20;
  std::map<std::string, EndpointConfig> endpoints;
  std::map<Role, ModelSpec> models;
  std::optional<std::uint64_t> seed;
  /// Upper bound on concurrent task-model calls inside one evaluation.
  int max_concurrency = 1;

  const ModelSpec& model(Role role) const;
  bool operator==(const RunConfig&) const = default;
};

/// Empty result means the config satisfies every invariant.
std::vector<std::string> validate_config(const RunConfig& cfg);

// Canonical serialization (snake_case field names). Decoding validates the
// type invariants and throws FormatError on violation.
void to_json(Json& j, const Prompt& v);
void from_json(const Json& j, Prompt& v);
void to_json(Json& j, const PromptPool& v);
void from_json(const Json& j, PromptPool& v);
void to_json(Json& j, const Criterion& v);
void from_json(const Json& j, Criterion& v);
void to_json(Json& j, const Criteria& v);
void from_json(const Json& j, Criteria& v);
void to_json(Json& j, const TaskSample& v);
void from_json(const Json& j, TaskSample& v);
void to_json(Json& j, const GeneratedOutput& v);
void from_json(const Json& j, GeneratedOutput& v);
void to_json(Json& j, const ComparisonRecord& v);
void from_json(const Json& j, ComparisonRecord& v);
void to_json(Json& j, const ModelSpec& v);
void from_json(const Json& j, ModelSpec& v);
void to_json(Json& j, const EndpointConfig& v);
void from_json(const Json& j, EndpointConfig& v);
void to_json(Json& j, const RunConfig& v);
void from_json(const Json& j, RunConfig& v);

}  // namespace prefpo
