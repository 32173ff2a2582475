#include "prefpo/domain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <utility>

#include "prefpo/error.hpp"

namespace prefpo {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table,
             std::string_view what) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  throw FormatError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view name_of(E v, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "?";
}

constexpr std::array<std::pair<Origin, std::string_view>, 3> kOrigins{
    {{Origin::seed, "seed"}, {Origin::variant, "variant"}, {Origin::optimized, "optimized"}}};
constexpr std::array<std::pair<Preference, std::string_view>, 2> kPreferences{
    {{Preference::a, "a"}, {Preference::b, "b"}}};
constexpr std::array<std::pair<Mode, std::string_view>, 2> kModes{
    {{Mode::labeled_qa, "labeled_qa"}, {Mode::criteria_only, "criteria_only"}}};
constexpr std::array<std::pair<Sampling, std::string_view>, 2> kSamplings{
    {{Sampling::uniform, "uniform"}, {Sampling::elo, "elo"}}};
constexpr std::array<std::pair<Role, std::string_view>, 5> kRoles{{{Role::task, "task"},
                                                                   {Role::discriminator, "discriminator"},
                                                                   {Role::optimizer, "optimizer"},
                                                                   {Role::variant, "variant"},
                                                                   {Role::judge, "judge"}}};
constexpr std::array<std::pair<ReasoningEffort, std::string_view>, 3> kEfforts{
    {{ReasoningEffort::low, "low"}, {ReasoningEffort::medium, "medium"}, {ReasoningEffort::high, "high"}}};
constexpr std::array<std::pair<AnswerKind, std::string_view>, 3> kAnswerKinds{
    {{AnswerKind::multiple_choice, "multiple_choice"},
     {AnswerKind::binary, "binary"},
     {AnswerKind::exact_match, "exact_match"}}};
constexpr std::array<std::pair<EndpointType, std::string_view>, 2> kEndpointTypes{
    {{EndpointType::scripted, "scripted"}, {EndpointType::openai, "openai"}}};

template <typename T>
T required(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T field_or(const Json& j, const char* key, T fallback) {
  return optional_field<T>(j, key).value_or(std::move(fallback));
}

void throw_if(const std::vector<std::string>& violations, std::string_view what) {
  if (violations.empty()) return;
  std::string msg = "invalid " + std::string(what) + ":";
  for (const auto& v : violations) msg += " " + v + ";";
  throw FormatError(msg);
}

}  // namespace

std::string_view to_string(Origin v) { return name_of(v, kOrigins); }
std::string_view to_string(Preference v) { return name_of(v, kPreferences); }
std::string_view to_string(Mode v) { return name_of(v, kModes); }
std::string_view to_string(Sampling v) { return name_of(v, kSamplings); }
std::string_view to_string(Role v) { return name_of(v, kRoles); }
std::string_view to_string(ReasoningEffort v) { return name_of(v, kEfforts); }
std::string_view to_string(AnswerKind v) { return name_of(v, kAnswerKinds); }
std::string_view to_string(EndpointType v) { return name_of(v, kEndpointTypes); }

Origin parse_origin(std::string_view s) { return parse_enum(s, kOrigins, "origin"); }
Preference parse_preference(std::string_view s) { return parse_enum(s, kPreferences, "preference"); }
Mode parse_mode(std::string_view s) { return parse_enum(s, kModes, "mode"); }
Sampling parse_sampling(std::string_view s) { return parse_enum(s, kSamplings, "sampling"); }
Role parse_role(std::string_view s) { return parse_enum(s, kRoles, "role"); }
ReasoningEffort parse_reasoning_effort(std::string_view s) {
  return parse_enum(s, kEfforts, "reasoning effort");
}
AnswerKind parse_answer_kind(std::string_view s) { return parse_enum(s, kAnswerKinds, "task kind"); }

// ---------------------------------------------------------------------------
// Prompt / PromptPool

std::vector<std::string> prompt_violations(const Prompt& p) {
  std::vector<std::string> out;
  if (p.id.empty()) out.emplace_back("id must be non-empty");
  if (p.text.empty()) out.emplace_back("text must be non-empty");
  if ((p.origin == Origin::seed) != !p.parent_id.has_value()) {
    out.emplace_back("parent_id must be absent exactly for seed prompts");
  }
  if (p.created_at_iteration < 0) out.emplace_back("created_at_iteration must be >= 0");
  if (p.origin == Origin::optimized && p.created_at_iteration < 1) {
    out.emplace_back("optimized prompts must have created_at_iteration >= 1");
  }
  return out;
}

const Prompt& PromptPool::add(Prompt p) {
  if (auto v = prompt_violations(p); !v.empty()) throw PreconditionError("invalid prompt: " + v.front());
  if (find(p.id) != nullptr) throw PreconditionError("duplicate prompt id '" + p.id + "'");
  prompts_.push_back(std::move(p));
  return prompts_.back();
}

const Prompt& PromptPool::add_new(std::string text, Origin origin, std::optional<std::string> parent_id,
                                  int created_at_iteration) {
  return add(Prompt{next_id(), std::move(text), origin, std::move(parent_id), created_at_iteration});
}

std::string PromptPool::next_id() const {
  for (std::size_t n = prompts_.size() + 1;; ++n) {
    std::string id = "p" + std::to_string(n);
    if (find(id) == nullptr) return id;
  }
}

const Prompt* PromptPool::find(std::string_view id) const noexcept {
  for (const auto& p : prompts_) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

std::optional<std::size_t> PromptPool::index_of(std::string_view id) const noexcept {
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    if (prompts_[i].id == id) return i;
  }
  return std::nullopt;
}

bool PromptPool::contains_text(std::string_view text) const noexcept {
  return std::any_of(prompts_.begin(), prompts_.end(), [&](const Prompt& p) { return p.text == text; });
}

std::vector<std::string> pool_violations(const PromptPool& pool) {
  std::vector<std::string> out;
  std::set<std::string> ids;
  for (const auto& p : pool.prompts()) {
    for (auto& v : prompt_violations(p)) out.push_back(p.id + ": " + v);
    if (!ids.insert(p.id).second) out.push_back("duplicate prompt id '" + p.id + "'");
  }
  if (const auto& r = pool.ratings()) {
    if (r->size() != pool.size()) out.emplace_back("ratings must cover every prompt exactly once");
    for (const auto& [id, rating] : *r) {
      if (!ids.count(id)) out.push_back("rating for unknown prompt '" + id + "'");
      if (!std::isfinite(rating)) out.push_back("rating for '" + id + "' is not finite");
    }
  }
  return out;
}

std::vector<std::string> comparison_violations(const ComparisonRecord& r) {
  std::vector<std::string> out;
  if (r.prompt_a_id == r.prompt_b_id) out.emplace_back("compared prompts must differ");
  if (r.feedback.empty()) out.emplace_back("feedback must be non-empty");
  return out;
}

// ---------------------------------------------------------------------------
// RunConfig

const ModelSpec& RunConfig::model(Role role) const {
  auto it = models.find(role);
  if (it == models.end()) {
    throw PreconditionError("no model configured for role '" + std::string(to_string(role)) + "'");
  }
  return it->second;
}

std::vector<std::string> validate_config(const RunConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.iterations < 1) out.emplace_back("iterations must be ≥ 1");
  if (cfg.runs_per_eval < 1) out.emplace_back("runs_per_eval must be ≥ 1");
  if (!cfg.seed) out.emplace_back("seed required for reproducible sampling");
  if (cfg.max_concurrency < 1) out.emplace_back("max_concurrency must be ≥ 1");
  if (cfg.minimal_change && cfg.mode == Mode::labeled_qa) {
    out.emplace_back("minimal_change applies only to criteria_only mode");
  }
  for (Role role : kAllRoles) {
    const auto name = std::string(to_string(role));
    auto it = cfg.models.find(role);
    if (it == cfg.models.end()) {
      out.push_back("no model configured for role '" + name + "'");
      continue;
    }
    const ModelSpec& spec = it->second;
    if (!cfg.endpoints.count(spec.endpoint)) {
      out.push_back("role '" + name + "' references unknown endpoint '" + spec.endpoint + "'");
    }
    if (spec.model.empty()) out.push_back("role '" + name + "' has an empty model name");
    if (!(spec.temperature >= 0.0)) out.push_back("role '" + name + "' temperature must be ≥ 0");
    if (spec.max_retries < 0) out.push_back("role '" + name + "' max_retries must be ≥ 0");
  }
  for (const auto& [name, ep] : cfg.endpoints) {
    if (ep.type == EndpointType::scripted && ep.script.empty()) {
      out.push_back("scripted endpoint '" + name + "' needs a script path");
    }
    if (ep.type == EndpointType::openai && ep.base_url.empty()) {
      out.push_back("endpoint '" + name + "' needs a base_url");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(Json& j, const Prompt& v) {
  j = Json{{"id", v.id}, {"text", v.text}, {"origin", to_string(v.origin)}};
  j["parent_id"] = v.parent_id ? Json(*v.parent_id) : Json(nullptr);
  j["created_at_iteration"] = v.created_at_iteration;
}

void from_json(const Json& j, Prompt& v) {
  v.id = required<std::string>(j, "id");
  v.text = required<std::string>(j, "text");
  v.origin = parse_origin(required<std::string>(j, "origin"));
  v.parent_id = optional_field<std::string>(j, "parent_id");
  v.created_at_iteration = field_or<int>(j, "created_at_iteration", 0);
  throw_if(prompt_violations(v), "prompt");
}

void to_json(Json& j, const PromptPool& v) {
  j = Json::object();
  j["prompts"] = v.prompts();
  if (v.ratings()) {
    Json r = Json::object();
    // Insertion order, not map order, so the file reads like the pool.
    for (const auto& p : v.prompts()) {
      if (auto it = v.ratings()->find(p.id); it != v.ratings()->end()) r[p.id] = it->second;
    }
    j["ratings"] = std::move(r);
  } else {
    j["ratings"] = nullptr;
  }
}

void from_json(const Json& j, PromptPool& v) {
  v = PromptPool{};
  if (!j.is_object() || !j.contains("prompts") || !j.at("prompts").is_array()) {
    throw FormatError("pool document needs a 'prompts' array");
  }
  for (const auto& pj : j.at("prompts")) {
    Prompt p = pj.get<Prompt>();
    if (v.find(p.id)) throw FormatError("duplicate prompt id '" + p.id + "'");
    v.add(std::move(p));
  }
  if (j.contains("ratings") && !j.at("ratings").is_null()) {
    std::map<std::string, double> ratings;
    for (const auto& [id, value] : j.at("ratings").items()) ratings[id] = value.get<double>();
    v.set_ratings(std::move(ratings));
  }
  throw_if(pool_violations(v), "pool");
}

void to_json(Json& j, const Criterion& v) {
  j = Json{{"kind", v.kind}, {"params", v.params}, {"description", v.description}};
}

void from_json(const Json& j, Criterion& v) {
  v.kind = required<std::string>(j, "kind");
  v.params = j.contains("params") && !j.at("params").is_null() ? j.at("params") : Json::object();
  v.description = required<std::string>(j, "description");
  if (v.kind.empty()) throw FormatError("criterion kind must be non-empty");
  if (v.description.empty()) throw FormatError("criterion description must be non-empty");
  if (!v.params.is_object()) throw FormatError("criterion params must be an object");
}

void to_json(Json& j, const Criteria& v) {
  j = Json{{"items", v.items}};
  j["freeform"] = v.freeform ? Json(*v.freeform) : Json(nullptr);
}

void from_json(const Json& j, Criteria& v) {
  v.items = field_or<std::vector<Criterion>>(j, "items", {});
  v.freeform = optional_field<std::string>(j, "freeform");
}

void to_json(Json& j, const TaskSample& v) {
  j = Json{{"input", v.input}};
  j["expected"] = v.expected ? Json(*v.expected) : Json(nullptr);
  j["task_kind"] = v.task_kind ? Json(to_string(*v.task_kind)) : Json(nullptr);
}

void from_json(const Json& j, TaskSample& v) {
  v.input = required<std::string>(j, "input");
  if (v.input.empty()) throw FormatError("sample input must be non-empty");
  v.expected = optional_field<std::string>(j, "expected");
  auto kind = optional_field<std::string>(j, "task_kind");
  v.task_kind = kind ? std::optional(parse_answer_kind(*kind)) : std::nullopt;
}

void to_json(Json& j, const GeneratedOutput& v) {
  j = Json{{"prompt_id", v.prompt_id}};
  j["sample_index"] = v.sample_index ? Json(*v.sample_index) : Json(nullptr);
  j["text"] = v.text;
  j["run_index"] = v.run_index;
}

void from_json(const Json& j, GeneratedOutput& v) {
  v.prompt_id = required<std::string>(j, "prompt_id");
  v.sample_index = optional_field<std::size_t>(j, "sample_index");
  v.text = required<std::string>(j, "text");
  v.run_index = field_or<int>(j, "run_index", 0);
  if (v.run_index < 0) throw FormatError("run_index must be >= 0");
}

void to_json(Json& j, const ComparisonRecord& v) {
  j = Json{{"iteration", v.iteration},
           {"prompt_a_id", v.prompt_a_id},
           {"prompt_b_id", v.prompt_b_id},
           {"preferred", to_string(v.preferred)},
           {"feedback", v.feedback},
           {"raw_judge_payload", v.raw_judge_payload}};
}

void from_json(const Json& j, ComparisonRecord& v) {
  v.iteration = required<int>(j, "iteration");
  v.prompt_a_id = required<std::string>(j, "prompt_a_id");
  v.prompt_b_id = required<std::string>(j, "prompt_b_id");
  v.preferred = parse_preference(required<std::string>(j, "preferred"));
  v.feedback = required<std::string>(j, "feedback");
  v.raw_judge_payload = field_or<std::string>(j, "raw_judge_payload", "");
  throw_if(comparison_violations(v), "comparison record");
}

void to_json(Json& j, const ModelSpec& v) {
  j = Json{{"endpoint", v.endpoint}, {"model", v.model}, {"temperature", v.temperature}};
  j["reasoning_effort"] = v.reasoning_effort ? Json(to_string(*v.reasoning_effort)) : Json(nullptr);
  j["max_retries"] = v.max_retries;
  j["timeout_ms"] = v.timeout.count();
  j["backoff_ms"] = v.backoff.count();
}

void from_json(const Json& j, ModelSpec& v) {
  v.endpoint = required<std::string>(j, "endpoint");
  v.model = required<std::string>(j, "model");
  v.temperature = field_or<double>(j, "temperature", 0.0);
  auto effort = optional_field<std::string>(j, "reasoning_effort");
  v.reasoning_effort = effort ? std::optional(parse_reasoning_effort(*effort)) : std::nullopt;
  v.max_retries = field_or<int>(j, "max_retries", 3);
  v.timeout = std::chrono::milliseconds(field_or<std::int64_t>(j, "timeout_ms", 120000));
  v.backoff = std::chrono::milliseconds(field_or<std::int64_t>(j, "backoff_ms", 1000));
}

void to_json(Json& j, const EndpointConfig& v) {
  j = Json{{"type", to_string(v.type)}};
  if (v.type == EndpointType::scripted) {
    j["script"] = v.script;
  } else {
    j["base_url"] = v.base_url;
    j["api_key_env"] = v.api_key_env;
    j["supports_reasoning_effort"] = v.supports_reasoning_effort;
  }
}

void from_json(const Json& j, EndpointConfig& v) {
  v.type = parse_enum(required<std::string>(j, "type"), kEndpointTypes, "endpoint type");
  v.script = field_or<std::string>(j, "script", "");
  v.base_url = field_or<std::string>(j, "base_url", "");
  v.api_key_env = field_or<std::string>(j, "api_key_env", "OPENAI_API_KEY");
  v.supports_reasoning_effort = field_or<bool>(j, "supports_reasoning_effort", false);
}

void to_json(Json& j, const RunConfig& v) {
  j = Json{{"iterations", v.iterations},
           {"mode", to_string(v.mode)},
           {"sampling", to_string(v.sampling)},
           {"minimal_change", v.minimal_change},
           {"runs_per_eval", v.runs_per_eval}};
  j["seed"] = v.seed ? Json(*v.seed) : Json(nullptr);
  j["max_concurrency"] = v.max_concurrency;
  Json eps = Json::object();
  for (const auto& [name, ep] : v.endpoints) eps[name] = ep;
  j["endpoints"] = std::move(eps);
  Json models = Json::object();
  for (Role role : kAllRoles) {
    if (auto it = v.models.find(role); it != v.models.end()) models[std::string(to_string(role))] = it->second;
  }
  j["models"] = std::move(models);
}

void from_json(const Json& j, RunConfig& v) {
  if (!j.is_object()) throw FormatError("run config must be an object");
  v = RunConfig{};
  v.iterations = field_or<int>(j, "iterations", 15);
  v.mode = parse_mode(field_or<std::string>(j, "mode", "criteria_only"));
  v.sampling = parse_sampling(field_or<std::string>(j, "sampling", "uniform"));
  v.minimal_change = field_or<bool>(j, "minimal_change", false);
  v.runs_per_eval = field_or<int>(j, "runs_per_eval", 20);
  v.seed = optional_field<std::uint64_t>(j, "seed");
  v.max_concurrency = field_or<int>(j, "max_concurrency", 1);
  if (j.contains("endpoints")) {
    for (const auto& [name, ep] : j.at("endpoints").items()) v.endpoints[name] = ep.get<EndpointConfig>();
  }
  if (j.contains("models")) {
    for (const auto& [name, spec] : j.at("models").items()) v.models[parse_role(name)] = spec.get<ModelSpec>();
  }
}

}  // namespace prefpo
