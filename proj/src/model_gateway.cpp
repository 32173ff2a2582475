#include "prefpo/model_gateway.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <thread>

#include "prefpo/error.hpp"
#include "prefpo/templates.hpp"
#include "prefpo/text.hpp"

namespace prefpo {

std::string_view to_string(ChatRole r) {
  switch (r) {
    case ChatRole::system:
      return "system";
    case ChatRole::user:
      return "user";
    case ChatRole::assistant:
      break;
  }
  return "assistant";
}

void to_json(Json& j, const ChatMessage& v) { j = Json{{"role", to_string(v.role)}, {"content", v.content}}; }

void from_json(const Json& j, ChatMessage& v) {
  const auto role = j.at("role").get<std::string>();
  if (role == "system") {
    v.role = ChatRole::system;
  } else if (role == "user") {
    v.role = ChatRole::user;
  } else if (role == "assistant") {
    v.role = ChatRole::assistant;
  } else {
    throw FormatError("unknown chat role '" + role + "'");
  }
  v.content = j.at("content").get<std::string>();
}

void to_json(Json& j, const DiscriminatorVerdict& v) {
  j = Json{{"preferred", v.preferred}, {"feedback", v.feedback}};
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::vector<Record> records, Responder responder)
    : records_(std::move(records)), used_(records_.size(), 0), responder_(std::move(responder)) {}

std::vector<ScriptedBackend::Record> ScriptedBackend::parse_script(const Json& doc) {
  const Json& arr = doc.is_object() && doc.contains("records") ? doc.at("records") : doc;
  if (!arr.is_array()) throw FormatError("script must be an array of records");
  std::vector<Record> out;
  for (const auto& rj : arr) {
    if (!rj.is_object()) throw FormatError("script record must be an object");
    Record r;
    if (rj.contains("match")) r.match = rj.at("match").get<std::string>();
    if (rj.contains("model")) r.model = rj.at("model").get<std::string>();
    if (rj.contains("reply")) r.reply = rj.at("reply").get<std::string>();
    if (rj.contains("error")) {
      const auto e = rj.at("error").get<std::string>();
      if (e == "transport") {
        r.error = Failure::transport;
      } else if (e == "auth") {
        r.error = Failure::auth;
      } else if (e == "malformed") {
        r.error = Failure::malformed;
      } else {
        throw FormatError("unknown script error '" + e + "'");
      }
    }
    if (r.reply.has_value() == r.error.has_value()) {
      throw FormatError("script record needs exactly one of 'reply' and 'error'");
    }
    r.times = rj.value("times", 1);
    r.sticky = rj.value("sticky", false);
    if (r.times < 1) throw FormatError("script record 'times' must be >= 1");
    out.push_back(std::move(r));
  }
  return out;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open script " + path.string());
  try {
    return std::make_shared<ScriptedBackend>(parse_script(Json::parse(in)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("script " + path.string() + ": " + e.what());
  }
}

std::string ScriptedBackend::send(const ModelSpec& spec, const Transcript& messages) {
  std::unique_lock lock(mu_);
  log_.push_back({spec.model, messages});
  const std::string& last = messages.back().content;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const Record& r = records_[i];
    if (!r.sticky && used_[i] >= r.times) continue;
    if (r.model && *r.model != spec.model) continue;
    if (r.match && last.find(*r.match) == std::string::npos) continue;
    ++used_[i];
    if (r.error) {
      switch (*r.error) {
        case Failure::transport:
          throw TransportError("scripted transport failure");
        case Failure::auth:
          throw AuthError("scripted auth failure");
        case Failure::malformed:
          throw MalformedResponse("scripted malformed response");
      }
    }
    return *r.reply;
  }
  if (responder_) {
    auto responder = responder_;
    lock.unlock();
    if (auto reply = responder(spec, messages)) return *reply;
  }
  throw ScriptExhausted("no script record for request: " + last.substr(0, 80));
}

void ScriptedBackend::push(Record r) {
  std::lock_guard lock(mu_);
  records_.push_back(std::move(r));
  used_.push_back(0);
}

std::vector<ScriptedBackend::Request> ScriptedBackend::requests() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t ScriptedBackend::request_count() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway() : sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

void Gateway::add_endpoint(std::string name, std::shared_ptr<Backend> backend) {
  backends_[std::move(name)] = std::move(backend);
}

bool Gateway::has_endpoint(std::string_view name) const { return backends_.find(name) != backends_.end(); }

Backend& Gateway::backend(std::string_view name) const {
  auto it = backends_.find(name);
  if (it == backends_.end()) throw PreconditionError("unknown endpoint '" + std::string(name) + "'");
  return *it->second;
}

ChatMessage Gateway::complete(const ModelSpec& spec, const Transcript& messages) const {
  if (messages.empty()) throw PreconditionError("complete() needs at least one message");
  if (messages.front().role == ChatRole::assistant) {
    throw PreconditionError("first message must be a system or user message");
  }
  for (const auto& m : messages) {
    if (m.role != ChatRole::assistant && m.content.empty()) {
      throw PreconditionError("system/user messages must be non-empty");
    }
  }
  Backend& be = backend(spec.endpoint);
  auto delay = spec.backoff;
  for (int attempt = 0;; ++attempt) {
    try {
      std::string content = be.send(spec, messages);
      if (text::trim(content).empty()) throw MalformedResponse("empty reply from " + spec.model);
      return {ChatRole::assistant, std::move(content)};
    } catch (const TransportError& e) {
      if (attempt >= spec.max_retries) {
        throw TransportError(std::string(e.what()) + " (after " + std::to_string(attempt + 1) + " attempts)");
      }
      spdlog::warn("{}: {}; retry {}/{} in {} ms", spec.model, e.what(), attempt + 1, spec.max_retries,
                   delay.count());
      sleeper_(delay);
      delay *= 2;
    }
  }
}

Gateway Gateway::from_config(const RunConfig& cfg, const std::filesystem::path& base_dir) {
  Gateway gw;
  for (const auto& [name, ep] : cfg.endpoints) {
    if (ep.type == EndpointType::scripted) {
      std::filesystem::path p = ep.script;
      gw.add_endpoint(name, ScriptedBackend::from_file(p.is_absolute() ? p : base_dir / p));
    } else {
      gw.add_endpoint(name, std::make_shared<HttpBackend>(ep));
    }
  }
  return gw;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

Transcript system_user(std::string_view system, std::string user) {
  return {{ChatRole::system, std::string(system)}, {ChatRole::user, std::move(user)}};
}

std::string version_block(const std::vector<SampleOutput>& outputs, bool labeled) {
  std::string out;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& [sample, output] = outputs[i];
    out += templates::render(templates::get("discriminator_bbh_sample.txt"),
                             {{"index", std::to_string(i + 1)}, {"question", sample.input}, {"response", output.text}});
    if (labeled) {
      out += templates::render(templates::get("discriminator_bbh_expected.txt"), {{"expected", *sample.expected}});
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> criteria_lines(const Criteria& criteria) {
  std::vector<std::string> out;
  for (const auto& c : criteria.items) out.push_back(c.description);
  if (criteria.freeform && !criteria.freeform->empty()) out.push_back(*criteria.freeform);
  return out;
}

Transcript render_discriminator_bbh(const std::vector<SampleOutput>& outputs_a,
                                    const std::vector<SampleOutput>& outputs_b, bool labeled) {
  if (outputs_a.empty() || outputs_a.size() != outputs_b.size()) {
    throw MismatchedSamples("both versions need the same, non-empty list of samples");
  }
  for (std::size_t i = 0; i < outputs_a.size(); ++i) {
    if (outputs_a[i].first != outputs_b[i].first ||
        outputs_a[i].second.sample_index != outputs_b[i].second.sample_index) {
      throw MismatchedSamples("sample " + std::to_string(i + 1) + " differs between versions");
    }
    if (labeled && !outputs_a[i].first.expected) {
      throw MismatchedSamples("sample " + std::to_string(i + 1) + " has no expected answer");
    }
  }
  return system_user(templates::get("discriminator_bbh_system.txt"),
                     templates::render(templates::get("discriminator_bbh_user.txt"),
                                       {{"version_1_samples", version_block(outputs_a, labeled)},
                                        {"version_2_samples", version_block(outputs_b, labeled)}}));
}

Transcript render_discriminator_criteria(std::string_view output_a, std::string_view output_b,
                                         const Criteria& criteria) {
  if (criteria.empty()) throw EmptyCriteria("discriminator needs at least one criterion");
  if (output_a.empty() || output_b.empty()) throw PreconditionError("outputs must be non-empty");
  std::string block;
  const auto lines = criteria_lines(criteria);
  for (std::size_t i = 0; i < lines.size(); ++i) block += std::to_string(i + 1) + ". " + lines[i] + "\n";
  return system_user(templates::get("discriminator_criteria_system.txt"),
                     templates::render(templates::get("discriminator_criteria_user.txt"),
                                       {{"output_1", std::string(output_a)},
                                        {"output_2", std::string(output_b)},
                                        {"criteria", block}}));
}

Transcript render_optimizer(const Transcript& history, const Prompt& loser, std::string_view feedback,
                            OptimizerMode mode, int loser_version) {
  if (feedback.empty()) throw PreconditionError("optimizer feedback must be non-empty");
  std::string user;
  switch (mode) {
    case OptimizerMode::bbh:
      user = templates::render(templates::get("optimizer_bbh_user.txt"),
                               {{"version", std::to_string(loser_version)},
                                {"instruction", loser.text},
                                {"feedback", std::string(feedback)}});
      break;
    case OptimizerMode::criteria:
      user = templates::render(templates::get("optimizer_criteria_user.txt"),
                               {{"prompt", loser.text}, {"feedback", std::string(feedback)}});
      break;
    case OptimizerMode::criteria_minimal:
      user = templates::render(templates::get("optimizer_criteria_minimal_user.txt"),
                               {{"prompt", loser.text}, {"feedback", std::string(feedback)}});
      break;
  }
  Transcript out = history;
  out.push_back({ChatRole::user, std::move(user)});
  return out;
}

Transcript render_variant(const Prompt& seed, const Criteria& criteria) {
  if (criteria.empty()) throw EmptyCriteria("variant generation needs at least one criterion");
  std::string block;
  const auto lines = criteria_lines(criteria);
  for (std::size_t i = 0; i < lines.size(); ++i) block += "  " + std::to_string(i + 1) + ". " + lines[i] + "\n";
  return system_user(templates::get("variant_system.txt"),
                     templates::render(templates::get("variant_user.txt"),
                                       {{"original_prompt", seed.text}, {"requirements", block}}));
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

// End offset (inclusive) of the brace-balanced span starting at `open`, with
// braces inside JSON strings ignored.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
    } else if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<Json> extract_last_json_object(std::string_view raw) {
  std::optional<Json> last;
  for (std::size_t i = raw.find('{'); i != std::string_view::npos;) {
    if (auto end = balanced_end(raw, i)) {
      Json j = Json::parse(raw.substr(i, *end - i + 1), nullptr, false);
      if (!j.is_discarded() && j.is_object()) {
        last = std::move(j);
        i = raw.find('{', *end + 1);
        continue;
      }
    }
    i = raw.find('{', i + 1);
  }
  return last;
}

DiscriminatorVerdict parse_verdict(std::string_view raw) {
  const auto obj = extract_last_json_object(raw);
  if (!obj) throw ParseError("no JSON object in discriminator reply");
  if (!obj->contains("preferred")) throw ParseError("verdict lacks 'preferred'");
  const Json& p = obj->at("preferred");
  int preferred = 0;
  if (p.is_number_integer()) {
    preferred = p.get<int>();
  } else if (p.is_string() && (p == "1" || p == "2")) {
    preferred = p.get<std::string>()[0] - '0';
  }
  if (preferred != 1 && preferred != 2) throw ParseError("'preferred' must be 1 or 2, got " + p.dump());
  if (!obj->contains("feedback") || !obj->at("feedback").is_string() ||
      text::trim(obj->at("feedback").get<std::string>()).empty()) {
    throw ParseError("verdict needs a non-empty 'feedback' string");
  }
  return {preferred, obj->at("feedback").get<std::string>()};
}

std::string parse_rewrite(std::string_view raw, std::string_view field) {
  const auto obj = extract_last_json_object(raw);
  const std::string key(field);
  if (!obj) throw ParseError("no JSON object in rewrite reply");
  if (!obj->contains(key) || !obj->at(key).is_string() || text::trim(obj->at(key).get<std::string>()).empty()) {
    throw ParseError("rewrite reply needs a non-empty '" + key + "' string");
  }
  return obj->at(key).get<std::string>();
}

}  // namespace prefpo
