#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prefpo/domain.hpp"

namespace prefpo {

enum class ChatRole { system, user, assistant };
std::string_view to_string(ChatRole r);

struct ChatMessage {
  ChatRole role = ChatRole::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

using Transcript = std::vector<ChatMessage>;

struct DiscriminatorVerdict {
  int preferred = 1;  // 1 or 2
  std::string feedback;

  bool operator==(const DiscriminatorVerdict&) const = default;
};

void to_json(Json& j, const ChatMessage& v);
void from_json(const Json& j, ChatMessage& v);
void to_json(Json& j, const DiscriminatorVerdict& v);

// ---------------------------------------------------------------------------
// Backends

/// Sends one chat request. Implementations throw TransportError for
/// retryable failures, AuthError / RequestRejected otherwise.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string send(const ModelSpec& spec, const Transcript& messages) = 0;
};

/// Deterministic replay backend.
///
/// Each record answers requests whose last message contains `match` (and,
/// if set, whose model equals `model`). Records are consumed in order;
/// `times` lets one record answer several requests and `sticky` never runs
/// out. When no record applies the optional responder is asked; otherwise
/// the request fails with ScriptExhausted.
class ScriptedBackend : public Backend {
 public:
  enum class Failure { transport, auth, malformed };

  struct Record {
    std::optional<std::string> match;
    std::optional<std::string> model;
    std::optional<std::string> reply;
    std::optional<Failure> error;
    int times = 1;
    bool sticky = false;
  };

  struct Request {
    std::string model;
    Transcript messages;
  };

  using Responder = std::function<std::optional<std::string>(const ModelSpec&, const Transcript&)>;

  explicit ScriptedBackend(std::vector<Record> records = {}, Responder responder = {});

  /// Script document: an array of records, or {"records": [...]}.
  static std::vector<Record> parse_script(const Json& doc);
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  std::string send(const ModelSpec& spec, const Transcript& messages) override;

  void push(Record r);
  std::vector<Request> requests() const;
  std::size_t request_count() const;

 private:
  mutable std::mutex mu_;
  std::vector<Record> records_;
  std::vector<int> used_;
  Responder responder_;
  std::vector<Request> log_;
};

/// OpenAI-compatible /chat/completions client.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(EndpointConfig cfg);
  std::string send(const ModelSpec& spec, const Transcript& messages) override;

  /// Request body as sent on the wire (exposed for tests).
  Json request_body(const ModelSpec& spec, const Transcript& messages) const;

 private:
  EndpointConfig cfg_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// ---------------------------------------------------------------------------
// Gateway

/// Routes ModelSpec.endpoint to a backend and applies the retry policy.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway();

  void add_endpoint(std::string name, std::shared_ptr<Backend> backend);
  Backend& backend(std::string_view name) const;
  bool has_endpoint(std::string_view name) const;

  /// Replaces the real sleep used between retries (tests pass a no-op).
  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }

  /// Up to spec.max_retries retries on TransportError with exponential
  /// backoff; AuthError and RequestRejected are not retried; an empty reply
  /// is MalformedResponse.
  ChatMessage complete(const ModelSpec& spec, const Transcript& messages) const;

  /// Builds backends for every configured endpoint; scripted script paths
  /// resolve against `base_dir`.
  static Gateway from_config(const RunConfig& cfg, const std::filesystem::path& base_dir);

 private:
  std::map<std::string, std::shared_ptr<Backend>, std::less<>> backends_;
  Sleeper sleeper_;
};

// ---------------------------------------------------------------------------
// Rendering

using SampleOutput = std::pair<TaskSample, GeneratedOutput>;

Transcript render_discriminator_bbh(const std::vector<SampleOutput>& outputs_a,
                                    const std::vector<SampleOutput>& outputs_b, bool labeled);

Transcript render_discriminator_criteria(std::string_view output_a, std::string_view output_b,
                                         const Criteria& criteria);

enum class OptimizerMode { bbh, criteria, criteria_minimal };

/// `loser_version` is the loser's position (1 or 2) in the discriminator
/// transcript; only the bbh template shows it.
Transcript render_optimizer(const Transcript& history, const Prompt& loser, std::string_view feedback,
                            OptimizerMode mode, int loser_version = 1);

Transcript render_variant(const Prompt& seed, const Criteria& criteria);

/// Criteria descriptions (items first, then freeform), one per entry.
std::vector<std::string> criteria_lines(const Criteria& criteria);

// ---------------------------------------------------------------------------
// Parsing

/// Last well-formed top-level JSON object in `raw`, skipping prose and code
/// fences around it.
std::optional<Json> extract_last_json_object(std::string_view raw);

/// Throws ParseError when no object is found or the fields are invalid.
DiscriminatorVerdict parse_verdict(std::string_view raw);

/// Non-empty string field of the last JSON object ("prompt" / "instruction").
std::string parse_rewrite(std::string_view raw, std::string_view field);

}  // namespace prefpo
