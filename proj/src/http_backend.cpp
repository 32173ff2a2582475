#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>

#include "prefpo/error.hpp"
#include "prefpo/model_gateway.hpp"

namespace prefpo {

HttpBackend::HttpBackend(EndpointConfig cfg) : cfg_(std::move(cfg)) {
  const auto scheme = cfg_.base_url.find("://");
  if (scheme == std::string::npos) throw PreconditionError("base_url needs a scheme: " + cfg_.base_url);
  const auto path = cfg_.base_url.find('/', scheme + 3);
  scheme_host_port_ = cfg_.base_url.substr(0, path);
  path_prefix_ = path == std::string::npos ? "" : cfg_.base_url.substr(path);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

Json HttpBackend::request_body(const ModelSpec& spec, const Transcript& messages) const {
  Json body{{"model", spec.model}, {"messages", messages}, {"temperature", spec.temperature}};
  if (spec.reasoning_effort) {
    if (cfg_.supports_reasoning_effort) {
      body["reasoning_effort"] = to_string(*spec.reasoning_effort);
    } else {
      spdlog::debug("{}: endpoint does not support reasoning_effort; dropped", spec.model);
    }
  }
  return body;
}

std::string HttpBackend::send(const ModelSpec& spec, const Transcript& messages) {
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(spec.timeout);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = request_body(spec, messages).dump();
  auto res = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
  if (!res) throw TransportError("request to " + scheme_host_port_ + " failed: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403) {
    throw AuthError("HTTP " + std::to_string(res->status) + " from " + scheme_host_port_);
  }
  if (res->status == 429 || res->status >= 500) throw TransportError("HTTP " + std::to_string(res->status));
  if (res->status != 200) {
    throw RequestRejected("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
  }
  const Json reply = Json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) throw MalformedResponse("response body is not JSON");
  try {
    const Json& content = reply.at("choices").at(0).at("message").at("content");
    return content.is_string() ? content.get<std::string>() : std::string{};
  } catch (const nlohmann::json::exception&) {
    throw MalformedResponse("response has no choices[0].message.content");
  }
}

}  // namespace prefpo
