#include "autoevol/http_backend.hpp"

#include <httplib.h>

#include "autoevol/errors.hpp"

namespace autoevol {
namespace {

std::string error_message(const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_object() && j.contains("error")) {
    const auto& e = j["error"];
    if (e.is_object() && e.contains("message") && e["message"].is_string()) {
      return e["message"].get<std::string>();
    }
    if (e.is_string()) return e.get<std::string>();
  }
  return body.substr(0, 500);
}

}  // namespace

nlohmann::json chat_request_body(const GenerationRequest& request, const std::string& model) {
  nlohmann::json messages = nlohmann::json::array();
  if (request.system_prompt) {
    messages.push_back({{"role", "system"}, {"content", *request.system_prompt}});
  }
  for (const auto& turn : request.history) {
    messages.push_back({{"role", to_string(turn.role)}, {"content", turn.text}});
  }
  messages.push_back({{"role", "user"}, {"content", request.user_prompt}});
  return {{"model", model},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"top_p", request.top_p},
          {"max_tokens", request.max_tokens}};
}

std::string parse_chat_response(const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ApiError("response is not JSON");
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ApiError("unexpected response shape: " + body.substr(0, 200));
  }
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint must be an absolute URL: '" + config_.endpoint + "'");
  }
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  base_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (base_.rfind("https://", 0) == 0) throw ConfigError("built without TLS support");
#endif
}

HttpBackend::~HttpBackend() = default;

std::unique_ptr<httplib::Client> HttpBackend::acquire() {
  {
    std::lock_guard lock(pool_mutex_);
    if (!idle_.empty()) {
      auto c = std::move(idle_.back());
      idle_.pop_back();
      return c;
    }
  }
  auto client = std::make_unique<httplib::Client>(base_);
  client->set_keep_alive(true);
  client->set_read_timeout(config_.timeout);
  client->set_write_timeout(config_.timeout);
  client->set_connection_timeout(std::chrono::seconds(10));
  return client;
}

void HttpBackend::release(std::unique_ptr<httplib::Client> client) {
  std::lock_guard lock(pool_mutex_);
  idle_.push_back(std::move(client));
}

std::string HttpBackend::complete(const GenerationRequest& request) {
  auto model_it = config_.models.find(request.role_tag);
  if (model_it == config_.models.end()) {
    throw ConfigError("no model configured for role " + to_string(request.role_tag));
  }
  const std::string body = chat_request_body(request, model_it->second).dump();
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace(config_.api_key_header, config_.api_key_header == "Authorization"
                                                ? "Bearer " + config_.api_key
                                                : config_.api_key);
  }

  auto client = acquire();
  auto res = client->Post(path_, headers, body, "application/json");
  if (!res) {
    // Drop the connection; it may be half-closed.
    throw TransientError("transport error: " + httplib::to_string(res.error()));
  }
  release(std::move(client));

  const int status = res->status;
  if (status == 200) return parse_chat_response(res->body);
  const std::string msg = "HTTP " + std::to_string(status) + ": " + error_message(res->body);
  if (status == 408 || status == 429 || status >= 500) throw TransientError(msg);
  throw ApiError(msg, status);
}

}  // namespace autoevol
