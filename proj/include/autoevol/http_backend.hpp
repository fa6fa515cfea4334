#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoevol/gateway.hpp"

namespace httplib {
class Client;
}

namespace autoevol {

struct HttpBackendConfig {
  // Full URL of a chat-completions endpoint, e.g.
  // https://api.openai.com/v1/chat/completions
  std::string endpoint;
  std::map<RoleTag, std::string> models;
  std::string api_key;
  // "Authorization" sends "Bearer <key>"; any other header gets the raw key
  // (Azure deployments use "api-key").
  std::string api_key_header = "Authorization";
  std::chrono::seconds timeout{120};
};

// Builds the chat-completions request body.
nlohmann::json chat_request_body(const GenerationRequest& request, const std::string& model);

// Extracts choices[0].message.content; throws ApiError on an unexpected shape.
std::string parse_chat_response(const std::string& body);

// Chat-completion client with a pool of keep-alive connections.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  std::string complete(const GenerationRequest& request) override;

 private:
  std::unique_ptr<httplib::Client> acquire();
  void release(std::unique_ptr<httplib::Client> client);

  HttpBackendConfig config_;
  std::string base_;
  std::string path_;
  std::mutex pool_mutex_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
};

}  // namespace autoevol
