#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "autoevol/errors.hpp"
#include "autoevol/gateway.hpp"
#include "autoevol/http_backend.hpp"

using namespace autoevol;
using nlohmann::json;

namespace {

class LocalServer {
 public:
  LocalServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json reply(const std::string& content) {
  return {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
}

HttpBackendConfig config_for(const LocalServer& s) {
  HttpBackendConfig c;
  c.endpoint = s.url("/v1/chat/completions");
  c.models = {{RoleTag::Evol, "evol-model"}, {RoleTag::Responder, "resp-model"}};
  c.api_key = "secret";
  c.timeout = std::chrono::seconds(5);
  return c;
}

GatewayOptions fast() {
  GatewayOptions o;
  o.retry.initial_backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

TEST(HttpBackend, RequestBodyShape) {
  GenerationRequest r;
  r.system_prompt = "sys";
  r.history = {{Role::User, "u0"}, {Role::Assistant, "a0"}};
  r.user_prompt = "hello";
  r.temperature = 0.6;
  r.top_p = 0.95;
  r.max_tokens = 77;
  const auto body = chat_request_body(r, "m");
  EXPECT_EQ(body["model"], "m");
  ASSERT_EQ(body["messages"].size(), 4u);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "u0");
  EXPECT_EQ(body["messages"][2]["role"], "assistant");
  EXPECT_EQ(body["messages"][3]["content"], "hello");
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.6);
  EXPECT_DOUBLE_EQ(body["top_p"].get<double>(), 0.95);
  EXPECT_EQ(body["max_tokens"], 77);
}

TEST(HttpBackend, ParseResponse) {
  EXPECT_EQ(parse_chat_response(reply("hi").dump()), "hi");
  EXPECT_THROW(parse_chat_response("not json"), ApiError);
  EXPECT_THROW(parse_chat_response(R"({"choices":[]})"), ApiError);
}

TEST(HttpBackend, RoundTripWithAuthAndModel) {
  LocalServer s;
  std::string seen_auth, seen_model;
  s.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const auto body = json::parse(req.body);
    seen_model = body["model"];
    res.set_content(reply("echo: " + body["messages"].back()["content"].get<std::string>()).dump(),
                    "application/json");
  });
  Gateway g(std::make_shared<HttpBackend>(config_for(s)), fast());
  GenerationRequest r;
  r.user_prompt = "ping";
  r.role_tag = RoleTag::Responder;
  EXPECT_EQ(g.generate(r, "p"), "echo: ping");
  EXPECT_EQ(seen_auth, "Bearer secret");
  EXPECT_EQ(seen_model, "resp-model");
}

TEST(HttpBackend, RawKeyHeader) {
  LocalServer s;
  std::string seen;
  s.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = req.get_header_value("api-key");
    res.set_content(reply("ok").dump(), "application/json");
  });
  auto c = config_for(s);
  c.api_key_header = "api-key";
  HttpBackend b(c);
  GenerationRequest r;
  r.user_prompt = "x";
  EXPECT_EQ(b.complete(r), "ok");
  EXPECT_EQ(seen, "secret");
}

TEST(HttpBackend, RateLimitIsRetried) {
  LocalServer s;
  std::atomic<int> calls{0};
  s.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls <= 2) {
      res.status = 429;
      res.set_content(R"({"error":{"message":"slow down"}})", "application/json");
      return;
    }
    res.set_content(reply("done").dump(), "application/json");
  });
  Gateway g(std::make_shared<HttpBackend>(config_for(s)), fast());
  GenerationRequest r;
  r.user_prompt = "x";
  EXPECT_EQ(g.generate(r, "p"), "done");
  EXPECT_EQ(g.ledger().retries, 2u);
  EXPECT_EQ(calls.load(), 3);
}

TEST(HttpBackend, AuthErrorNotRetried) {
  LocalServer s;
  std::atomic<int> calls{0};
  s.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
    res.set_content(R"({"error":{"message":"invalid api key"}})", "application/json");
  });
  Gateway g(std::make_shared<HttpBackend>(config_for(s)), fast());
  GenerationRequest r;
  r.user_prompt = "x";
  try {
    g.generate(r, "p");
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 401);
    EXPECT_NE(std::string(e.what()).find("invalid api key"), std::string::npos);
  }
  EXPECT_EQ(calls.load(), 1);
  EXPECT_EQ(g.ledger().failures, 1u);
}

TEST(HttpBackend, UnreachableIsTransportError) {
  HttpBackendConfig c;
  c.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  c.models = {{RoleTag::Evol, "m"}};
  c.api_key = "k";
  c.timeout = std::chrono::seconds(1);
  GatewayOptions o = fast();
  o.retry.max_retries = 1;
  Gateway g(std::make_shared<HttpBackend>(c), o);
  GenerationRequest r;
  r.user_prompt = "x";
  EXPECT_THROW(g.generate(r, "p"), TransportError);
}

TEST(HttpBackend, MissingModelIsConfigError) {
  LocalServer s;
  HttpBackend b(config_for(s));
  GenerationRequest r;
  r.user_prompt = "x";
  r.role_tag = RoleTag::Tagger;
  EXPECT_THROW(b.complete(r), ConfigError);
}
