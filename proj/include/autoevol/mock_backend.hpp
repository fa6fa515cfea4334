#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoevol/gateway.hpp"

namespace autoevol {

/// Deterministic scripted backend.
///
/// A script is an ordered list of rules; the first rule whose matchers all
/// accept the request answers it. Matchers: `role`, `contains` /
/// `not_contains` (substrings of the user prompt, string or list) and `regex`
/// (searched in the user prompt; capture groups become `{1}`, `{2}`, ...).
///
/// Each rule holds a response list consumed according to `select`:
///   - "sequence": the n-th call gets entry n, the last entry repeats;
///   - "cycle":    entry (n mod size);
///   - "item":     entry (request.item_index mod size), which is independent
///                 of call order and therefore safe under concurrency.
///
/// An entry is a template string, `{"text": ..., "repeat": k}`, or
/// `{"error": "transient" | "api", "message": ...}`. Templates may reference
/// `{subject}`, `{prompt}` and regex groups.
class MockBackend final : public Backend {
 public:
  struct Response {
    std::string text;
    enum class Kind { Text, Transient, Api } kind = Kind::Text;
  };

  struct Rule {
    std::optional<RoleTag> role;
    std::vector<std::string> contains;
    std::vector<std::string> not_contains;
    std::optional<std::regex> pattern;
    enum class Select { Sequence, Cycle, Item } select = Select::Sequence;
    std::vector<Response> responses;
  };

  MockBackend() = default;
  explicit MockBackend(std::vector<Rule> rules, std::optional<std::string> fallback = {});

  static std::shared_ptr<MockBackend> from_json(const nlohmann::json& script);
  static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path);

  // Every request answered by the same template.
  static std::shared_ptr<MockBackend> constant(const std::string& response_template);

  std::string complete(const GenerationRequest& request) override;

  struct LoggedRequest {
    RoleTag role;
    std::string user_prompt;
    std::string subject;
  };
  std::vector<LoggedRequest> requests() const;

 private:
  std::vector<Rule> rules_;
  std::optional<std::string> fallback_;
  mutable std::mutex mutex_;
  std::vector<std::size_t> counters_;
  std::vector<LoggedRequest> log_;
};

}  // namespace autoevol
