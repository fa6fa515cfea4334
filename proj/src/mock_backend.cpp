#include "autoevol/mock_backend.hpp"

#include <fstream>

#include "autoevol/errors.hpp"

namespace autoevol {
namespace {

std::vector<std::string> string_list(const nlohmann::json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  return j.get<std::vector<std::string>>();
}

// Single pass, so substituted values are never re-expanded.
std::string expand(const std::string& tmpl, const GenerationRequest& request,
                   const std::smatch& groups) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    std::size_t open = tmpl.find('{', pos);
    std::size_t close = open == std::string::npos ? open : tmpl.find('}', open);
    if (close == std::string::npos) break;
    out.append(tmpl, pos, open - pos);
    const std::string key = tmpl.substr(open + 1, close - open - 1);
    if (key == "subject") {
      out += request.subject;
    } else if (key == "prompt") {
      out += request.user_prompt;
    } else if (!key.empty() && key.size() < 4 && key.find_first_not_of("0123456789") == std::string::npos &&
               std::stoul(key) < groups.size()) {
      out += groups[std::stoul(key)].str();
    } else {
      out.append(tmpl, open, close - open + 1);
    }
    pos = close + 1;
  }
  out.append(tmpl, pos);
  return out;
}

MockBackend::Rule parse_rule(const nlohmann::json& j) {
  MockBackend::Rule rule;
  if (auto it = j.find("role"); it != j.end()) rule.role = role_tag_from_string(*it);
  if (auto it = j.find("contains"); it != j.end()) rule.contains = string_list(*it);
  if (auto it = j.find("not_contains"); it != j.end()) rule.not_contains = string_list(*it);
  if (auto it = j.find("regex"); it != j.end()) {
    try {
      rule.pattern.emplace(it->get<std::string>(), std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw ParseError(std::string("bad regex in mock rule: ") + e.what());
    }
  }
  const std::string select = j.value("select", std::string("sequence"));
  if (select == "sequence") {
    rule.select = MockBackend::Rule::Select::Sequence;
  } else if (select == "cycle") {
    rule.select = MockBackend::Rule::Select::Cycle;
  } else if (select == "item") {
    rule.select = MockBackend::Rule::Select::Item;
  } else {
    throw ParseError("unknown mock select mode '" + select + "'");
  }
  for (const auto& entry : j.at("responses")) {
    MockBackend::Response r;
    int repeat = 1;
    if (entry.is_string()) {
      r.text = entry.get<std::string>();
    } else if (entry.contains("error")) {
      const std::string kind = entry.at("error");
      r.kind = kind == "transient" ? MockBackend::Response::Kind::Transient
                                   : MockBackend::Response::Kind::Api;
      r.text = entry.value("message", "scripted " + kind + " error");
      repeat = entry.value("repeat", 1);
    } else {
      r.text = entry.at("text").get<std::string>();
      repeat = entry.value("repeat", 1);
    }
    for (int i = 0; i < repeat; ++i) rule.responses.push_back(r);
  }
  if (rule.responses.empty()) throw ParseError("mock rule has no responses");
  return rule;
}

}  // namespace

MockBackend::MockBackend(std::vector<Rule> rules, std::optional<std::string> fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)), counters_(rules_.size(), 0) {}

std::shared_ptr<MockBackend> MockBackend::from_json(const nlohmann::json& script) {
  std::vector<Rule> rules;
  std::optional<std::string> fallback;
  try {
    for (const auto& r : script.at("rules")) rules.push_back(parse_rule(r));
    if (auto it = script.find("default"); it != script.end()) fallback = it->get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid mock script: ") + e.what());
  }
  return std::make_shared<MockBackend>(std::move(rules), std::move(fallback));
}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mock script " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::shared_ptr<MockBackend> MockBackend::constant(const std::string& response_template) {
  Rule rule;
  rule.responses.push_back({response_template});
  return std::make_shared<MockBackend>(std::vector<Rule>{std::move(rule)});
}

std::string MockBackend::complete(const GenerationRequest& request) {
  const std::string& prompt = request.user_prompt;
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const Rule& rule = rules_[i];
    if (rule.role && *rule.role != request.role_tag) continue;
    bool ok = true;
    for (const auto& c : rule.contains) ok = ok && prompt.find(c) != std::string::npos;
    for (const auto& c : rule.not_contains) ok = ok && prompt.find(c) == std::string::npos;
    if (!ok) continue;
    std::smatch groups;
    if (rule.pattern && !std::regex_search(prompt, groups, *rule.pattern)) continue;

    std::size_t index = 0;
    {
      std::lock_guard lock(mutex_);
      log_.push_back({request.role_tag, request.user_prompt, request.subject});
      const std::size_t n = rule.responses.size();
      const std::size_t count = counters_[i]++;
      switch (rule.select) {
        case Rule::Select::Sequence: index = std::min(count, n - 1); break;
        case Rule::Select::Cycle: index = count % n; break;
        case Rule::Select::Item: index = request.item_index.value_or(count) % n; break;
      }
    }
    const Response& r = rule.responses[index];
    if (r.kind == Response::Kind::Transient) throw TransientError(r.text);
    if (r.kind == Response::Kind::Api) throw ApiError(r.text, 400);

    return expand(r.text, request, groups);
  }
  {
    std::lock_guard lock(mutex_);
    log_.push_back({request.role_tag, request.user_prompt, request.subject});
  }
  if (fallback_) return *fallback_;
  throw ApiError("no mock rule matched " + to_string(request.role_tag) + " request", 400);
}

std::vector<MockBackend::LoggedRequest> MockBackend::requests() const {
  std::lock_guard lock(mutex_);
  return log_;
}

}  // namespace autoevol
