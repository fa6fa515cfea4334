#include "autoevol/failure_detection.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

#include "autoevol/errors.hpp"

namespace autoevol {
namespace {

// ASCII quotes plus the UTF-8 encodings of curly single/double quotes.
constexpr std::array<std::string_view, 7> kQuotes = {
    "\"", "'", "`", "\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x98", "\xE2\x80\x99"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view strip_once(std::string_view s, bool& changed) {
  while (!s.empty() && is_space(s.front())) {
    s.remove_prefix(1);
    changed = true;
  }
  while (!s.empty() && is_space(s.back())) {
    s.remove_suffix(1);
    changed = true;
  }
  for (auto q : kQuotes) {
    if (s.starts_with(q)) {
      s.remove_prefix(q.size());
      changed = true;
    }
    if (s.ends_with(q)) {
      s.remove_suffix(q.size());
      changed = true;
    }
  }
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string describe(const DetectionRule& rule, const std::string& pattern) {
  if (rule.match == DetectionRule::Match::PrefixAndQuestion) {
    return "begins with \"" + pattern + "\", ends with \"?\"";
  }
  return "contains \"" + pattern + "\"";
}

}  // namespace

std::string to_string(FailureCategory c) {
  switch (c) {
    case FailureCategory::StagnantComplexity: return "stagnant_complexity";
    case FailureCategory::InsufficientQualification: return "insufficient_qualification";
    case FailureCategory::LossOfKeyInformation: return "loss_of_key_information";
    case FailureCategory::EvolutionError: return "evolution_error";
    case FailureCategory::None: return "none";
  }
  return "none";
}

FailureCategory failure_category_from_string(const std::string& s) {
  for (auto c : {FailureCategory::StagnantComplexity, FailureCategory::InsufficientQualification,
                 FailureCategory::LossOfKeyInformation, FailureCategory::EvolutionError,
                 FailureCategory::None}) {
    if (to_string(c) == s) return c;
  }
  throw ValidationError("unknown failure category '" + s + "'");
}

std::string normalize_response(std::string_view response) {
  bool changed = true;
  while (changed) {
    changed = false;
    response = strip_once(response, changed);
  }
  return lower(std::string(response));
}

FailureDetector::FailureDetector(std::vector<DetectionRule> rules) : rules_(std::move(rules)) {
  for (auto& r : rules_) {
    if (r.category == FailureCategory::None) {
      throw ValidationError("detection rule cannot have category 'none'");
    }
    for (auto& p : r.patterns) p = lower(p);
  }
}

FailureDetector FailureDetector::default_rules() {
  using M = DetectionRule::Match;
  return FailureDetector({
      {FailureCategory::StagnantComplexity,
       M::PrefixAndQuestion,
       {"understood", "what", "that is correct", "thank you", "great"}},
      {FailureCategory::InsufficientQualification, M::PrefixAndQuestion, {"sure"}},
      {FailureCategory::LossOfKeyInformation, M::Substring, {"please provide"}},
  });
}

FailureDetector FailureDetector::from_json(const nlohmann::json& j) {
  std::vector<DetectionRule> rules;
  try {
    for (const auto& r : j.at("rules")) {
      DetectionRule rule;
      rule.category = failure_category_from_string(r.at("category"));
      const std::string match = r.at("match");
      if (match == "prefix+question") {
        rule.match = DetectionRule::Match::PrefixAndQuestion;
      } else if (match == "substring") {
        rule.match = DetectionRule::Match::Substring;
      } else {
        throw ValidationError("unknown match kind '" + match + "'");
      }
      rule.patterns = r.at("patterns").get<std::vector<std::string>>();
      rules.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid rule set: ") + e.what());
  }
  return FailureDetector(std::move(rules));
}

FailureDetector FailureDetector::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open rule file " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

nlohmann::json FailureDetector::to_json() const {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : rules_) {
    rules.push_back({{"category", to_string(r.category)},
                     {"match", r.match == DetectionRule::Match::PrefixAndQuestion
                                   ? "prefix+question"
                                   : "substring"},
                     {"patterns", r.patterns}});
  }
  return {{"rules", rules}};
}

FailureVerdict FailureDetector::classify(std::string_view response) const {
  const std::string text = normalize_response(response);
  const bool question = !text.empty() && text.back() == '?';
  for (const auto& rule : rules_) {
    for (const auto& p : rule.patterns) {
      bool hit = rule.match == DetectionRule::Match::PrefixAndQuestion
                     ? question && text.starts_with(p)
                     : text.find(p) != std::string::npos;
      if (hit) return {true, rule.category, describe(rule, p)};
    }
  }
  return FailureVerdict::success();
}

FailureVerdict classify(std::string_view response) {
  static const FailureDetector detector = FailureDetector::default_rules();
  return detector.classify(response);
}

double failure_rate(std::span<const FailureVerdict> verdicts, std::size_t dev_size) {
  if (dev_size == 0) throw DomainError("development set size must be positive");
  if (verdicts.size() != dev_size) {
    throw SizeError("expected " + std::to_string(dev_size) + " verdicts, got " +
                    std::to_string(verdicts.size()));
  }
  const auto failed = std::count_if(verdicts.begin(), verdicts.end(),
                                    [](const FailureVerdict& v) { return v.failed; });
  return static_cast<double>(failed) / static_cast<double>(dev_size);
}

}  // namespace autoevol
