#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace autoevol {

enum class FailureCategory {
  StagnantComplexity,
  InsufficientQualification,
  LossOfKeyInformation,
  // The evolve or respond call itself failed, so there is no response to
  // inspect. Counted as a failure.
  EvolutionError,
  None,
};

std::string to_string(FailureCategory c);
FailureCategory failure_category_from_string(const std::string& s);

struct FailureVerdict {
  bool failed = false;
  FailureCategory category = FailureCategory::None;
  std::string matched_rule;

  static FailureVerdict success() { return {}; }
  bool operator==(const FailureVerdict&) const = default;
};

struct DetectionRule {
  enum class Match { PrefixAndQuestion, Substring };

  FailureCategory category = FailureCategory::None;
  Match match = Match::Substring;
  std::vector<std::string> patterns;  // lowercase
};

/// Lexical detector for failed evolutions, applied to the response the evol
/// model gave to an evolved instruction.
///
/// The response is trimmed of whitespace and surrounding quote characters and
/// lowercased (ASCII) before matching. Rules are tried in order; the first
/// match decides the category.
class FailureDetector {
 public:
  // stagnant_complexity: begins with understood / what / that is correct /
  //   thank you / great, and ends with '?'
  // insufficient_qualification: begins with sure, and ends with '?'
  // loss_of_key_information: contains "please provide"
  static FailureDetector default_rules();
  static FailureDetector from_json(const nlohmann::json& j);
  static FailureDetector from_file(const std::filesystem::path& path);

  explicit FailureDetector(std::vector<DetectionRule> rules);

  FailureVerdict classify(std::string_view response) const;
  const std::vector<DetectionRule>& rules() const { return rules_; }
  nlohmann::json to_json() const;

 private:
  std::vector<DetectionRule> rules_;
};

// classify() under the default rule set.
FailureVerdict classify(std::string_view response);

// Trimmed, unquoted, ASCII-lowercased form used for matching.
std::string normalize_response(std::string_view response);

// Fraction of failed verdicts over the development-set size. Throws
// DomainError when dev_size is 0 and SizeError when the counts disagree.
double failure_rate(std::span<const FailureVerdict> verdicts, std::size_t dev_size);

}  // namespace autoevol
