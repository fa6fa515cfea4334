#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "autoevol/prompts.hpp"

namespace autoevol {

// A versioned evolving-method text with its lineage.
struct EvolvingMethod {
  std::string text;
  int step = 0;
  std::optional<int> parent_step;
  std::optional<std::string> feedback_digest;
  std::optional<int> candidate_index;  // 1-based within its step

  static EvolvingMethod initial(std::string text) { return {std::move(text), 0, {}, {}, {}}; }

  // "s2c3" for candidate 3 of revision 2, "s0" for the initial method.
  std::string version_id() const;
  nlohmann::json to_json(bool include_text = false) const;

  bool operator==(const EvolvingMethod&) const = default;
};

// Throws ValidationError if the text is empty, lacks the marker section, or
// the lineage fields disagree with the step.
void validate(const EvolvingMethod& method, const std::string& marker = kDefaultMarker);

// 64-bit FNV-1a, hex encoded. Used to fingerprint texts in audit logs.
std::string fingerprint(std::string_view text);

}  // namespace autoevol
