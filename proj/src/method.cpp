#include "autoevol/method.hpp"

#include <cstdio>

#include "autoevol/errors.hpp"

namespace autoevol {

std::string EvolvingMethod::version_id() const {
  std::string id = "s" + std::to_string(step);
  if (candidate_index) id += "c" + std::to_string(*candidate_index);
  return id;
}

nlohmann::json EvolvingMethod::to_json(bool include_text) const {
  nlohmann::json j = {{"version", version_id()},
                      {"step", step},
                      {"parent_step", parent_step ? nlohmann::json(*parent_step) : nlohmann::json(nullptr)},
                      {"candidate_index",
                       candidate_index ? nlohmann::json(*candidate_index) : nlohmann::json(nullptr)},
                      {"text_fingerprint", fingerprint(text)}};
  if (feedback_digest) j["feedback_fingerprint"] = fingerprint(*feedback_digest);
  if (include_text) j["text"] = text;
  return j;
}

void validate(const EvolvingMethod& method, const std::string& marker) {
  if (method.text.empty()) throw ValidationError("evolving method text is empty");
  if (!marker.empty() && method.text.find(marker) == std::string::npos) {
    throw ValidationError("evolving method lacks the '" + marker + "' section");
  }
  const bool root = method.step == 0;
  if (root != (!method.parent_step && !method.feedback_digest)) {
    throw ValidationError("evolving method lineage inconsistent with step " +
                          std::to_string(method.step));
  }
}

std::string fingerprint(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace autoevol
