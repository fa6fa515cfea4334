#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "autoevol/analysis.hpp"
#include "autoevol/evolution.hpp"
#include "autoevol/failure_detection.hpp"
#include "autoevol/gateway.hpp"
#include "autoevol/optimizer.hpp"
#include "autoevol/prompts.hpp"

namespace autoevol {

struct GatewayConfig {
  std::string endpoint;
  std::map<RoleTag, std::string> models;
  // The variable named by api_key_env, when set, overrides api_key.
  std::string api_key;
  std::string api_key_env = "AUTOEVOL_API_KEY";
  std::string api_key_header = "Authorization";
  int max_retries = 3;
  int initial_backoff_ms = 500;
  int max_backoff_ms = 30000;
  double requests_per_minute = 0.0;
  std::size_t max_in_flight = 16;
  int timeout_seconds = 120;

  GatewayOptions options() const;
};

struct PipelineConfig {
  std::filesystem::path seed_dataset;
  std::filesystem::path output_dir = "runs";
  std::optional<std::filesystem::path> prompt_dir;
  std::optional<std::filesystem::path> mock_script;
  std::optional<std::filesystem::path> detection_rules;
  // "default", "weak", or a path to a method text file.
  std::string initial_method = "default";

  OptimizerConfig optimizer;
  EvolutionSettings evolution;
  GatewayConfig gateway;

  std::uint64_t rng_seed = 42;
  std::size_t pool_size = 2000;
  double max_failure_fraction = 0.5;
  DiversityMode diversity = DiversityMode::DatasetDistinct;

  // Throws ConfigError on out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;
};

// Unknown keys are rejected. Relative paths resolve against `base_dir`.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

// AUTOEVOL_ENDPOINT replaces gateway.endpoint when set.
void apply_env_overrides(PipelineConfig& config);

// Mock backend when a mock script is configured, HTTP otherwise.
std::shared_ptr<Backend> make_backend(const PipelineConfig& config);

TemplateSet load_templates(const PipelineConfig& config);
FailureDetector load_detector(const PipelineConfig& config);
std::string initial_method_text(const PipelineConfig& config, const TemplateSet& templates);

}  // namespace autoevol
