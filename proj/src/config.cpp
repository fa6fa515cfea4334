#include "autoevol/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "autoevol/errors.hpp"
#include "autoevol/http_backend.hpp"
#include "autoevol/mock_backend.hpp"

namespace autoevol {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void read_path(const json& j, const char* key, std::optional<fs::path>& out, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  std::string s;
  read(j, key, s, "paths");
  out = resolve(base, s);
}

std::string diversity_name(DiversityMode m) {
  return m == DiversityMode::DatasetDistinct ? "dataset" : "per_record";
}

}  // namespace

GatewayOptions GatewayConfig::options() const {
  GatewayOptions o;
  o.retry.max_retries = max_retries;
  o.retry.initial_backoff = std::chrono::milliseconds(initial_backoff_ms);
  o.retry.max_backoff = std::chrono::milliseconds(max_backoff_ms);
  o.requests_per_minute = requests_per_minute;
  o.max_in_flight = max_in_flight;
  return o;
}

void PipelineConfig::validate() const {
  optimizer.validate();
  if (!(evolution.evol_temperature >= 0.0 && evolution.evol_temperature <= 2.0)) {
    throw ConfigError("evol_temperature must be in [0, 2]");
  }
  if (!(evolution.responder_temperature >= 0.0 && evolution.responder_temperature <= 2.0)) {
    throw ConfigError("responder_temperature must be in [0, 2]");
  }
  if (!(evolution.top_p > 0.0 && evolution.top_p <= 1.0)) {
    throw ConfigError("evolution top_p must be in (0, 1]");
  }
  if (evolution.max_tokens <= 0) throw ConfigError("evolution max_tokens must be positive");
  if (evolution.marker.empty()) throw ConfigError("marker must not be empty");
  if (evolution.workers == 0) throw ConfigError("workers must be positive");
  if (gateway.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (gateway.initial_backoff_ms < 0 || gateway.max_backoff_ms < 0) {
    throw ConfigError("backoff must be >= 0");
  }
  if (gateway.requests_per_minute < 0) throw ConfigError("requests_per_minute must be >= 0");
  if (gateway.max_in_flight == 0) throw ConfigError("max_in_flight must be positive");
  if (gateway.timeout_seconds <= 0) throw ConfigError("timeout_seconds must be positive");
  if (pool_size == 0) throw ConfigError("pool_size must be positive");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0)) {
    throw ConfigError("max_failure_fraction must be in [0, 1]");
  }
  if (initial_method.empty()) throw ConfigError("initial_method must not be empty");
}

json PipelineConfig::to_json() const {
  auto opt_path = [](const std::optional<fs::path>& p) -> json {
    return p ? json(p->string()) : json(nullptr);
  };
  json models = json::object();
  for (const auto& [role, model] : gateway.models) models[to_string(role)] = model;
  return {
      {"paths",
       {{"seed_dataset", seed_dataset.string()},
        {"output_dir", output_dir.string()},
        {"prompt_dir", opt_path(prompt_dir)},
        {"mock_script", opt_path(mock_script)},
        {"detection_rules", opt_path(detection_rules)}}},
      {"initial_method", initial_method},
      {"optimizer", optimizer.to_json()},
      {"evolution",
       {{"evol_temperature", evolution.evol_temperature},
        {"responder_temperature", evolution.responder_temperature},
        {"top_p", evolution.top_p},
        {"max_tokens", evolution.max_tokens},
        {"marker", evolution.marker},
        {"workers", evolution.workers}}},
      {"gateway",
       {{"endpoint", gateway.endpoint},
        {"models", models},
        {"api_key", gateway.api_key.empty() ? "" : "<redacted>"},
        {"api_key_env", gateway.api_key_env},
        {"api_key_header", gateway.api_key_header},
        {"max_retries", gateway.max_retries},
        {"initial_backoff_ms", gateway.initial_backoff_ms},
        {"max_backoff_ms", gateway.max_backoff_ms},
        {"requests_per_minute", gateway.requests_per_minute},
        {"max_in_flight", gateway.max_in_flight},
        {"timeout_seconds", gateway.timeout_seconds}}},
      {"rng_seed", rng_seed},
      {"pool_size", pool_size},
      {"max_failure_fraction", max_failure_fraction},
      {"diversity", diversity_name(diversity)},
  };
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  check_keys(j, "config",
             {"paths", "initial_method", "optimizer", "evolution", "gateway", "rng_seed",
              "pool_size", "max_failure_fraction", "diversity"});

  if (j.contains("paths")) {
    const auto& p = j["paths"];
    check_keys(p, "paths",
               {"seed_dataset", "output_dir", "prompt_dir", "mock_script", "detection_rules"});
    std::string s;
    read(p, "seed_dataset", s, "paths");
    if (!s.empty()) c.seed_dataset = resolve(base_dir, s);
    s.clear();
    read(p, "output_dir", s, "paths");
    if (!s.empty()) c.output_dir = resolve(base_dir, s);
    read_path(p, "prompt_dir", c.prompt_dir, base_dir);
    read_path(p, "mock_script", c.mock_script, base_dir);
    read_path(p, "detection_rules", c.detection_rules, base_dir);
  }

  read(j, "initial_method", c.initial_method, "config");
  if (c.initial_method != "default" && c.initial_method != "weak") {
    c.initial_method = resolve(base_dir, c.initial_method).string();
  }

  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    const std::string w = "optimizer";
    check_keys(o, w,
               {"batch_size", "dev_size", "samples", "max_steps", "patience",
                "trajectory_rounds", "optimizer_temperature", "optimizer_top_p",
                "optimizer_max_tokens", "evol_temperature"});
    read(o, "batch_size", c.optimizer.batch_size, w);
    read(o, "dev_size", c.optimizer.dev_size, w);
    read(o, "samples", c.optimizer.samples, w);
    read(o, "max_steps", c.optimizer.max_steps, w);
    read(o, "patience", c.optimizer.patience, w);
    read(o, "trajectory_rounds", c.optimizer.trajectory_rounds, w);
    read(o, "optimizer_temperature", c.optimizer.optimizer_temperature, w);
    read(o, "optimizer_top_p", c.optimizer.optimizer_top_p, w);
    read(o, "optimizer_max_tokens", c.optimizer.optimizer_max_tokens, w);
    read(o, "evol_temperature", c.evolution.evol_temperature, w);
  }

  if (j.contains("evolution")) {
    const auto& e = j["evolution"];
    const std::string w = "evolution";
    check_keys(e, w,
               {"evol_temperature", "responder_temperature", "top_p", "max_tokens", "marker",
                "workers"});
    read(e, "evol_temperature", c.evolution.evol_temperature, w);
    read(e, "responder_temperature", c.evolution.responder_temperature, w);
    read(e, "top_p", c.evolution.top_p, w);
    read(e, "max_tokens", c.evolution.max_tokens, w);
    read(e, "marker", c.evolution.marker, w);
    read(e, "workers", c.evolution.workers, w);
  }

  if (j.contains("gateway")) {
    const auto& g = j["gateway"];
    const std::string w = "gateway";
    check_keys(g, w,
               {"endpoint", "models", "api_key", "api_key_env", "api_key_header", "max_retries",
                "initial_backoff_ms", "max_backoff_ms", "requests_per_minute", "max_in_flight",
                "timeout_seconds"});
    read(g, "endpoint", c.gateway.endpoint, w);
    if (g.contains("models")) {
      const auto& m = g["models"];
      if (!m.is_object()) throw ConfigError("gateway.models must be an object");
      for (const auto& [role, model] : m.items()) {
        RoleTag tag;
        try {
          tag = role_tag_from_string(role);
        } catch (const Error&) {
          throw ConfigError("gateway.models: unknown role '" + role + "'");
        }
        if (!model.is_string()) throw ConfigError("gateway.models." + role + " must be a string");
        c.gateway.models[tag] = model.get<std::string>();
      }
    }
    read(g, "api_key", c.gateway.api_key, w);
    read(g, "api_key_env", c.gateway.api_key_env, w);
    read(g, "api_key_header", c.gateway.api_key_header, w);
    read(g, "max_retries", c.gateway.max_retries, w);
    read(g, "initial_backoff_ms", c.gateway.initial_backoff_ms, w);
    read(g, "max_backoff_ms", c.gateway.max_backoff_ms, w);
    read(g, "requests_per_minute", c.gateway.requests_per_minute, w);
    read(g, "max_in_flight", c.gateway.max_in_flight, w);
    read(g, "timeout_seconds", c.gateway.timeout_seconds, w);
  }

  read(j, "rng_seed", c.rng_seed, "config");
  read(j, "pool_size", c.pool_size, "config");
  read(j, "max_failure_fraction", c.max_failure_fraction, "config");
  if (j.contains("diversity")) {
    std::string d;
    read(j, "diversity", d, "config");
    if (d == "dataset") {
      c.diversity = DiversityMode::DatasetDistinct;
    } else if (d == "per_record") {
      c.diversity = DiversityMode::PerRecordUnique;
    } else {
      throw ConfigError("diversity must be 'dataset' or 'per_record'");
    }
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

void apply_env_overrides(PipelineConfig& config) {
  if (const char* ep = std::getenv("AUTOEVOL_ENDPOINT"); ep && *ep) config.gateway.endpoint = ep;
}

std::shared_ptr<Backend> make_backend(const PipelineConfig& config) {
  if (config.mock_script) {
    if (!fs::exists(*config.mock_script)) {
      throw ConfigError("mock script not found: " + config.mock_script->string());
    }
    return MockBackend::from_file(*config.mock_script);
  }
  if (config.gateway.endpoint.empty()) {
    throw ConfigError("no mock script and no gateway.endpoint configured");
  }
  HttpBackendConfig h;
  h.endpoint = config.gateway.endpoint;
  h.models = config.gateway.models;
  for (auto role : {RoleTag::Evol, RoleTag::Optimizer, RoleTag::Responder, RoleTag::Tagger}) {
    if (!h.models.count(role)) throw ConfigError("gateway.models lacks role " + to_string(role));
  }
  h.api_key = config.gateway.api_key;
  if (const char* key = std::getenv(config.gateway.api_key_env.c_str()); key && *key) h.api_key = key;
  if (h.api_key.empty()) {
    throw ConfigError("no API key: set " + config.gateway.api_key_env + " or gateway.api_key");
  }
  h.api_key_header = config.gateway.api_key_header;
  h.timeout = std::chrono::seconds(config.gateway.timeout_seconds);
  return std::make_shared<HttpBackend>(std::move(h));
}

TemplateSet load_templates(const PipelineConfig& config) {
  if (!config.prompt_dir) return TemplateSet::builtin();
  if (!fs::is_directory(*config.prompt_dir)) {
    throw ConfigError("prompt directory not found: " + config.prompt_dir->string());
  }
  return TemplateSet::load_directory(*config.prompt_dir);
}

FailureDetector load_detector(const PipelineConfig& config) {
  if (!config.detection_rules) return FailureDetector::default_rules();
  if (!fs::exists(*config.detection_rules)) {
    throw ConfigError("detection rules not found: " + config.detection_rules->string());
  }
  return FailureDetector::from_file(*config.detection_rules);
}

std::string initial_method_text(const PipelineConfig& config, const TemplateSet& templates) {
  if (config.initial_method == "default") return templates.get(TemplateName::InitialMethod).body();
  if (config.initial_method == "weak") return templates.get(TemplateName::WeakInitialMethod).body();
  std::ifstream in(config.initial_method, std::ios::binary);
  if (!in) throw ConfigError("initial method file not found: " + config.initial_method);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace autoevol
