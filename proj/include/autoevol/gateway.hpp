#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoevol/data_model.hpp"

namespace autoevol {

// Which logical model a request is addressed to.
enum class RoleTag { Evol, Optimizer, Responder, Tagger };

std::string to_string(RoleTag tag);
RoleTag role_tag_from_string(const std::string& s);

struct GenerationRequest {
  std::optional<std::string> system_prompt;
  std::string user_prompt;
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 2048;
  RoleTag role_tag = RoleTag::Evol;

  // Earlier conversation turns sent ahead of user_prompt.
  std::vector<Turn> history;

  // Request metadata, never sent over the wire. `subject` is the text the
  // prompt is about (an instruction, a feedback text); `item_index` is the
  // position of the request within its batch. Scripted backends key on both.
  std::string subject;
  std::optional<std::size_t> item_index;
};

// Throws ValidationError on out-of-range sampling parameters or empty prompt.
void validate(const GenerationRequest& request);

// Snapshot of API-call accounting.
struct RunLedger {
  std::map<std::string, std::uint64_t> calls_by_role;
  std::map<std::string, std::uint64_t> calls_by_phase;
  std::uint64_t retries = 0;
  std::uint64_t failures = 0;

  std::uint64_t total_calls() const;
  nlohmann::json to_json() const;
};

// Thread-safe accumulator behind RunLedger.
class Ledger {
 public:
  void record_call(RoleTag role, const std::string& phase, bool failed);
  void record_retry();
  RunLedger snapshot() const;
  void reset();

 private:
  mutable std::mutex mutex_;
  RunLedger data_;
};

// A text-generation backend. Implementations must be safe to call
// concurrently. Throw TransientError for retryable conditions (transport
// faults, HTTP 429/5xx) and ApiError for everything else.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const GenerationRequest& request) = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30000};
};

// Token bucket over requests; requests_per_minute <= 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute);
  void acquire();

 private:
  using Clock = std::chrono::steady_clock;
  std::mutex mutex_;
  double rate_per_sec_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

struct GatewayOptions {
  RetryPolicy retry;
  double requests_per_minute = 0.0;
  std::size_t max_in_flight = 16;
};

class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {});

  // Safe for concurrent use. Each call lands in exactly one (role, phase)
  // ledger cell whether it succeeds or exhausts its retries.
  std::string generate(const GenerationRequest& request, const std::string& phase);

  RunLedger ledger() const { return ledger_.snapshot(); }
  void reset_ledger() { ledger_.reset(); }
  const GatewayOptions& options() const { return options_; }

 private:
  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  Ledger ledger_;
  RateLimiter limiter_;
  std::counting_semaphore<> in_flight_;
};

// Parameters of the method-optimization phase that drive its call count.
struct OptimizationBudget {
  std::uint64_t steps = 10;
  std::uint64_t batch_size = 10;
  std::uint64_t trajectory_rounds = 1;
  std::uint64_t samples = 5;
  std::uint64_t dev_size = 50;
};

struct CostEstimate {
  std::uint64_t full_evolution_calls = 0;
  std::uint64_t optimization_calls = 0;
  std::uint64_t total() const { return full_evolution_calls + optimization_calls; }
  nlohmann::json to_json() const;
};

// One evolve call and one response call per (record, round). The optimization
// term is an estimate: per step, batch*l evolve calls, m analysis calls, m
// optimization calls and 2*|D| calls per candidate evaluation.
CostEstimate estimate_cost(std::uint64_t datasize, std::uint64_t rounds_per_record,
                           const OptimizationBudget& budget);

}  // namespace autoevol
