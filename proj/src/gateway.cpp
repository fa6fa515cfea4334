#include "autoevol/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "autoevol/errors.hpp"

namespace autoevol {

std::string to_string(RoleTag tag) {
  switch (tag) {
    case RoleTag::Evol: return "evol";
    case RoleTag::Optimizer: return "optimizer";
    case RoleTag::Responder: return "responder";
    case RoleTag::Tagger: return "tagger";
  }
  return "unknown";
}

RoleTag role_tag_from_string(const std::string& s) {
  if (s == "evol") return RoleTag::Evol;
  if (s == "optimizer") return RoleTag::Optimizer;
  if (s == "responder") return RoleTag::Responder;
  if (s == "tagger") return RoleTag::Tagger;
  throw ValidationError("unknown role tag '" + s + "'");
}

void validate(const GenerationRequest& request) {
  if (!(request.temperature >= 0.0 && request.temperature <= 2.0)) {
    throw ValidationError("temperature must be in [0, 2]");
  }
  if (!(request.top_p > 0.0 && request.top_p <= 1.0)) {
    throw ValidationError("top_p must be in (0, 1]");
  }
  if (request.max_tokens <= 0) throw ValidationError("max_tokens must be positive");
  if (request.user_prompt.empty()) throw ValidationError("user_prompt is empty");
}

std::uint64_t RunLedger::total_calls() const {
  std::uint64_t total = 0;
  for (const auto& [_, n] : calls_by_role) total += n;
  return total;
}

nlohmann::json RunLedger::to_json() const {
  return {{"calls_by_role", calls_by_role},
          {"calls_by_phase", calls_by_phase},
          {"retries", retries},
          {"failures", failures},
          {"total_calls", total_calls()}};
}

void Ledger::record_call(RoleTag role, const std::string& phase, bool failed) {
  std::lock_guard lock(mutex_);
  ++data_.calls_by_role[to_string(role)];
  ++data_.calls_by_phase[phase];
  if (failed) ++data_.failures;
}

void Ledger::record_retry() {
  std::lock_guard lock(mutex_);
  ++data_.retries;
}

RunLedger Ledger::snapshot() const {
  std::lock_guard lock(mutex_);
  return data_;
}

void Ledger::reset() {
  std::lock_guard lock(mutex_);
  data_ = {};
}

RateLimiter::RateLimiter(double requests_per_minute)
    : rate_per_sec_(requests_per_minute / 60.0),
      capacity_(std::max(1.0, requests_per_minute / 60.0)),
      tokens_(capacity_),
      last_(Clock::now()) {}

void RateLimiter::acquire() {
  if (rate_per_sec_ <= 0.0) return;
  std::unique_lock lock(mutex_);
  for (;;) {
    auto now = Clock::now();
    tokens_ = std::min(capacity_,
                       tokens_ + std::chrono::duration<double>(now - last_).count() * rate_per_sec_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_sec_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      options_(options),
      limiter_(options.requests_per_minute),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options.max_in_flight))) {
  if (!backend_) throw ConfigError("gateway has no backend");
}

std::string Gateway::generate(const GenerationRequest& request, const std::string& phase) {
  validate(request);
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  auto backoff = options_.retry.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    limiter_.acquire();
    try {
      std::string text = backend_->complete(request);
      ledger_.record_call(request.role_tag, phase, false);
      return text;
    } catch (const TransientError& e) {
      if (attempt >= options_.retry.max_retries) {
        ledger_.record_call(request.role_tag, phase, true);
        throw TransportError("retries exhausted after " + std::to_string(attempt + 1) +
                             " attempts: " + e.what());
      }
      ledger_.record_retry();
      if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
      backoff = std::min(options_.retry.max_backoff,
                         std::chrono::milliseconds(static_cast<std::int64_t>(
                             std::llround(backoff.count() * options_.retry.multiplier))));
    } catch (const Error&) {
      ledger_.record_call(request.role_tag, phase, true);
      throw;
    }
  }
}

nlohmann::json CostEstimate::to_json() const {
  return {{"full_evolution_calls", full_evolution_calls},
          {"optimization_calls", optimization_calls},
          {"total_calls", total()}};
}

CostEstimate estimate_cost(std::uint64_t datasize, std::uint64_t rounds_per_record,
                           const OptimizationBudget& budget) {
  CostEstimate est;
  est.full_evolution_calls = datasize * rounds_per_record * 2;
  const std::uint64_t per_step = budget.batch_size * budget.trajectory_rounds + budget.samples +
                                 budget.samples + budget.samples * budget.dev_size * 2;
  est.optimization_calls = budget.steps * per_step;
  return est;
}

}  // namespace autoevol
