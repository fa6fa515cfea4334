#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoevol/data_model.hpp"
#include "autoevol/errors.hpp"
#include "autoevol/evolution.hpp"
#include "autoevol/failure_detection.hpp"
#include "autoevol/method.hpp"

namespace autoevol {

struct OptimizerConfig {
  std::size_t batch_size = 10;
  std::size_t dev_size = 50;
  std::size_t samples = 5;  // m: analysis+optimization passes per step
  int max_steps = 10;
  int patience = 1;
  int trajectory_rounds = 1;  // l
  double optimizer_temperature = 0.6;
  double optimizer_top_p = 0.95;
  int optimizer_max_tokens = 4096;

  void validate() const;
  OptimizationBudget budget() const;
  nlohmann::json to_json() const;
};

struct OptimizerContext {
  const EvolutionContext& evolution;
  const FailureDetector& detector;
  OptimizerConfig config;
};

struct Feedback {
  int sample_index = 0;  // 1-based
  std::string text;
};

// Renders the batch as numbered cases: stage 0 is the origin instruction,
// stage i the i-th generation.
std::string serialize_trajectories(std::span<const EvolutionTrajectory> trajectories);

// Issues `samples` independent optimizer calls. Failed samples are dropped;
// throws StepError if none survive.
std::vector<Feedback> analyze_trajectories(const OptimizerContext& ctx,
                                           std::span<const EvolutionTrajectory> trajectories,
                                           std::size_t samples);

// Produces the revision of `current` suggested by `feedback`. Throws
// CandidateFormatError when the output lost the marker section.
EvolvingMethod optimize_method(const OptimizerContext& ctx, const EvolvingMethod& current,
                               const Feedback& feedback);

struct CandidateEvaluation {
  EvolvingMethod candidate;
  std::vector<std::string> dev_responses;
  std::vector<FailureVerdict> verdicts;
  double lambda = 0.0;
};

// Evolves each dev instruction under `candidate`, answers it and classifies
// the answer. A record whose calls fail counts as a failed verdict.
CandidateEvaluation evaluate_candidate(const OptimizerContext& ctx, const EvolvingMethod& candidate,
                                       std::span<const InstructionRecord> dev_set);

struct CandidateSummary {
  int candidate_index = 0;
  std::string version;
  std::string text_fingerprint;
  double lambda = 0.0;
};

struct StepRecord {
  int step = 0;
  std::vector<std::string> batch_ids;
  std::vector<Feedback> feedback;
  std::vector<CandidateSummary> candidates;
  std::vector<std::string> notes;  // dropped samples and candidates
  std::optional<int> chosen_index;
  bool accepted = false;
  double incumbent_lambda = 0.0;
  std::optional<std::string> error;

  nlohmann::json to_json() const;
};

struct OptimizerState {
  EvolvingMethod incumbent;
  double incumbent_lambda = 1.0;
  int step = 0;
  std::vector<StepRecord> history;
  int no_improvement_streak = 0;
  bool terminated = false;
  std::string termination_reason;
  std::optional<std::string> error;
};

// Thrown by step() when no candidate survives; carries the annotated row.
class StepFailure : public StepError {
 public:
  StepFailure(const std::string& what, StepRecord record)
      : StepError(what), record_(std::move(record)) {}
  const StepRecord& record() const { return record_; }

 private:
  StepRecord record_;
};

/// One optimization step: sample a batch, build trajectories under the
/// incumbent, collect m feedbacks, derive m candidates, score them on the dev
/// set and adopt the lowest-lambda candidate if it strictly beats the
/// incumbent. Ties go to the lowest candidate index.
OptimizerState step(const OptimizerContext& ctx, const OptimizerState& state,
                    const DatasetSplit& split);

struct RunResult {
  EvolvingMethod best;
  OptimizerState state;
  CandidateEvaluation initial_evaluation;
};

// Measures the initial method, then steps until the no-improvement streak
// reaches patience or max_steps steps have run. A failing step ends the run
// with the best method so far and state.error set.
using StepCallback = std::function<void(const OptimizerState&)>;

RunResult run(const OptimizerContext& ctx, const EvolvingMethod& initial, const DatasetSplit& split,
              const StepCallback& on_step = {});

// Step-by-step audit log. Contains no timestamps or paths, so identical runs
// serialize identically.
nlohmann::json audit_log(const RunResult& result, const OptimizerConfig& config);

}  // namespace autoevol
