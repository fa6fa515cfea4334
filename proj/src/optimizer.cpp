#include "autoevol/optimizer.hpp"

#include <algorithm>
#include <mutex>

#include "autoevol/concurrency.hpp"

namespace autoevol {
namespace {

constexpr const char* kPhaseTrajectory = "optimize.trajectory";
constexpr const char* kPhaseAnalysis = "optimize.analysis";
constexpr const char* kPhaseOptimization = "optimize.optimization";
constexpr const char* kPhaseEvalEvolve = "optimize.evaluation.evolve";
constexpr const char* kPhaseEvalRespond = "optimize.evaluation.respond";

GenerationRequest optimizer_request(const OptimizerContext& ctx, std::string prompt,
                                    std::size_t item_index, std::string subject) {
  GenerationRequest req;
  req.user_prompt = std::move(prompt);
  req.temperature = ctx.config.optimizer_temperature;
  req.top_p = ctx.config.optimizer_top_p;
  req.max_tokens = ctx.config.optimizer_max_tokens;
  req.role_tag = RoleTag::Optimizer;
  req.item_index = item_index;
  req.subject = std::move(subject);
  return req;
}

std::size_t workers(const OptimizerContext& ctx) { return ctx.evolution.settings.workers; }

}  // namespace

void OptimizerConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (dev_size == 0) throw ConfigError("dev_size must be positive");
  if (samples == 0) throw ConfigError("samples (m) must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (trajectory_rounds < 1) throw ConfigError("trajectory_rounds (l) must be >= 1");
  if (!(optimizer_temperature >= 0.0 && optimizer_temperature <= 2.0)) {
    throw ConfigError("optimizer_temperature must be in [0, 2]");
  }
  if (!(optimizer_top_p > 0.0 && optimizer_top_p <= 1.0)) {
    throw ConfigError("optimizer_top_p must be in (0, 1]");
  }
  if (optimizer_max_tokens <= 0) throw ConfigError("optimizer_max_tokens must be positive");
}

OptimizationBudget OptimizerConfig::budget() const {
  return {static_cast<std::uint64_t>(max_steps), batch_size,
          static_cast<std::uint64_t>(trajectory_rounds), samples, dev_size};
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"dev_size", dev_size},
          {"samples", samples},
          {"max_steps", max_steps},
          {"patience", patience},
          {"trajectory_rounds", trajectory_rounds},
          {"optimizer_temperature", optimizer_temperature},
          {"optimizer_top_p", optimizer_top_p},
          {"optimizer_max_tokens", optimizer_max_tokens}};
}

std::string serialize_trajectories(std::span<const EvolutionTrajectory> trajectories) {
  std::string out;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& t = trajectories[i];
    if (i) out += "\n";
    out += "Case ID: " + std::to_string(i + 1) + "\n";
    out += "Stage 0: " + t.origin.final_user_text() + "\n";
    for (std::size_t g = 0; g < t.generations.size(); ++g) {
      out += "Stage " + std::to_string(g + 1) + ": " + t.generations[g] + "\n";
    }
    if (t.failed()) {
      out += "Stage " + std::to_string(*t.failed_round) + ": (evolution failed)\n";
    }
  }
  return out;
}

std::vector<Feedback> analyze_trajectories(const OptimizerContext& ctx,
                                           std::span<const EvolutionTrajectory> trajectories,
                                           std::size_t samples) {
  if (trajectories.empty()) throw ValidationError("no trajectories to analyze");
  if (samples == 0) throw ValidationError("samples must be >= 1");
  const std::string prompt = ctx.evolution.templates.get(TemplateName::TrajectoryAnalysis)
                                 .render({{"trajectories", serialize_trajectories(trajectories)}});

  std::vector<std::optional<std::string>> results(samples);
  parallel_for(samples, samples, [&](std::size_t i) {
    try {
      auto text = trim(ctx.evolution.gateway.generate(optimizer_request(ctx, prompt, i, {}),
                                                      kPhaseAnalysis));
      if (!text.empty()) results[i] = std::move(text);
    } catch (const Error&) {
      // dropped sample
    }
  });

  std::vector<Feedback> feedback;
  for (std::size_t i = 0; i < samples; ++i) {
    if (results[i]) feedback.push_back({static_cast<int>(i + 1), std::move(*results[i])});
  }
  if (feedback.empty()) throw StepError("every trajectory analysis sample failed");
  return feedback;
}

EvolvingMethod optimize_method(const OptimizerContext& ctx, const EvolvingMethod& current,
                               const Feedback& feedback) {
  if (trim(feedback.text).empty()) throw ValidationError("feedback is empty");
  const auto& marker = ctx.evolution.settings.marker;
  const std::string prompt =
      ctx.evolution.templates.get(TemplateName::MethodOptimization)
          .render({{"feedback", feedback.text},
                   {"current_method", current.text},
                   {"marker", marker},
                   {"instruction_slot", "{instruction}"}});
  const std::size_t item = feedback.sample_index > 0 ? feedback.sample_index - 1 : 0;
  std::string text = trim(ctx.evolution.gateway.generate(
      optimizer_request(ctx, prompt, item, feedback.text), kPhaseOptimization));
  if (text.find(marker) == std::string::npos) {
    throw CandidateFormatError("candidate " + std::to_string(feedback.sample_index) +
                               " lost the '" + marker + "' section");
  }
  EvolvingMethod candidate;
  candidate.text = std::move(text);
  candidate.step = current.step + 1;
  candidate.parent_step = current.step;
  candidate.feedback_digest = feedback.text;
  candidate.candidate_index = feedback.sample_index;
  return candidate;
}

CandidateEvaluation evaluate_candidate(const OptimizerContext& ctx, const EvolvingMethod& candidate,
                                       std::span<const InstructionRecord> dev_set) {
  if (dev_set.empty()) throw ValidationError("development set is empty");
  CandidateEvaluation eval;
  eval.candidate = candidate;
  eval.dev_responses.resize(dev_set.size());
  eval.verdicts.resize(dev_set.size());

  parallel_for(dev_set.size(), workers(ctx), [&](std::size_t i) {
    try {
      auto evolved = evolve_once(ctx.evolution, dev_set[i].final_user_text(), candidate,
                                 {kPhaseEvalEvolve, i, {}});
      eval.dev_responses[i] = generate_response(ctx.evolution, evolved.text,
                                                {kPhaseEvalRespond, i, {}});
      eval.verdicts[i] = ctx.detector.classify(eval.dev_responses[i]);
    } catch (const Error& e) {
      eval.verdicts[i] = {true, FailureCategory::EvolutionError, e.what()};
    }
  });
  eval.lambda = failure_rate(eval.verdicts, dev_set.size());
  return eval;
}

nlohmann::json StepRecord::to_json() const {
  nlohmann::json fb = nlohmann::json::array();
  for (const auto& f : feedback) {
    fb.push_back({{"sample_index", f.sample_index},
                  {"fingerprint", fingerprint(f.text)},
                  {"excerpt", utf8_truncate(f.text, 160)}});
  }
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : candidates) {
    cands.push_back({{"candidate_index", c.candidate_index},
                     {"version", c.version},
                     {"text_fingerprint", c.text_fingerprint},
                     {"lambda", c.lambda}});
  }
  nlohmann::json j = {{"step", step},
                      {"batch_ids", batch_ids},
                      {"feedback", std::move(fb)},
                      {"candidates", std::move(cands)},
                      {"notes", notes},
                      {"chosen_index", chosen_index ? nlohmann::json(*chosen_index) : nlohmann::json(nullptr)},
                      {"accepted", accepted},
                      {"incumbent_lambda", incumbent_lambda}};
  if (error) j["error"] = *error;
  return j;
}

OptimizerState step(const OptimizerContext& ctx, const OptimizerState& state,
                    const DatasetSplit& split) {
  if (state.terminated) throw StateError("optimizer already terminated");
  const auto& cfg = ctx.config;
  StepRecord row;
  row.step = state.step + 1;
  row.incumbent_lambda = state.incumbent_lambda;

  auto batch = next_minibatch(split, static_cast<std::uint64_t>(row.step), cfg.batch_size);
  for (const auto& r : batch) row.batch_ids.push_back(r.id);

  std::vector<EvolutionTrajectory> trajectories(batch.size());
  parallel_for(batch.size(), workers(ctx), [&](std::size_t i) {
    trajectories[i] = build_trajectory(ctx.evolution, batch[i], state.incumbent,
                                       cfg.trajectory_rounds, {kPhaseTrajectory, i, {}});
  });

  try {
    row.feedback = analyze_trajectories(ctx, trajectories, cfg.samples);
  } catch (const StepError& e) {
    row.error = e.what();
    throw StepFailure(e.what(), std::move(row));
  }
  for (std::size_t i = 1, f = 0; i <= cfg.samples; ++i) {
    if (f < row.feedback.size() && row.feedback[f].sample_index == static_cast<int>(i)) {
      ++f;
    } else {
      row.notes.push_back("analysis sample " + std::to_string(i) + " dropped");
    }
  }

  std::vector<std::optional<EvolvingMethod>> revised(row.feedback.size());
  std::vector<std::string> revise_errors(row.feedback.size());
  parallel_for(row.feedback.size(), row.feedback.size(), [&](std::size_t i) {
    try {
      revised[i] = optimize_method(ctx, state.incumbent, row.feedback[i]);
    } catch (const Error& e) {
      revise_errors[i] = e.what();
    }
  });
  std::vector<EvolvingMethod> candidates;
  for (std::size_t i = 0; i < revised.size(); ++i) {
    if (revised[i]) {
      candidates.push_back(std::move(*revised[i]));
    } else {
      row.notes.push_back("candidate " + std::to_string(row.feedback[i].sample_index) +
                          " discarded: " + revise_errors[i]);
    }
  }
  if (candidates.empty()) {
    row.error = "no candidate survived optimization";
    throw StepFailure(*row.error, std::move(row));
  }

  std::vector<CandidateEvaluation> evals(candidates.size());
  parallel_for(candidates.size(), candidates.size(), [&](std::size_t i) {
    evals[i] = evaluate_candidate(ctx, candidates[i], split.dev_set);
  });

  // Candidates are in ascending candidate_index order, so the first minimum
  // is the lowest index among ties.
  std::size_t best = 0;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const auto& c = evals[i].candidate;
    row.candidates.push_back(
        {c.candidate_index.value_or(0), c.version_id(), fingerprint(c.text), evals[i].lambda});
    if (evals[i].lambda < evals[best].lambda) best = i;
  }

  row.chosen_index = evals[best].candidate.candidate_index;
  OptimizerState next = state;
  next.step = row.step;
  if (evals[best].lambda < state.incumbent_lambda) {
    next.incumbent = evals[best].candidate;
    next.incumbent_lambda = evals[best].lambda;
    next.no_improvement_streak = 0;
    row.accepted = true;
  } else {
    ++next.no_improvement_streak;
  }
  row.incumbent_lambda = next.incumbent_lambda;
  next.history.push_back(std::move(row));
  return next;
}

RunResult run(const OptimizerContext& ctx, const EvolvingMethod& initial, const DatasetSplit& split,
              const StepCallback& on_step) {
  ctx.config.validate();
  RunResult result;
  result.initial_evaluation = evaluate_candidate(ctx, initial, split.dev_set);

  OptimizerState state;
  state.incumbent = initial;
  state.incumbent_lambda = result.initial_evaluation.lambda;

  for (;;) {
    if (state.no_improvement_streak >= ctx.config.patience) {
      state.termination_reason = "no_improvement";
      break;
    }
    if (state.step >= ctx.config.max_steps) {
      state.termination_reason = "max_steps";
      break;
    }
    try {
      state = step(ctx, state, split);
      if (on_step) on_step(state);
    } catch (const StepFailure& f) {
      state.history.push_back(f.record());
      state.step = f.record().step;
      state.error = f.what();
      state.termination_reason = "error";
      break;
    }
  }
  state.terminated = true;
  result.best = state.incumbent;
  result.state = std::move(state);
  return result;
}

nlohmann::json audit_log(const RunResult& result, const OptimizerConfig& config) {
  const auto& state = result.state;
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& row : state.history) steps.push_back(row.to_json());
  nlohmann::json j = {
      {"schema", "autoevol.audit/1"},
      {"config", config.to_json()},
      {"initial", {{"method", result.initial_evaluation.candidate.to_json()},
                   {"lambda", result.initial_evaluation.lambda}}},
      {"steps", std::move(steps)},
      {"termination", {{"reason", state.termination_reason}, {"steps_completed", state.step}}},
      {"best", {{"method", result.best.to_json()}, {"lambda", state.incumbent_lambda}}}};
  if (state.error) j["termination"]["error"] = *state.error;
  return j;
}

}  // namespace autoevol
