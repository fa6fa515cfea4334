#pragma once

#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoevol/data_model.hpp"
#include "autoevol/gateway.hpp"
#include "autoevol/method.hpp"
#include "autoevol/prompts.hpp"

namespace autoevol {

struct EvolutionSettings {
  double evol_temperature = 0.0;
  double responder_temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 2048;
  std::string marker = kDefaultMarker;
  std::size_t workers = 8;
};

// Everything an evolution call needs besides the method itself.
struct EvolutionContext {
  Gateway& gateway;
  const TemplateSet& templates;
  EvolutionSettings settings;
};

struct EvolvedInstruction {
  std::string text;
  bool format_warning = false;
};

// Optional per-call metadata threaded through to the gateway.
struct CallTag {
  std::string phase;
  std::optional<std::size_t> item_index;
  std::vector<Turn> history;
};

EvolvedInstruction evolve_once(const EvolutionContext& ctx, const std::string& instruction,
                               const EvolvingMethod& method, const CallTag& tag);

std::string generate_response(const EvolutionContext& ctx, const std::string& instruction,
                              const CallTag& tag);

struct EvolutionTrajectory {
  InstructionRecord origin;
  std::vector<std::string> generations;
  std::string method_version;
  std::vector<bool> warnings;
  // 1-based round that failed, with the error text.
  std::optional<int> failed_round;
  std::string error;

  bool failed() const { return failed_round.has_value(); }
};

// Chains evolve_once `rounds` times starting from the origin's final user
// turn. A failing round stops the chain; earlier generations are kept.
EvolutionTrajectory build_trajectory(const EvolutionContext& ctx, const InstructionRecord& record,
                                     const EvolvingMethod& method, int rounds,
                                     const CallTag& tag);

struct EvolutionFailure {
  std::string record_id;
  int round = 0;
  std::string error;
};

struct EvolveResult {
  std::vector<InstructionRecord> records;
  std::vector<EvolutionFailure> failures;
  std::size_t format_warnings = 0;

  nlohmann::json report(const EvolvingMethod& method, const RunLedger& ledger) const;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Evolves every record `rounds` times. Round k re-evolves the round k-1
/// output; each user turn is evolved with the already-evolved conversation as
/// context and every assistant turn is regenerated. Output ids are
/// "<input id>~r<round>" and the output is ordered by (input order, round).
/// A failing record is logged and contributes no further rounds.
EvolveResult evolve_dataset(const EvolutionContext& ctx, std::span<const InstructionRecord> records,
                            const EvolvingMethod& method, int rounds,
                            const std::string& phase_prefix = "evolve",
                            const ProgressFn& progress = {});

// Records whose round is in `rounds`, input order kept, first id wins.
std::vector<InstructionRecord> mix_rounds(std::span<const InstructionRecord> evolved,
                                          const std::set<int>& rounds);

}  // namespace autoevol
