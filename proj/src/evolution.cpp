#include "autoevol/evolution.hpp"

#include <atomic>
#include <unordered_set>

#include "autoevol/concurrency.hpp"
#include "autoevol/errors.hpp"

namespace autoevol {

EvolvedInstruction evolve_once(const EvolutionContext& ctx, const std::string& instruction,
                               const EvolvingMethod& method, const CallTag& tag) {
  if (trim(instruction).empty()) throw ValidationError("cannot evolve an empty instruction");
  GenerationRequest req;
  req.user_prompt = render_method(method.text, instruction);
  req.temperature = ctx.settings.evol_temperature;
  req.top_p = ctx.settings.top_p;
  req.max_tokens = ctx.settings.max_tokens;
  req.role_tag = RoleTag::Evol;
  req.history = tag.history;
  req.subject = instruction;
  req.item_index = tag.item_index;
  const std::string output = ctx.gateway.generate(req, tag.phase);
  auto extracted = extract_final_instruction(output, ctx.settings.marker);
  return {std::move(extracted.text), extracted.format_warning};
}

std::string generate_response(const EvolutionContext& ctx, const std::string& instruction,
                              const CallTag& tag) {
  if (trim(instruction).empty()) throw ValidationError("cannot answer an empty instruction");
  GenerationRequest req;
  req.user_prompt =
      ctx.templates.get(TemplateName::ResponseGeneration).render({{"instruction", instruction}});
  req.temperature = ctx.settings.responder_temperature;
  req.top_p = ctx.settings.top_p;
  req.max_tokens = ctx.settings.max_tokens;
  req.role_tag = RoleTag::Responder;
  req.history = tag.history;
  req.subject = instruction;
  req.item_index = tag.item_index;
  return ctx.gateway.generate(req, tag.phase);
}

EvolutionTrajectory build_trajectory(const EvolutionContext& ctx, const InstructionRecord& record,
                                     const EvolvingMethod& method, int rounds,
                                     const CallTag& tag) {
  if (rounds < 1) throw ValidationError("trajectory needs at least one round");
  EvolutionTrajectory traj;
  traj.origin = record;
  traj.method_version = method.version_id();
  std::string current = record.final_user_text();
  for (int round = 1; round <= rounds; ++round) {
    try {
      auto evolved = evolve_once(ctx, current, method, tag);
      traj.generations.push_back(evolved.text);
      traj.warnings.push_back(evolved.format_warning);
      current = std::move(evolved.text);
    } catch (const Error& e) {
      traj.failed_round = round;
      traj.error = e.what();
      break;
    }
  }
  return traj;
}

namespace {

struct EvolvedRecord {
  InstructionRecord record;
  std::size_t warnings = 0;
};

EvolvedRecord evolve_record_once(const EvolutionContext& ctx, const InstructionRecord& input,
                                 const EvolvingMethod& method, const std::string& base_id,
                                 int round, const std::string& phase_prefix,
                                 std::size_t item_index) {
  EvolvedRecord out;
  out.record.id = base_id + "~r" + std::to_string(round);
  out.record.source = input.source;
  out.record.round = round;
  out.record.parent_id = input.id;

  std::vector<Turn>& turns = out.record.turns;
  for (const auto& turn : input.turns) {
    if (turn.role != Role::User) continue;
    CallTag evolve_tag{phase_prefix + ".evolve", item_index, turns};
    auto evolved = evolve_once(ctx, turn.text, method, evolve_tag);
    out.warnings += evolved.format_warning ? 1 : 0;
    CallTag respond_tag{phase_prefix + ".respond", item_index, turns};
    std::string reply = generate_response(ctx, evolved.text, respond_tag);
    turns.push_back({Role::User, std::move(evolved.text)});
    turns.push_back({Role::Assistant, std::move(reply)});
  }
  return out;
}

}  // namespace

EvolveResult evolve_dataset(const EvolutionContext& ctx, std::span<const InstructionRecord> records,
                            const EvolvingMethod& method, int rounds,
                            const std::string& phase_prefix, const ProgressFn& progress) {
  if (rounds < 1) throw ValidationError("rounds must be >= 1");

  struct Slot {
    std::vector<InstructionRecord> outputs;
    std::optional<EvolutionFailure> failure;
    std::size_t warnings = 0;
  };
  std::vector<Slot> slots(records.size());
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  parallel_for(records.size(), ctx.settings.workers, [&](std::size_t i) {
    const InstructionRecord& seed = records[i];
    Slot& slot = slots[i];
    slot.outputs.reserve(static_cast<std::size_t>(rounds));
    const InstructionRecord* current = &seed;
    for (int k = 1; k <= rounds; ++k) {
      try {
        auto evolved = evolve_record_once(ctx, *current, method, seed.id, seed.round + k,
                                          phase_prefix, i);
        slot.warnings += evolved.warnings;
        slot.outputs.push_back(std::move(evolved.record));
        current = &slot.outputs.back();
      } catch (const Error& e) {
        slot.failure = EvolutionFailure{seed.id, seed.round + k, e.what()};
        break;
      }
    }
    const std::size_t n = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(n, records.size());
    }
  });

  EvolveResult result;
  for (auto& slot : slots) {
    for (auto& r : slot.outputs) result.records.push_back(std::move(r));
    if (slot.failure) result.failures.push_back(std::move(*slot.failure));
    result.format_warnings += slot.warnings;
  }
  return result;
}

nlohmann::json EvolveResult::report(const EvolvingMethod& method, const RunLedger& ledger) const {
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& f : failures) {
    failed.push_back({{"record_id", f.record_id}, {"round", f.round}, {"error", f.error}});
  }
  return {{"schema", "autoevol.evolve_report/1"},
          {"method", method.to_json()},
          {"evolved_records", records.size()},
          {"format_warnings", format_warnings},
          {"failures", std::move(failed)},
          {"ledger", ledger.to_json()}};
}

std::vector<InstructionRecord> mix_rounds(std::span<const InstructionRecord> evolved,
                                          const std::set<int>& rounds) {
  if (rounds.empty()) throw ValidationError("rounds_to_include must be non-empty");
  std::vector<InstructionRecord> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : evolved) {
    if (rounds.count(r.round) && seen.insert(r.id).second) out.push_back(r);
  }
  return out;
}

}  // namespace autoevol
