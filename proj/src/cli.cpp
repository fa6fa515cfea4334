#include "autoevol/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "autoevol/analysis.hpp"
#include "autoevol/config.hpp"
#include "autoevol/errors.hpp"
#include "autoevol/evolution.hpp"
#include "autoevol/optimizer.hpp"

namespace autoevol {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Raised for missing inputs and bad arguments; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::string run_id;
  std::string mock;
  std::string prompts;
  std::string seed_dataset;
  std::optional<std::uint64_t> rng_seed;
  std::optional<std::size_t> workers;
  bool log_json = false;
  bool quiet = false;
};

class Reporter {
 public:
  Reporter(std::ostream& err, bool as_json, bool quiet) : err_(err), json_(as_json), quiet_(quiet) {}

  void event(const std::string& command, const std::string& text, json fields) {
    if (quiet_) return;
    if (json_) {
      fields["command"] = command;
      fields["event"] = text;
      err_ << fields.dump() << "\n";
      return;
    }
    err_ << "[" << command << "] " << text;
    for (const auto& [k, v] : fields.items()) err_ << " " << k << "=" << v.dump();
    err_ << "\n";
  }

 private:
  std::ostream& err_;
  bool json_;
  bool quiet_;
};

std::string default_run_id() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "Pipeline config (JSON)");
  cmd->add_option("-o,--out", o.out_dir, "Output root; overrides paths.output_dir");
  cmd->add_option("--run-id", o.run_id, "Run directory name (default: timestamp)");
  cmd->add_option("--mock", o.mock, "Mock backend script; overrides paths.mock_script");
  cmd->add_option("--prompts", o.prompts, "Prompt template directory");
  cmd->add_option("--seed-data", o.seed_dataset, "Seed dataset (JSONL)");
  cmd->add_option("--rng-seed", o.rng_seed, "RNG seed");
  cmd->add_option("--workers", o.workers, "Concurrent records per batch");
  cmd->add_flag("--log-json", o.log_json, "Progress as JSON lines on stderr");
  cmd->add_flag("-q,--quiet", o.quiet, "No progress output");
}

PipelineConfig prepare_config(const CommonOptions& o) {
  PipelineConfig c;
  if (!o.config_path.empty()) {
    if (!fs::exists(o.config_path)) throw UsageError("config not found: " + o.config_path);
    c = load_config(o.config_path);
  }
  apply_env_overrides(c);
  if (!o.out_dir.empty()) c.output_dir = o.out_dir;
  if (!o.mock.empty()) c.mock_script = fs::path(o.mock);
  if (!o.prompts.empty()) c.prompt_dir = fs::path(o.prompts);
  if (!o.seed_dataset.empty()) c.seed_dataset = o.seed_dataset;
  if (o.rng_seed) c.rng_seed = *o.rng_seed;
  if (o.workers) c.evolution.workers = *o.workers;
  c.validate();
  return c;
}

fs::path make_run_dir(const PipelineConfig& c, const CommonOptions& o) {
  const fs::path dir = c.output_dir / (o.run_id.empty() ? default_run_id() : o.run_id);
  fs::create_directories(dir);
  return dir;
}

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError(what + " not given");
  if (!fs::is_regular_file(p)) throw UsageError(what + " not found: " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_file(const fs::path& a, const fs::path& b) {
  std::error_code ec;
  return fs::exists(a) && fs::exists(b) && fs::equivalent(a, b, ec);
}

int cmd_optimize(const CommonOptions& o, const std::optional<std::string>& initial,
                 std::ostream& out, Reporter& rep) {
  PipelineConfig c = prepare_config(o);
  if (initial) c.initial_method = *initial;
  require_file(c.seed_dataset, "seed dataset");

  auto records = load_dataset(c.seed_dataset);
  const std::size_t dev = c.optimizer.dev_size;
  if (records.size() <= dev) {
    throw UsageError("seed dataset has " + std::to_string(records.size()) +
                     " records; need more than dev_size " + std::to_string(dev));
  }
  const std::size_t pool = std::min(c.pool_size, records.size() - dev);
  if (pool < c.optimizer.batch_size) {
    throw UsageError("optimization pool of " + std::to_string(pool) +
                     " records is smaller than batch_size");
  }
  const auto split = make_split(std::move(records), pool, dev, c.rng_seed);

  const auto templates = load_templates(c);
  const auto detector = load_detector(c);
  const auto method_text = initial_method_text(c, templates);
  const auto initial_method = EvolvingMethod::initial(method_text);
  validate(initial_method, c.evolution.marker);

  Gateway gateway(make_backend(c), c.gateway.options());
  const fs::path run_dir = make_run_dir(c, o);
  EvolutionContext ectx{gateway, templates, c.evolution};
  OptimizerContext octx{ectx, detector, c.optimizer};

  rep.event("optimize", "start",
            {{"pool", split.optimization_pool.size()},
             {"dev", split.dev_set.size()},
             {"run_dir", run_dir.string()}});
  auto result = run(octx, initial_method, split, [&](const OptimizerState& s) {
    const auto& row = s.history.back();
    json f = {{"step", row.step},
              {"accepted", row.accepted},
              {"incumbent_lambda", s.incumbent_lambda},
              {"calls", gateway.ledger().total_calls()}};
    for (const auto& cand : row.candidates) {
      if (row.chosen_index && cand.candidate_index == *row.chosen_index) {
        f["best_candidate_lambda"] = cand.lambda;
      }
    }
    rep.event("optimize", "step", std::move(f));
  });

  write_text(run_dir / "method_best.txt", result.best.text);
  write_json(run_dir / "audit.json", audit_log(result, c.optimizer));
  write_json(run_dir / "ledger.json", gateway.ledger().to_json());

  rep.event("optimize", "done",
            {{"termination", result.state.termination_reason},
             {"steps", result.state.step},
             {"best", result.best.version_id()},
             {"lambda", result.state.incumbent_lambda}});
  out << (run_dir / "method_best.txt").string() << "\n";
  if (result.state.error) {
    rep.event("optimize", "aborted", {{"error", *result.state.error}});
    return 1;
  }
  return 0;
}

int cmd_evolve(const CommonOptions& o, const std::string& method_path, int rounds,
               const std::string& input, std::optional<double> max_fail, std::ostream& out,
               Reporter& rep) {
  PipelineConfig c = prepare_config(o);
  if (max_fail) {
    c.max_failure_fraction = *max_fail;
    c.validate();
  }
  if (rounds < 1) throw UsageError("--rounds must be >= 1");
  const bool builtin_method = method_path == "default" || method_path == "weak";
  if (!builtin_method) require_file(method_path, "method file");
  const fs::path in_path = input.empty() ? c.seed_dataset : fs::path(input);
  require_file(in_path, "input dataset");

  const auto records = load_dataset(in_path);
  const auto templates = load_templates(c);
  if (builtin_method) c.initial_method = method_path;
  const auto method = EvolvingMethod::initial(builtin_method ? initial_method_text(c, templates)
                                                             : read_text(method_path));
  validate(method, c.evolution.marker);

  Gateway gateway(make_backend(c), c.gateway.options());
  const fs::path run_dir = make_run_dir(c, o);
  EvolutionContext ectx{gateway, templates, c.evolution};

  rep.event("evolve", "start", {{"records", records.size()}, {"rounds", rounds}});
  const auto result = evolve_dataset(ectx, records, method, rounds, "evolve",
                                     [&](std::size_t done, std::size_t total) {
                                       if (done % 100 == 0 || done == total) {
                                         rep.event("evolve", "progress",
                                                   {{"done", done}, {"total", total}});
                                       }
                                     });

  const fs::path out_path = run_dir / "evolved.jsonl";
  if (same_file(out_path, in_path)) throw UsageError("output would overwrite the input dataset");
  save_dataset(out_path, result.records);
  json report = result.report(method, gateway.ledger());
  const double fraction =
      records.empty() ? 0.0
                      : static_cast<double>(result.failures.size()) /
                            static_cast<double>(records.size());
  report["failure_fraction"] = fraction;
  report["max_failure_fraction"] = c.max_failure_fraction;
  write_json(run_dir / "evolve_report.json", report);

  rep.event("evolve", "done",
            {{"evolved", result.records.size()}, {"failures", result.failures.size()}});
  out << out_path.string() << "\n";
  if (fraction > c.max_failure_fraction) {
    rep.event("evolve", "failure threshold exceeded",
              {{"fraction", fraction}, {"threshold", c.max_failure_fraction}});
    return 1;
  }
  return 0;
}

int cmd_mix(const CommonOptions& o, const std::vector<std::string>& inputs,
            const std::vector<int>& rounds, const std::string& output, std::ostream& out,
            Reporter& rep) {
  PipelineConfig c = prepare_config(o);
  if (inputs.empty()) throw UsageError("--input not given");
  if (rounds.empty()) throw UsageError("--rounds not given");
  std::vector<InstructionRecord> all;
  for (const auto& in : inputs) {
    require_file(in, "input dataset");
    auto part = load_dataset(in);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  const auto mixed = mix_rounds(all, std::set<int>(rounds.begin(), rounds.end()));

  const fs::path out_path = output.empty() ? make_run_dir(c, o) / "mixed.jsonl" : fs::path(output);
  for (const auto& in : inputs) {
    if (same_file(out_path, in)) throw UsageError("output would overwrite an input dataset");
  }
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_dataset(out_path, mixed);
  rep.event("mix", "done", {{"records", mixed.size()}, {"output", out_path.string()}});
  out << out_path.string() << "\n";
  return 0;
}

struct AnalyzeArgs {
  std::string dataset;
  std::string test_set;
  std::string tags;
  std::vector<std::size_t> ngrams{13, 8};
  std::string diversity;
  bool no_tags = false;
};

int cmd_analyze(const CommonOptions& o, const AnalyzeArgs& a, std::ostream& out, Reporter& rep) {
  PipelineConfig c = prepare_config(o);
  require_file(a.dataset, "dataset");
  require_file(a.test_set, "test set");
  if (!a.tags.empty()) require_file(a.tags, "tag file");
  if (a.ngrams.empty()) throw UsageError("--ngram needs at least one size");
  DiversityMode mode = c.diversity;
  if (a.diversity == "dataset") {
    mode = DiversityMode::DatasetDistinct;
  } else if (a.diversity == "per_record") {
    mode = DiversityMode::PerRecordUnique;
  } else if (!a.diversity.empty()) {
    throw UsageError("--diversity must be 'dataset' or 'per_record'");
  }

  const auto records = load_dataset(a.dataset);
  const auto tests = load_test_set(a.test_set);

  std::vector<ContaminationReport> reports;
  for (auto n : a.ngrams) {
    if (n == 0) throw UsageError("n-gram size must be >= 1");
    reports.push_back(contamination_check(records, tests, n, {}, c.evolution.workers));
    rep.event("analyze", "contamination",
              {{"n", n}, {"matches", reports.back().match_count}});
  }

  std::optional<TagMetrics> metrics;
  std::vector<std::string> unparseable;
  RunLedger ledger;
  if (!a.no_tags) {
    TagTable tags;
    if (!a.tags.empty()) {
      tags = load_tag_file(a.tags);
    } else {
      const auto templates = load_templates(c);
      Gateway gateway(make_backend(c), c.gateway.options());
      EvolutionContext ectx{gateway, templates, c.evolution};
      auto tagged = tag_records(ectx, records);
      tags = std::move(tagged.tags);
      unparseable = std::move(tagged.unparseable_ids);
      ledger = gateway.ledger();
    }
    metrics = tag_metrics(records, tags, mode);
  }

  const fs::path run_dir = make_run_dir(c, o);
  json reps = json::array();
  for (const auto& r : reports) reps.push_back(r.to_json());
  write_json(run_dir / "contamination.json",
             {{"dataset", fs::path(a.dataset).filename().string()},
              {"test_items", tests.size()},
              {"reports", reps}});
  if (metrics) {
    json t = metrics->to_json();
    t["diversity_mode"] = mode == DiversityMode::DatasetDistinct ? "dataset" : "per_record";
    t["unparseable_ids"] = unparseable;
    write_json(run_dir / "tags.json", t);
  }
  write_json(run_dir / "analyze_ledger.json", ledger.to_json());
  const std::string table = format_report_table(reports, metrics ? &*metrics : nullptr);
  write_text(run_dir / "analysis.txt", table);
  out << table;
  return 0;
}

int cmd_estimate(const CommonOptions& o, std::uint64_t datasize, std::uint64_t rounds,
                 std::ostream& out) {
  PipelineConfig c = prepare_config(o);
  const auto est = estimate_cost(datasize, rounds, c.optimizer.budget());
  out << est.to_json().dump(2) << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evolving-method optimization and instruction dataset evolution"};
  app.name(args.empty() ? "autoevol" : args.front());
  app.require_subcommand(1);

  CommonOptions common;

  auto* opt = app.add_subcommand("optimize", "Optimize the evolving method");
  add_common(opt, common);
  std::string initial;
  opt->add_option("--initial-method", initial, "'default', 'weak' or a method file");

  auto* evo = app.add_subcommand("evolve", "Evolve a dataset with a method");
  add_common(evo, common);
  std::string method_path;
  int rounds = 1;
  std::string evolve_input;
  std::optional<double> max_fail;
  evo->add_option("-m,--method", method_path, "Method text file, 'default' or 'weak'")->required();
  evo->add_option("-r,--rounds", rounds, "Evolution rounds per record");
  evo->add_option("-i,--input", evolve_input, "Dataset to evolve (default: seed dataset)");
  evo->add_option("--max-failure-fraction", max_fail, "Exit 1 above this failure fraction");

  auto* mix = app.add_subcommand("mix", "Mix evolved rounds into one dataset");
  add_common(mix, common);
  std::vector<std::string> mix_inputs;
  std::vector<int> mix_rounds_arg;
  std::string mix_output;
  mix->add_option("-i,--input", mix_inputs, "Evolved dataset(s)")->required();
  mix->add_option("-r,--rounds", mix_rounds_arg, "Rounds to keep, e.g. 1,2,3")
      ->required()
      ->delimiter(',');
  mix->add_option("--output", mix_output, "Output path (default: <run dir>/mixed.jsonl)");

  auto* ana = app.add_subcommand("analyze", "Contamination and tag reports");
  add_common(ana, common);
  AnalyzeArgs aargs;
  ana->add_option("-d,--dataset", aargs.dataset, "Dataset to analyze")->required();
  ana->add_option("-t,--test-set", aargs.test_set, "Benchmark test items")->required();
  ana->add_option("--tags", aargs.tags, "Precomputed tags; skips tagger calls");
  ana->add_option("--ngram", aargs.ngrams, "n-gram sizes")->delimiter(',');
  ana->add_option("--diversity", aargs.diversity, "'dataset' or 'per_record'");
  ana->add_flag("--no-tags", aargs.no_tags, "Skip tag metrics");

  auto* est = app.add_subcommand("estimate-cost", "Estimate API call counts");
  add_common(est, common);
  std::uint64_t datasize = 0;
  std::uint64_t est_rounds = 1;
  est->add_option("--datasize", datasize, "Records to evolve")->required();
  est->add_option("--rounds", est_rounds, "Rounds per record");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  if (args.empty()) argv.push_back("autoevol");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  Reporter rep(err, common.log_json, common.quiet);
  try {
    if (opt->parsed()) {
      return cmd_optimize(common, initial.empty() ? std::nullopt : std::optional(initial), out,
                          rep);
    }
    if (evo->parsed()) {
      return cmd_evolve(common, method_path, rounds, evolve_input, max_fail, out, rep);
    }
    if (mix->parsed()) return cmd_mix(common, mix_inputs, mix_rounds_arg, mix_output, out, rep);
    if (ana->parsed()) return cmd_analyze(common, aargs, out, rep);
    if (est->parsed()) return cmd_estimate(common, datasize, est_rounds, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << " (line " << e.line() << ")\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const SizeError& e) {
    err << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "aborted: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "fatal: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace autoevol
