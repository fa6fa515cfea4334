#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "autoevol/cli.hpp"
#include "autoevol/config.hpp"
#include "autoevol/data_model.hpp"
#include "autoevol/errors.hpp"
#include "test_support.hpp"

using namespace autoevol;
using namespace autoevol::testing;
using nlohmann::json;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "autoevol");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string mocks(const std::string& name) { return (source_dir() / "mocks" / name).string(); }
std::string data(const std::string& name) { return (source_dir() / "data" / name).string(); }

}  // namespace

TEST(Config, DefaultsAndNesting) {
  const auto c = config_from_json(json::parse(R"({
    "paths": {"seed_dataset": "seed.jsonl", "mock_script": "/abs/mock.json"},
    "optimizer": {"samples": 3, "max_steps": 4},
    "evolution": {"workers": 5},
    "gateway": {"endpoint": "http://x", "models": {"evol": "m1"}},
    "rng_seed": 9, "diversity": "per_record"})"),
                                  "/base");
  EXPECT_EQ(c.seed_dataset, std::filesystem::path("/base/seed.jsonl"));
  EXPECT_EQ(*c.mock_script, std::filesystem::path("/abs/mock.json"));
  EXPECT_EQ(c.optimizer.samples, 3u);
  EXPECT_EQ(c.optimizer.max_steps, 4);
  EXPECT_EQ(c.optimizer.batch_size, 10u);
  EXPECT_EQ(c.evolution.workers, 5u);
  EXPECT_EQ(c.gateway.models.at(RoleTag::Evol), "m1");
  EXPECT_EQ(c.rng_seed, 9u);
  EXPECT_EQ(c.diversity, DiversityMode::PerRecordUnique);
  EXPECT_EQ(c.initial_method, "default");
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(config_from_json(json::parse(R"({"bogus": 1})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"optimizer": {"batchsize": 1}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"gateway": {"models": {"judge": "x"}}})")),
               ConfigError);
}

TEST(Config, ValidationAndTypes) {
  EXPECT_THROW(config_from_json(json::parse(R"({"optimizer": {"samples": "three"}})")), ConfigError);
  auto c = config_from_json(json::parse(R"({"max_failure_fraction": 1.5})"));
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, SecretsRedacted) {
  auto c = config_from_json(json::parse(R"({"gateway": {"api_key": "sk-secret"}})"));
  EXPECT_EQ(c.to_json().dump().find("sk-secret"), std::string::npos);
}

TEST(Config, EnvOverrideEndpoint) {
  auto c = config_from_json(json::parse(R"({"gateway": {"endpoint": "http://a"}})"));
  ::setenv("AUTOEVOL_ENDPOINT", "http://b", 1);
  apply_env_overrides(c);
  ::unsetenv("AUTOEVOL_ENDPOINT");
  EXPECT_EQ(c.gateway.endpoint, "http://b");
}

TEST(Config, HttpBackendNeedsModelsAndKey) {
  auto c = config_from_json(json::parse(R"({"gateway": {"endpoint": "http://127.0.0.1:9/v1"}})"));
  EXPECT_THROW(make_backend(c), ConfigError);
}

TEST(Config, InitialMethodChoices) {
  const auto t = TemplateSet::builtin();
  PipelineConfig c;
  EXPECT_EQ(initial_method_text(c, t), t.get(TemplateName::InitialMethod).body());
  c.initial_method = "weak";
  EXPECT_EQ(initial_method_text(c, t), t.get(TemplateName::WeakInitialMethod).body());
  TempDir d;
  write_file(d / "m.txt", "Custom\n#Finally Rewritten Instruction#\n{instruction}\n");
  c.initial_method = (d / "m.txt").string();
  EXPECT_NE(initial_method_text(c, t).find("Custom"), std::string::npos);
  c.initial_method = (d / "none.txt").string();
  EXPECT_THROW(initial_method_text(c, t), Error);
}

TEST(Cli, HelpAndUnknownCommand) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_NE(cli({}).code, 0);
}

TEST(Cli, EstimateCost) {
  const auto r = cli({"estimate-cost", "--datasize", "10000", "--rounds", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["full_evolution_calls"], 100000);
  EXPECT_EQ(j["optimization_calls"], 5200);
  EXPECT_EQ(cli({"estimate-cost"}).code, 2);
}

TEST(Cli, MissingInputsAreUsageErrors) {
  TempDir d;
  EXPECT_EQ(cli({"optimize", "-o", d.str(), "--seed-data", (d / "nope.jsonl").string(), "--mock",
                 mocks("pipeline.json")})
                .code,
            2);
  EXPECT_EQ(cli({"evolve", "-o", d.str(), "--mock", mocks("pipeline.json")}).code, 2);
  write_file(d / "bad.json", "{not json");
  EXPECT_EQ(cli({"evolve", "-c", (d / "bad.json").string(), "-m", "x"}).code, 2);
  write_file(d / "unknown.json", R"({"nope": true})");
  EXPECT_EQ(cli({"estimate-cost", "--datasize", "1", "-c", (d / "unknown.json").string()}).code, 2);
}

TEST(Cli, MalformedDatasetReportsLine) {
  TempDir d;
  write_file(d / "seed.jsonl",
             "{\"id\":\"a\",\"source\":\"s\",\"turns\":[{\"role\":\"user\",\"text\":\"q\"}]}\n{oops\n");
  const auto r = cli({"evolve", "-o", d.str(), "-m", "default", "-i", (d / "seed.jsonl").string(),
                      "--mock", mocks("pipeline.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST(Cli, EvolveWritesOutputsAndLeavesInputUntouched) {
  TempDir d;
  const auto seed = d / "seed.jsonl";
  write_file(seed, read_file(data("sample_seed.jsonl")));
  const auto before = read_file(seed);
  const auto r = cli({"evolve", "-c", mocks("pipeline.config.json"), "-o", d.str(), "--run-id",
                      "r1", "-m", "default", "-r", "2", "-i", seed.string(), "-q"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(seed), before);
  const auto evolved = load_dataset(d / "r1" / "evolved.jsonl");
  EXPECT_EQ(evolved.size(), 160u);
  const auto report = json::parse(read_file(d / "r1" / "evolve_report.json"));
  EXPECT_EQ(report["evolved_records"], 160);
}

TEST(Cli, EvolveFailureThresholdExitsOne) {
  TempDir d;
  write_file(d / "mock.json", R"({"rules":[{"role":"evol","responses":[{"error":"api","message":"no"}]}]})");
  const auto r = cli({"evolve", "-o", d.str(), "--run-id", "x", "-m", "default", "-i",
                      data("sample_seed.jsonl"), "--mock", (d / "mock.json").string(), "-q"});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(std::filesystem::exists(d / "x" / "evolve_report.json"));
}

TEST(Cli, AnalyzeWithPrecomputedTagsSkipsTagger) {
  TempDir d;
  const auto c = planted_corpus(5, 40, 6, 14);
  save_dataset(d / "ds.jsonl", c.records);
  std::string tests;
  for (const auto& t : c.tests) tests += t + "\n";
  write_file(d / "tests.txt", tests);
  json tags = json::object();
  for (const auto& r : c.records) tags[r.id] = {"x", r.id};
  write_file(d / "tags.json", tags.dump());
  write_file(d / "mock.json", R"({"rules":[]})");
  const std::vector<std::string> args = {
      "analyze", "-o", d.str(), "--run-id", "a", "-d", (d / "ds.jsonl").string(), "-t",
      (d / "tests.txt").string(), "--tags", (d / "tags.json").string(), "--mock",
      (d / "mock.json").string(), "-q"};
  const auto r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ledger = json::parse(read_file(d / "a" / "analyze_ledger.json"));
  EXPECT_EQ(ledger["total_calls"], 0);
  const auto cont = json::parse(read_file(d / "a" / "contamination.json"));
  std::size_t n13 = 0, n8 = 0;
  for (const auto& rep : cont["reports"]) {
    (rep["n"] == 13 ? n13 : n8) = rep["match_count"].get<std::size_t>();
  }
  EXPECT_EQ(n13, 6u);
  EXPECT_EQ(n8, 6u);
  const auto metrics = json::parse(read_file(d / "a" / "tags.json"));
  EXPECT_DOUBLE_EQ(metrics["complexity"].get<double>(), 2.0);
  EXPECT_NE(r.out.find("n-gram"), std::string::npos);

  const auto first = read_file(d / "a" / "contamination.json");
  ASSERT_EQ(cli(args).code, 0);
  EXPECT_EQ(read_file(d / "a" / "contamination.json"), first);
}

TEST(Cli, OptimizeIsReproducible) {
  TempDir d;
  auto go = [&](const std::string& id) {
    return cli({"optimize", "-c", mocks("optimize_schedule.config.json"), "-o", d.str(),
                "--run-id", id, "-q"});
  };
  const auto a = go("a");
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(go("b").code, 0);
  EXPECT_EQ(read_file(d / "a" / "audit.json"), read_file(d / "b" / "audit.json"));
  EXPECT_EQ(read_file(d / "a" / "method_best.txt"), read_file(d / "b" / "method_best.txt"));
  const auto audit = json::parse(read_file(d / "a" / "audit.json"));
  EXPECT_EQ(audit["termination"]["steps_completed"], 3);
  EXPECT_EQ(audit["best"]["method"]["step"], 2);
}
