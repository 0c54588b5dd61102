#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "test_support.hpp"
#include "upolicy/error.hpp"
#include "upolicy/parallel.hpp"
#include "upolicy/pipeline.hpp"

using namespace upolicy;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "upolicy");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = pipeline::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Desk-sized config that exercises every pipeline step in a few seconds.
fs::path small_config(const fs::path& dir) {
  const auto path = dir / "small.json";
  std::ofstream(path) << R"({
    "seed": 77,
    "synthetic": {"n_train": 2000, "n_test": 1000},
    "forest": {"n_forests": 2, "n_trees": 3, "max_depth": 4, "min_leaf_per_arm": 15},
    "ope": {"n_grid": 10, "bootstrap_reps": 20}
  })";
  return path;
}

/// Relative path -> contents for every file except the manifest.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    files[fs::relative(e.path(), root).string()] = fixtures::slurp(e.path());
  }
  return files;
}

}  // namespace

TEST(Config, StrictKeysAndOverrides) {
  auto c = pipeline::resolve_config(nlohmann::json::parse(R"({"forest": {"max_depth": 5}})"));
  EXPECT_EQ(c["forest"]["max_depth"], 5);
  EXPECT_EQ(c["forest"]["n_trees"], 20);
  try {
    pipeline::resolve_config(nlohmann::json::parse(R"({"forest": {"bogus": 1}})"));
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()), "unknown config key 'bogus' in section 'forest'");
  }
  EXPECT_THROW(pipeline::resolve_config(nlohmann::json::parse(R"({"forest": {"max_depth": "deep"}})")), ConfigError);
  EXPECT_THROW(pipeline::resolve_config(nlohmann::json::parse(R"({"nope": 1})")), ConfigError);

  pipeline::apply_override(c, "policy.threshold=0.05");
  EXPECT_EQ(c["policy"]["threshold"], 0.05);
  pipeline::apply_override(c, "forest.divergence=euclidean");
  EXPECT_EQ(c["forest"]["divergence"], "euclidean");
  pipeline::apply_override(c, "trimming.low=0");
  EXPECT_TRUE(c["trimming"]["low"].is_number_float());
  EXPECT_THROW(pipeline::apply_override(c, "forest.max_depth"), ConfigError);
  EXPECT_THROW(pipeline::apply_override(c, "forest.nothing=1"), ConfigError);

  EXPECT_EQ(pipeline::config_hash(pipeline::default_config()), pipeline::config_hash(pipeline::resolve_config(nlohmann::json::object())));
  EXPECT_NE(pipeline::config_hash(c), pipeline::config_hash(pipeline::default_config()));
}

TEST(Cli, UsageErrorsExitOneWithOneJsonLine) {
  const auto dir = fixtures::scratch_dir("cli_usage");
  const auto r = cli({"train", "--set", "forest.bogus=1", "-o", (dir / "out").string()});
  EXPECT_EQ(r.code, 1);
  ASSERT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  const auto line = nlohmann::json::parse(r.err);
  EXPECT_EQ(line["error"]["category"], "usage");
  EXPECT_EQ(line["error"]["exit_code"], 1);
  EXPECT_NE(line["error"]["message"].get<std::string>().find("bogus"), std::string::npos);

  EXPECT_EQ(cli({"no-such-command"}).code, 1);
  EXPECT_EQ(cli({"train", "--unknown-flag"}).code, 1);
  EXPECT_EQ(cli({"train", "-c", (dir / "missing.json").string()}).code, 1);
}

TEST(Cli, DataErrorsExitTwoAndQuarantineStaging) {
  const auto dir = fixtures::scratch_dir("cli_data");
  const auto out = dir / "out";
  const auto r =
      cli({"trial-analyze", "--set", "trial.counts_path=" + (dir / "absent.csv").string(), "-o", out.string()});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"]["category"], "data");
  EXPECT_FALSE(fs::exists(out));
  EXPECT_FALSE(fs::exists(dir / "out.staging"));
  ASSERT_TRUE(fs::exists(dir / "out.failed" / "error.txt"));
  EXPECT_FALSE(fixtures::slurp(dir / "out.failed" / "error.txt").empty());

  // A later step without its inputs names the producing command.
  const auto missing = cli({"train", "-o", (dir / "empty").string()});
  EXPECT_EQ(missing.code, 2);
}

TEST(Cli, NumericalErrorsExitThree) {
  const auto dir = fixtures::scratch_dir("cli_numerical");
  std::ofstream(dir / "train.csv") << "id,day,action,outcome,propensity,true_cate,y0,y1,n_x0\n"
                                      "1,1,0,0,0.5,,,,0.1\n"
                                      "2,1,0,1,0.5,,,,0.2\n"
                                      "3,1,0,0,0.5,,,,0.3\n";
  const auto r = cli({"fit-propensity", "--set", "propensity.l2=0", "-i", dir.string(), "-o", (dir / "out").string()});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"]["category"], "numerical");
}

TEST(Cli, TrialAnalyzeReproducesBundledCounts) {
  const auto dir = fixtures::scratch_dir("cli_trial");
  const auto counts = fs::path(UPOLICY_SOURCE_DIR) / "data" / "reference_trial_counts.csv";
  const auto r = cli({"trial-analyze", "--set", "trial.counts_path=" + counts.string(), "-o", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(fixtures::slurp(dir / "out" / "trial_analysis.json"));
  EXPECT_NEAR(doc["overall"]["one_sided_p"].get<double>(), 0.026513, 5e-7);
  EXPECT_TRUE(fs::exists(dir / "out" / "trial_table.csv"));
  const auto manifest = nlohmann::json::parse(fixtures::slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "trial-analyze");
  EXPECT_EQ(manifest["tool_version"], pipeline::kToolVersion);
}

TEST(Cli, PipelineIsDeterministicAcrossRunsAndThreadCounts) {
  const auto dir = fixtures::scratch_dir("cli_pipeline");
  const auto config = small_config(dir);
  ASSERT_EQ(cli({"pipeline", "-c", config.string(), "-o", (dir / "a").string(), "--threads", "1"}).code, 0);
  ASSERT_EQ(cli({"pipeline", "-c", config.string(), "-o", (dir / "b").string(), "--threads", "1"}).code, 0);
  ASSERT_EQ(cli({"pipeline", "-c", config.string(), "-o", (dir / "c").string(), "--threads", "8"}).code, 0);
  set_max_threads(0);
  const auto a = snapshot(dir / "a");
  for (const char* name : {"train.csv", "ensemble.json", "policy.json", "ope_curve.csv", "policy_values.json",
                           "evaluation.json", "surrogate.txt", "trial_analysis.json", "effective_config.json"})
    EXPECT_TRUE(a.count(name)) << name;
  EXPECT_EQ(a, snapshot(dir / "b"));
  EXPECT_EQ(a, snapshot(dir / "c"));

  const auto manifest = nlohmann::json::parse(fixtures::slurp(dir / "a" / "manifest.json"));
  EXPECT_EQ(manifest["format"], "upolicy.run_manifest");
  EXPECT_EQ(manifest["seed"], 77);
  EXPECT_FALSE(manifest["steps"].empty());
}

TEST(Cli, StepsChainThroughTheOutputDirectory) {
  const auto dir = fixtures::scratch_dir("cli_steps");
  const auto config = small_config(dir);
  const auto out = (dir / "run").string();
  for (const char* step : {"synth", "select-features", "trim", "train", "evaluate", "policy-export"})
    ASSERT_EQ(cli({step, "-c", config.string(), "-o", out}).code, 0) << step;
  EXPECT_TRUE(fs::exists(dir / "run" / "policy.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "qini.csv"));
}

TEST(Cli, RepeatDaysWritesOneDirectoryPerDay) {
  const auto dir = fixtures::scratch_dir("cli_days");
  const auto config = small_config(dir);
  const auto r = cli({"pipeline", "-c", config.string(), "--set", "synthetic.n_days=2", "--repeat-days", "2", "-o",
                      (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "out" / "day_1" / "policy.json"));
  EXPECT_TRUE(fs::exists(dir / "out" / "day_2" / "policy.json"));
}
