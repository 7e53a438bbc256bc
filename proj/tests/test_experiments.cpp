#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <functional>

#include <sys/wait.h>

#include "rmfgl/csv.hpp"
#include "rmfgl/error.hpp"
#include "rmfgl/experiments.hpp"

using namespace rmfgl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rmfgl_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config() {
  return config_from_json(json::parse(R"({
    "params": {"k": 2, "mu": [[0, 1], [0.5, 0]], "b": [1, 1.5], "r": [0.5, 1]},
    "horizon": 0.5, "m_list": [3, 6], "paths": 10000, "seed": 5, "grid_step": 0.05
  })"));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Sha256, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(canonical_json(json::parse(R"({"b": 1, "a": [2, 3]})")), R"({"a":[2,3],"b":1})");
}

TEST(CsvNumber, TwelveSignificantDigits) {
  EXPECT_EQ(csv_number(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(csv_number(2.0), "2");
}

TEST(WeightDenominator, SmallRationals) {
  const auto p = validate_params(NetworkParams::from_rows({{0, 1}, {0.5, 0}}, {1, 1}, {1, 1}));
  EXPECT_EQ(weight_denominator(p), 2);
  const auto q = validate_params(NetworkParams::from_rows({{0, 0.1234567}, {0.5, 0}}, {1, 1}, {1, 1}));
  EXPECT_FALSE(weight_denominator(q).has_value());
}

TEST(RunExperiment, SteinWritesManifestAndSummary) {
  const auto dir = scratch("stein");
  RunOptions opts;
  opts.out = dir;
  opts.stein_cases = 20;
  const auto res = run_experiment(small_config(), "stein", opts);
  EXPECT_TRUE(res.checks_pass);
  EXPECT_FALSE(fs::exists(dir / ".incomplete"));
  const auto manifest = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["schema_version"], kSummarySchemaVersion);
  EXPECT_EQ(manifest["seed"], 5);
  EXPECT_EQ(manifest["files"]["stein.csv"], sha256_file(dir / "stein.csv"));
  const auto summary = json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(summary["schema_version"], kSummarySchemaVersion);
  EXPECT_TRUE(summary["stein_equation"].get<bool>());

  EXPECT_EQ(code_of([&] { run_experiment(small_config(), "stein", opts); }), ErrorCode::OutputDirNotEmpty);
  opts.force = true;
  EXPECT_TRUE(run_experiment(small_config(), "stein", opts).checks_pass);
  opts.force = false;
  EXPECT_EQ(code_of([&] { run_experiment(small_config(), "bogus", opts); }), ErrorCode::ConfigInvalid);
}

TEST(RunExperiment, ConfigHashIgnoresOutputDir) {
  RunOptions a, b;
  a.out = scratch("hash_a");
  b.out = scratch("hash_b");
  a.stein_cases = b.stein_cases = 5;
  run_experiment(small_config(), "stein", a);
  run_experiment(small_config(), "stein", b);
  const auto ma = json::parse(slurp(*a.out / "manifest.json"));
  const auto mb = json::parse(slurp(*b.out / "manifest.json"));
  EXPECT_EQ(ma["config_hash"], mb["config_hash"]);
  EXPECT_EQ(ma["files"], mb["files"]);
}

TEST(RunExperiment, ConvergenceDeterministicAcrossThreads) {
  RunOptions one, three;
  one.out = scratch("conv_1");
  three.out = scratch("conv_3");
  one.threads = 1;
  three.threads = 3;
  one.picard_paths = three.picard_paths = 5000;
  const auto r1 = run_experiment(small_config(), "convergence", one);
  const auto r3 = run_experiment(small_config(), "convergence", three);
  for (const auto& key : {"tv_monotone", "bound_dominates", "mean_equality", "tlln_decreasing"})
    EXPECT_TRUE(r1.summary.contains(key)) << key;
  const auto m1 = json::parse(slurp(*one.out / "manifest.json"));
  const auto m3 = json::parse(slurp(*three.out / "manifest.json"));
  EXPECT_EQ(m1["files"], m3["files"]);
  for (const auto& name : {"tv.csv", "tlln.csv", "mean_equality.csv", "means.csv", "snapshots.csv", "tallies.csv"})
    EXPECT_TRUE(fs::exists(*one.out / name)) << name;

  const auto header = read_csv(*one.out / "snapshots.csv").header;
  EXPECT_EQ(header, (std::vector<std::string>{"path", "t", "M", "replica", "neuron", "lambda", "n_count"}));
  const auto tally = read_csv(*one.out / "tallies.csv").header;
  EXPECT_EQ(tally, (std::vector<std::string>{"path", "t", "M", "focal_replica", "focal_neuron",
                                             "source_neuron", "channel_count"}));
  EXPECT_EQ(read_csv(*one.out / "means.csv").header,
            (std::vector<std::string>{"t", "neuron", "mean", "se", "cumulative"}));

  // Summary recomputed from the CSVs agrees with the run.
  const auto again = emit_summary(*one.out);
  for (const auto& key : {"tv_monotone", "bound_dominates", "mean_equality", "tlln_decreasing"})
    EXPECT_EQ(again[key], r1.summary[key]) << key;

  fs::remove(*one.out / "tv.csv");
  EXPECT_EQ(code_of([&] { emit_summary(*one.out); }), ErrorCode::IncompleteRun);
}

TEST(Simtool, ExitCodes) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  const auto cfg = dir / "cfg.json";
  {
    std::ofstream(cfg) << config_to_json(small_config()).dump();
  }
  const std::string tool = SIMTOOL_PATH;
  const auto run = [&](const std::string& args) {
    const int status = std::system((tool + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run("stein --config " + cfg.string() + " --out " + (dir / "out").string() + " --cases 5"), 0);
  EXPECT_EQ(run("stein --config " + cfg.string() + " --out " + (dir / "out").string()), 2);
  EXPECT_EQ(run("stein --config " + cfg.string() + " --out " + (dir / "out").string() + " --force --seed 9"), 0);
  EXPECT_EQ(json::parse(slurp(dir / "out" / "manifest.json"))["seed"], 9);
  {
    std::ofstream(dir / "bad.json") << R"({"params": {"k": 1}, "surprise": true})";
  }
  EXPECT_EQ(run("gl --config " + (dir / "bad.json").string() + " --out " + (dir / "o2").string()), 2);
  EXPECT_EQ(run("nonsense"), 2);
}
