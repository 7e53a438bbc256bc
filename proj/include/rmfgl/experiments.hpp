#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmfgl/limit.hpp"
#include "rmfgl/model.hpp"
#include "rmfgl/rmf.hpp"
#include "rmfgl/stats.hpp"

namespace rmfgl {

inline constexpr int kSummarySchemaVersion = 1;

// ---------------------------------------------------------------------------
// Monte Carlo sweeps shared by the CLI and the acceptance suite.

struct RmfSweepOptions {
  Engine engine = Engine::Direct;
  double grid_step = 0.05;
  double t_eval = 0.0;  // time of the channel statistics; 0 means the horizon
  int threads = 0;
  int dump_paths = 0;   // paths whose snapshots and tallies are kept as CSV rows
  bool keep_final_counts = false;
};

/// Aggregates of `paths` RMF paths for one M. Replica 1 is the focal replica.
struct RmfSweep {
  int M = 0;
  int K = 0;
  std::int64_t paths = 0;
  double t_eval = 0.0;
  std::vector<double> times;
  MeanSeries focal_mean;                       // lambda_{1,i}(t_g)
  std::vector<RunningMoments> focal_lambda;    // [g*K + i]
  std::vector<RunningMoments> focal_square;    // [g*K + i]  lambda_{1,i}(t_g)^2
  std::vector<RunningMoments> count;           // [g*K + i]  replica average of N_{m,i}
  std::vector<RunningMoments> integral;        // [g*K + i]  replica average of int lambda_{m,i}
  std::vector<ChannelSamples> channels;        // [i*K + j]  j -> (1, i) at t_eval
  std::vector<ChannelSamples> sources;         // [j]  others_sum / source_count only
  std::vector<std::vector<std::int64_t>> final_counts;  // N_{m,i}([0,T]) per path
  std::string snapshot_rows;
  std::string tally_rows;
};

RmfSweep sweep_rmf(const ValidatedParams& params, const InitialCondition& init, int M, double T,
                   std::int64_t paths, std::uint64_t master_seed, const RmfSweepOptions& opts);

struct GlSweep {
  std::int64_t paths = 0;
  std::vector<double> times;
  std::vector<RunningMoments> count, integral;  // [g*K + i]
  std::vector<std::vector<std::int64_t>> final_counts;  // N_i([0,T]) per path
};

GlSweep sweep_gl(const ValidatedParams& params, const InitialCondition& init, double T,
                 std::int64_t paths, std::uint64_t master_seed, double grid_step, int threads);

/// Stationary-window residual of the MGF equation for one M.
MgfResult mgf_experiment(const ValidatedParams& params, const InitialCondition& init, int M,
                         const std::vector<double>& u, std::int64_t paths, double burn_in,
                         double window, double sample_step, std::uint64_t master_seed,
                         int threads, double gap_threshold = 2.0);

/// Seed of the independent Picard run paired with an RMF run of `master_seed`.
std::uint64_t picard_seed(std::uint64_t master_seed);

/// Smallest q <= max_den with q * mu integral for every off-diagonal weight.
std::optional<int> weight_denominator(const ValidatedParams& params, int max_den = 64);

// ---------------------------------------------------------------------------
// Runner.

struct RunOptions {
  int threads = 0;
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  int dump_paths = 16;
  double t_eval = 0.0;
  int picard_iters = 30;
  double picard_tol = 1e-3;
  std::int64_t picard_paths = 0;  // 0 = config paths
  int phi_iterations = 5;
  std::int64_t phi_paths = 0;     // 0 = min(config paths, 10^4)
  std::vector<double> stein_lambdas{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  int stein_cases = 200;
  double mgf_u = 0.05;
  double burn_in = 0.0;  // 0 = 50 / min r
  double window = 10.0;
  double sample_step = 0.1;
};

struct RunResult {
  std::filesystem::path dir;
  bool checks_pass = false;
  nlohmann::json summary;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"gl",          "rmf",   "limit", "phi",
                                              "convergence", "stein", "mgf"};
  return names;
}

/// Runs one subcommand and writes its CSVs, summary.json and manifest.json.
/// While running, the directory holds a `.incomplete` marker.
RunResult run_experiment(const ExperimentConfig& cfg, const std::string& subcommand,
                         const RunOptions& opts);

/// Pass/fail booleans of a finished `convergence` run, recomputed from its
/// CSVs. Throws IncompleteRun when one is missing.
nlohmann::json emit_summary(const std::filesystem::path& dir);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);
/// Sorted keys, no whitespace.
std::string canonical_json(const nlohmann::json& j);

}  // namespace rmfgl
