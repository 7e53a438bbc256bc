#pragma once

#include <cstdint>
#include <vector>

#include "rmfgl/model.hpp"
#include "rmfgl/trajectory.hpp"

namespace rmfgl {

struct RmfOptions {
  double grid_step = 0.05;
  Engine engine = Engine::Direct;
  std::vector<int> focal_replicas{0};  // 0-based replicas whose arrivals are tallied
  bool record_trajectories = false;
  bool record_spikes = false;   // spike trains with embedding ids, per (m, i)
  bool record_routing = false;  // one RoutingRecord per (spike, target)
  double h_max = 1000.0;
};

/// One routing draw: spike of (source_replica, source_neuron) at `time`
/// delivered to neuron `target_neuron` of replica `chosen` (all 0-based).
struct RoutingRecord {
  double time = 0.0;
  int source_replica = 0;
  int source_neuron = 0;
  int target_neuron = 0;
  int chosen = 0;
};

/// Arrival tallies of one focal replica: channel[(g*K + i)*K + j] counts the
/// spikes of neuron j (any replica) routed to (replica, i) during [0, t_g].
struct FocalTally {
  int replica = 0;
  std::vector<std::int64_t> channel;
};

/// Grid snapshots of one RMF path plus whatever optional records were asked for.
struct RmfPath {
  int M = 0;
  int K = 0;
  std::vector<double> times;
  std::vector<std::int64_t> counts;  // [(g*M + m)*K + i]  N_{m,i}([0, t_g])
  std::vector<double> lambda;        // [(g*M + m)*K + i]  lambda_{m,i}(t_g)
  std::vector<double> integral;      // [(g*M + m)*K + i]  int_0^t_g lambda_{m,i}
  std::vector<FocalTally> tallies;

  std::vector<std::vector<Spike>> spikes;  // [m*K + i]
  std::vector<RoutingRecord> routing;
  std::vector<Trajectory> trajectories;    // [m*K + i]

  std::size_t cell(std::size_t g, int m, int i) const {
    return (g * static_cast<std::size_t>(M) + m) * K + i;
  }
  std::int64_t count(std::size_t g, int m, int i) const { return counts[cell(g, m, i)]; }
  double intensity(std::size_t g, int m, int i) const { return lambda[cell(g, m, i)]; }
  /// Index of grid time t; throws GridMismatch when t is not a grid time.
  std::size_t grid_index(double t) const;
  const FocalTally& tally_for(int replica) const;
};

/// Exact sample of the M-replica dynamics on [0, T]. The embedded engine
/// thins stream (m, i) against the field keyed (m+1, i+1, Embedding) of the
/// path seed and routes with the marks of the spiking point, so runs that
/// differ only in M share every field point.
RmfPath simulate_rmf(const ValidatedParams& params, int M, const InitialCondition& init, double T,
                     std::uint64_t master_seed, std::uint64_t path_id, const RmfOptions& opts = {});

struct ArrivalDecomposition {
  std::vector<std::int64_t> channels;  // [j], zero for j == i
  double weighted = 0.0;               // sum_j mu_{j->i} channels[j]
};

ArrivalDecomposition arrival_decomposition(const RmfPath& path, const ValidatedParams& params,
                                           int m, int i, double t);

// ---------------------------------------------------------------------------
// Conditional Bernoulli structure of the routing indicators.

/// Routing indicators of the spikes of one source stream (n, j) towards a
/// focal (m, i), in spike order, together with N_{n,j}([0, t]).
struct RoutingSample {
  std::int64_t source_count = 0;
  std::vector<std::uint8_t> hits;
};

/// Samples for every source replica n != m of neuron j, from a path recorded
/// with record_routing.
std::vector<RoutingSample> routing_samples(const RmfPath& path, int m, int i, int j, double t);

struct RoutingBin {
  std::int64_t source_count = 0;  // bin label
  std::int64_t indicators = 0;
  double mean = 0.0;
  double z_mean = 0.0;
  std::int64_t pairs = 0;
  double correlation = 0.0;  // NaN when undefined (constant indicators)
  double z_correlation = 0.0;
  bool pass = true;
};

struct RoutingReport {
  int M = 0;
  double expected = 0.0;
  std::vector<RoutingBin> bins;
  bool pass = true;
};

/// Per bin of N_{n,j}: indicator mean against 1/(M-1) and lag-one correlation
/// against 0, both with 3 sigma bands. Bins with fewer than `min_bin`
/// indicators are dropped. Needs samples from at least 10^4 paths.
RoutingReport routing_conditional_check(const std::vector<RoutingSample>& samples, int M,
                                        std::int64_t paths, std::int64_t min_bin = 100);

}  // namespace rmfgl
