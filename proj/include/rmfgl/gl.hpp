#pragma once

#include <cstdint>
#include <vector>

#include "rmfgl/model.hpp"
#include "rmfgl/trajectory.hpp"

namespace rmfgl {

/// Uniform time grid 0 = t_0 < ... < t_G = T.
std::vector<double> make_grid(double horizon, double step);

/// Per-stream spike counts, intensities and intensity integrals sampled on the
/// grid, plus per ordered pair (j -> i) arrival counts.
struct CountingSummary {
  int K = 0;
  std::vector<double> times;
  std::vector<std::int64_t> counts;    // [g*K + i]   N_i([0, t_g])
  std::vector<double> lambda;          // [g*K + i]   lambda_i(t_g)
  std::vector<double> integral;        // [g*K + i]   int_0^t_g lambda_i
  std::vector<std::int64_t> arrivals;  // [(g*K + j)*K + i] arrivals j -> i on [0, t_g]

  std::int64_t count(std::size_t g, int i) const { return counts[g * K + i]; }
  std::int64_t arrival(std::size_t g, int from, int to) const {
    return arrivals[(g * K + from) * K + to];
  }
};

struct GlOptions {
  double grid_step = 0.05;
  bool record_trajectories = false;
  double h_max = 1000.0;
};

struct GlPath {
  std::vector<Trajectory> trajectories;  // filled when requested
  CountingSummary summary;
};

/// Exact sample path of the finite GL network on [0, T]. With every tau
/// infinite the intensities are piecewise constant and the next event is
/// drawn by the direct method; otherwise Ogata thinning with the dominating
/// rate sum_i max(lambda_i(now), b_i), refreshed after every proposal.
GlPath simulate_gl(const ValidatedParams& params, const InitialCondition& init, double T,
                   std::uint64_t master_seed, std::uint64_t path_id, const GlOptions& opts = {});

/// Law of N([0,t]) for an isolated neuron with tau infinite: the first gap is
/// Exp(lambda0), later gaps Exp(r).
struct SingleNeuronLaw {
  std::vector<double> pmf;  // pmf[n] = P(N = n), truncated once the tail < 1e-16
  double tail = 0.0;        // mass beyond pmf.size() - 1
  double mean_intensity = 0.0;
  double mean_count = 0.0;
};

SingleNeuronLaw single_neuron_law(double lambda0, double r, double t);

}  // namespace rmfgl
