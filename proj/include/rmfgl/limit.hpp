#pragma once

#include <cstdint>
#include <vector>

#include "rmfgl/model.hpp"
#include "rmfgl/trajectory.hpp"

namespace rmfgl {

/// Estimate of t -> E[lambda~_j(t)] on a uniform grid. Between grid points
/// the rate is the linear interpolant; `cumulative` holds its exact integral.
struct MeanIntensityGrid {
  int K = 0;
  std::vector<double> times;
  std::vector<double> mean;        // [g*K + j]
  std::vector<double> se;          // [g*K + j], 0 where exact
  std::vector<double> cumulative;  // [g*K + j]

  double horizon() const { return times.back(); }
  double step() const { return times[1] - times[0]; }
  double value(int j, double t) const;
  /// int_0^t of the interpolated rate.
  double integral(int j, double t) const;
  /// Rebuilds `cumulative` from `mean`.
  void integrate();

  static MeanIntensityGrid constant(int K, const std::vector<double>& times,
                                    const std::vector<double>& level);
};

struct LimitOptions {
  bool record_trajectories = false;
  double h_max = 1000.0;
};

/// One sample of the limit process. Neurons are independent: arrivals on
/// channel j -> i are the points of field (j+1, i+1) under m_j, own spikes of
/// neuron i are thinned from field (i+1, i+1).
struct LimitPath {
  int K = 0;
  std::vector<double> times;
  std::vector<double> lambda;          // [g*K + i]
  std::vector<std::int64_t> counts;    // [g*K + i]  own spikes
  std::vector<std::int64_t> arrivals;  // [(g*K + j)*K + i]  A~_{j->i}([0, t_g])
  std::vector<Trajectory> trajectories;

  std::int64_t arrival(std::size_t g, int from, int to) const {
    return arrivals[(g * K + from) * K + to];
  }
};

/// Sample path on the grid of `means` truncated at T. Throws GridTooShort when
/// the grid does not reach T.
LimitPath simulate_limit_path(const ValidatedParams& params, const InitialCondition& init,
                              const MeanIntensityGrid& means, double T, std::uint64_t master_seed,
                              std::uint64_t path_id, const LimitOptions& opts = {});

std::vector<LimitPath> simulate_limit(const ValidatedParams& params, const InitialCondition& init,
                                      const MeanIntensityGrid& means, double T, std::int64_t paths,
                                      std::uint64_t master_seed, const LimitOptions& opts = {});

struct PicardOptions {
  int max_iters = 30;
  double tol = 1e-3;
  double grid_step = 0.05;
  double h_max = 1000.0;
  int threads = 0;  // 0 = hardware concurrency
};

struct PicardResult {
  MeanIntensityGrid means;
  std::vector<double> gaps;   // sup-norm distance between successive grids
  std::vector<double> noise;  // pooled standard error matching each gap
  int iterations = 0;
  bool converged = false;
};

/// Fixed point of m -> E[lambda~(.)] under arrival rates m. All iterations
/// reuse the same path seeds, so successive grids differ only through m.
PicardResult picard_solve_means(const ValidatedParams& params, const InitialCondition& init,
                                double T, std::int64_t paths, std::uint64_t master_seed,
                                const PicardOptions& opts = {});

// ---------------------------------------------------------------------------
// Phi map.

/// Input point processes for every (replica n, neuron j) on [0, horizon].
struct SpikeInput {
  double horizon = 0.0;
  int M = 0;
  int K = 0;
  std::vector<std::vector<Spike>> trains;  // [n*K + j], sorted by time
};

struct PhiOutput {
  std::vector<Trajectory> trajectories;  // [m*K + i]
  SpikeInput spikes;
};

struct PhiOptions {
  double grid_step = 0.05;
  double h_max = 1000.0;
};

/// Drives the replica equation with the given inputs: a point of train (n, j)
/// adds mu_{j->i} to replica v of neuron i, v drawn from the point's routing
/// marks (or from a keyed draw when the point has no field id). Output spikes
/// of (m, i) are the points of field (m+1, i+1) under the output intensity.
PhiOutput phi_apply(const SpikeInput& input, const ValidatedParams& params,
                    const InitialCondition& init, double T, std::uint64_t master_seed,
                    std::uint64_t path_id, const PhiOptions& opts = {});

/// Homogeneous Poisson inputs with rate E[lambda_j(0)], read off the same
/// fields the outputs use.
SpikeInput phi_seed_input(const ValidatedParams& params, const InitialCondition& init, int M,
                          double T, std::uint64_t master_seed, std::uint64_t path_id,
                          const PhiOptions& opts = {});

struct ContractionResult {
  std::vector<double> d;           // d[l-1] = E sum_{m,i} sup_t |Phi^{l+1} - Phi^l|
  std::vector<double> se;
  std::vector<double> covariance;  // [a*L + b], covariance of the estimates d[a], d[b]
  std::int64_t paths = 0;
};

ContractionResult phi_contraction_curve(const ValidatedParams& params,
                                        const InitialCondition& init, int M, double T, int L,
                                        std::int64_t paths, std::uint64_t master_seed,
                                        const PhiOptions& opts = {}, int threads = 0);

}  // namespace rmfgl
