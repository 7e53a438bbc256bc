#pragma once

#include <cstdint>
#include <vector>

#include "rmfgl/limit.hpp"
#include "rmfgl/model.hpp"

namespace rmfgl {

/// Count, sum and sum of squares; merged in a fixed order by the callers.
struct RunningMoments {
  std::int64_t n = 0;
  double sum = 0.0;
  double sumsq = 0.0;

  void add(double x) {
    ++n;
    sum += x;
    sumsq += x * x;
  }
  void merge(const RunningMoments& o) {
    n += o.n;
    sum += o.sum;
    sumsq += o.sumsq;
  }
  double mean() const { return n > 0 ? sum / static_cast<double>(n) : 0.0; }
  double variance() const;  // unbiased
  double se() const;
};

// ---------------------------------------------------------------------------
// Total variation.

/// Counts on the lattice {0, spacing, 2*spacing, ...}.
struct EmpiricalPmf {
  double spacing = 1.0;
  std::vector<std::int64_t> counts;
  std::int64_t n = 0;

  void add(std::int64_t k);
  double p(std::int64_t k) const {
    return k < static_cast<std::int64_t>(counts.size()) ? static_cast<double>(counts[k]) / n : 0.0;
  }
  double mean() const;  // in lattice units
};

/// Exact law on the same kind of lattice; `tail` is the mass not listed.
struct ExactPmf {
  double spacing = 1.0;
  std::vector<double> p;
  double tail = 0.0;
};

ExactPmf poisson_pmf(double mean, double tail_tol = 1e-15);

struct TvEstimate {
  double value = 0.0;
  double se = 0.0;          // delta-method standard error
  double bias_bound = 0.0;  // sqrt(|support| / n) / 2
};

TvEstimate empirical_tv(const EmpiricalPmf& a, const EmpiricalPmf& b);
TvEstimate empirical_tv(const EmpiricalPmf& a, const ExactPmf& q);

// ---------------------------------------------------------------------------
// Chi-square tests.

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Two-sample test on the joint law of integer vectors. Cells with fewer than
/// `min_cell` combined observations are pooled into one.
ChiSquareResult two_sample_chi_square(const std::vector<std::vector<std::int64_t>>& a,
                                      const std::vector<std::vector<std::int64_t>>& b,
                                      std::int64_t min_cell = 10);

/// Goodness of fit of observed cell counts to cell probabilities.
ChiSquareResult chi_square_gof(const std::vector<std::int64_t>& observed,
                               const std::vector<double>& probabilities);

// ---------------------------------------------------------------------------
// Chen-Stein bound for one channel j -> (m, i).

inline constexpr double kSteinConstant = 0.74;

struct ChenSteinTerms {
  double term1 = 0.0;
  double term2 = 0.0;
  double bound = 0.0;
};

/// term1 = (1 ^ 0.74/sqrt(EN)) (1/(M-1)) E|sum_{n!=m}(EN - N_n)|,
/// term2 = (1/(M-1)) (1 ^ 1/EN) EN.
ChenSteinTerms chen_stein_terms(int M, double mean_count, double mean_abs_centered);

/// Per-path quantities of one channel at a fixed time.
struct ChannelSamples {
  int M = 0;
  std::vector<std::int64_t> arrivals;      // A_{j->(m,i)}(t)
  std::vector<std::int64_t> others_sum;    // sum_{n != m} N_{n,j}([0, t])
  RunningMoments source_count;             // N_{n,j}([0, t]) over all paths and replicas
};

struct ChenSteinReport {
  int M = 0;
  double mean_count = 0.0;
  double mean_abs_centered = 0.0;
  double mean_abs_centered_se = 0.0;
  ChenSteinTerms terms;
  double bound_se = 0.0;
  TvEstimate tv;            // against Poisson(reference_mean)
  TvEstimate tv_empirical;  // against Poisson(same-run mean of the arrivals)
  double reference_mean = 0.0;
  bool dominates = false;   // bound >= tv + 3 * combined se
};

/// Needs at least 10^4 paths.
ChenSteinReport chen_stein_bound(const ChannelSamples& samples, double reference_mean);

// ---------------------------------------------------------------------------
// Stein equation.

struct SteinSolution {
  std::vector<double> g;  // g[0..k_max]
  double sup_g = 0.0;     // max_{k>=1} |g(k)|
  double sup_dg = 0.0;    // max_{k>=1} |g(k+1) - g(k)|
  double max_residual = 0.0;
  bool dg_within = true;       // sup_dg <= 1 ^ 1/lambda
  bool g_within_sqrt = true;   // sup_g <= 1 ^ 0.74/sqrt(lambda)
  bool g_within_linear = true; // sup_g <= 1 ^ 0.74/lambda
};

/// Solution of lambda g(k+1) - k g(k) = 1_B(k) - P(Z in B), g(0) = 0, using
/// the closed form in terms of Poisson(lambda) probabilities.
SteinSolution stein_solve(double lambda, const std::vector<int>& B, int k_max);

// ---------------------------------------------------------------------------
// Triangular law of large numbers.

struct TllnResult {
  int M = 0;
  std::int64_t paths = 0;
  double error = 0.0;
  double se = 0.0;
};

/// counts[p*M + n] = N_{n,j}([0, T]) on path p; the focal replica is m.
TllnResult tlln_error(const std::vector<std::int64_t>& counts, int M, int m = 0);
/// Same quantity from the per-path sums kept for the Chen-Stein bound.
TllnResult tlln_error(const ChannelSamples& samples);

/// E|sum of M-1 centred Poisson(mu)| / (M-1) under the normal approximation.
double tlln_folded_normal(double mu, int M);

// ---------------------------------------------------------------------------
// Mean equality.

/// Replica-averaged mean intensity of one RMF sweep: mean[g*K + i].
struct MeanSeries {
  int M = 0;
  int K = 0;
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> se;
};

struct MeanCell {
  int M = 0;
  double t = 0.0;
  int neuron = 0;
  double rmf_mean = 0.0, rmf_se = 0.0;
  double limit_mean = 0.0, limit_se = 0.0;
  double z = 0.0;
};

struct MeanEqualityReport {
  std::vector<MeanCell> cells;
  double max_abs_z = 0.0;
  bool pass = true;
};

/// z-scores on every grid time <= t_max. Throws GridMismatch when grids differ.
MeanEqualityReport mean_equality_check(const std::vector<MeanSeries>& rmf,
                                       const MeanIntensityGrid& limit, double t_max);

// ---------------------------------------------------------------------------
// Moment bounds.

/// Q1_i = E[lambda_i(0)] e^{(c(K-1) + r_i) T},
/// Q2_i = (E[lambda_i(0)^2] + c^2 (K-1) Q1_i T) e^{2 c (K-1) T}, c = max(1, max mu).
struct MomentBounds {
  std::vector<double> q1, q2;
};

MomentBounds moment_bounds(const ValidatedParams& params, const InitialCondition& init, double T);

struct MomentCheck {
  int p = 1;
  int neuron = 0;
  double empirical = 0.0;
  double se = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // 1 - (empirical + 3 se) / bound
  bool pass = false;
};

MomentCheck moment_bound_check(const RunningMoments& samples, int p, int neuron,
                               const MomentBounds& bounds);

// ---------------------------------------------------------------------------
// MGF residual.

/// Generator of the replica dynamics applied to exp<u, lambda>, evaluated at
/// one state lambda[m*K + i]. `extra` multiplies the routing average (1 for
/// the generator normalization, 1/(M-1) for the (M-1)^{-K} prefactor).
double mgf_integrand(const double* lambda, const std::vector<double>& u,
                     const ValidatedParams& params, int M, double extra = 1.0);

struct MgfResult {
  double residual = 0.0;
  double se = 0.0;
  double residual_alt = 0.0;  // with the (M-1)^{-K} prefactor
  double se_alt = 0.0;
  double window_z = 0.0;      // first-half minus second-half total intensity, in SE
  std::int64_t paths = 0;
};

/// Collects stationary-window samples path by path.
class MgfAccumulator {
 public:
  MgfAccumulator(const ValidatedParams& params, int M, std::vector<double> u);
  /// `states` holds consecutive samples of lambda (M*K each) from one path.
  void add_path(const std::vector<double>& states);
  void merge(const MgfAccumulator& other);
  /// Throws NotStationary when the two window halves disagree by more than
  /// `gap_threshold` standard errors.
  MgfResult finish(double gap_threshold = 2.0) const;

 private:
  const ValidatedParams* params_;
  int M_;
  std::vector<double> u_;
  RunningMoments main_, alt_, halves_;
};

}  // namespace rmfgl
