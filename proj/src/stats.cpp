#include "rmfgl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <map>
#include <set>

#include <boost/math/special_functions/gamma.hpp>

#include "rmfgl/error.hpp"

namespace rmfgl {

double RunningMoments::variance() const {
  if (n < 2) return 0.0;
  const double m = mean();
  return std::max(0.0, (sumsq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
}

double RunningMoments::se() const {
  return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
}

void EmpiricalPmf::add(std::int64_t k) {
  if (k < 0) throw Error(ErrorCode::InvalidArgument, "negative lattice index");
  if (k >= static_cast<std::int64_t>(counts.size())) counts.resize(k + 1, 0);
  ++counts[k];
  ++n;
}

double EmpiricalPmf::mean() const {
  double s = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) s += static_cast<double>(k) * counts[k];
  return n > 0 ? s / n : 0.0;
}

ExactPmf poisson_pmf(double mean, double tail_tol) {
  ExactPmf q;
  if (mean <= 0.0) {
    q.p = {1.0};
    return q;
  }
  double acc = 0.0;
  for (int k = 0;; ++k) {
    const double pk = std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
    q.p.push_back(pk);
    acc += pk;
    if (k > mean && 1.0 - acc < tail_tol) break;
    if (k > mean + 50.0 * std::sqrt(mean) + 50.0) break;
  }
  q.tail = std::max(0.0, 1.0 - acc);
  return q;
}

namespace {

void require_same_lattice(double a, double b) {
  if (std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b))) {
    throw Error(ErrorCode::LatticeMismatch, "pmfs live on different lattices");
  }
}

}  // namespace

TvEstimate empirical_tv(const EmpiricalPmf& a, const EmpiricalPmf& b) {
  require_same_lattice(a.spacing, b.spacing);
  if (a.n == 0 || b.n == 0) throw Error(ErrorCode::InsufficientPaths, "empty sample");
  const std::size_t len = std::max(a.counts.size(), b.counts.size());
  double l1 = 0.0;
  double ea = 0.0, eaa = 0.0, eb = 0.0, ebb = 0.0;
  std::int64_t support = 0;
  for (std::size_t k = 0; k < len; ++k) {
    const double pa = a.p(static_cast<std::int64_t>(k));
    const double pb = b.p(static_cast<std::int64_t>(k));
    if (pa > 0.0 || pb > 0.0) ++support;
    l1 += std::abs(pa - pb);
    const double s = pa > pb ? 1.0 : (pa < pb ? -1.0 : 0.0);
    ea += s * pa;
    eaa += s * s * pa;
    eb += s * pb;
    ebb += s * s * pb;
  }
  TvEstimate out;
  out.value = 0.5 * l1;
  const double var = (eaa - ea * ea) / a.n + (ebb - eb * eb) / b.n;
  out.se = 0.5 * std::sqrt(std::max(0.0, var));
  out.bias_bound = 0.5 * std::sqrt(static_cast<double>(support) / std::min(a.n, b.n));
  return out;
}

TvEstimate empirical_tv(const EmpiricalPmf& a, const ExactPmf& q) {
  require_same_lattice(a.spacing, q.spacing);
  if (a.n == 0) throw Error(ErrorCode::InsufficientPaths, "empty sample");
  const std::size_t len = std::max(a.counts.size(), q.p.size());
  double l1 = q.tail;
  double e = 0.0, ee = 0.0;
  std::int64_t support = 0;
  for (std::size_t k = 0; k < len; ++k) {
    const double pa = a.p(static_cast<std::int64_t>(k));
    const double pq = k < q.p.size() ? q.p[k] : 0.0;
    if (pa > 0.0 || pq > 1e-12) ++support;
    l1 += std::abs(pa - pq);
    const double s = pa > pq ? 1.0 : (pa < pq ? -1.0 : 0.0);
    e += s * pa;
    ee += s * s * pa;
  }
  TvEstimate out;
  out.value = std::min(1.0, 0.5 * l1);
  out.se = 0.5 * std::sqrt(std::max(0.0, (ee - e * e) / a.n));
  out.bias_bound = 0.5 * std::sqrt(static_cast<double>(support) / a.n);
  return out;
}

namespace {

double chi_square_p(double statistic, int dof) {
  if (dof <= 0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

}  // namespace

ChiSquareResult two_sample_chi_square(const std::vector<std::vector<std::int64_t>>& a,
                                      const std::vector<std::vector<std::int64_t>>& b,
                                      std::int64_t min_cell) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::InsufficientPaths, "empty sample");
  std::map<std::vector<std::int64_t>, std::pair<std::int64_t, std::int64_t>> cells;
  for (const auto& x : a) ++cells[x].first;
  for (const auto& x : b) ++cells[x].second;
  std::vector<std::pair<double, double>> kept;
  std::pair<double, double> pooled{0.0, 0.0};
  for (const auto& [key, c] : cells) {
    if (c.first + c.second >= min_cell) {
      kept.emplace_back(c.first, c.second);
    } else {
      pooled.first += c.first;
      pooled.second += c.second;
    }
  }
  if (pooled.first + pooled.second > 0) kept.push_back(pooled);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ka = std::sqrt(nb / na), kb = std::sqrt(na / nb);
  ChiSquareResult r;
  for (const auto& [x, y] : kept) {
    const double d = ka * x - kb * y;
    r.statistic += d * d / (x + y);
  }
  r.dof = static_cast<int>(kept.size()) - 1;
  r.p_value = chi_square_p(r.statistic, r.dof);
  return r;
}

ChiSquareResult chi_square_gof(const std::vector<std::int64_t>& observed,
                               const std::vector<double>& probabilities) {
  if (observed.size() != probabilities.size()) {
    throw Error(ErrorCode::BadDimension, "observed and expected cells differ");
  }
  double n = 0.0;
  for (auto o : observed) n += static_cast<double>(o);
  ChiSquareResult r;
  int used = 0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    const double e = n * probabilities[k];
    if (e <= 0.0) continue;
    const double d = static_cast<double>(observed[k]) - e;
    r.statistic += d * d / e;
    ++used;
  }
  r.dof = used - 1;
  r.p_value = chi_square_p(r.statistic, r.dof);
  return r;
}

ChenSteinTerms chen_stein_terms(int M, double mean_count, double mean_abs_centered) {
  if (M < 2) throw Error(ErrorCode::MTooSmall, "M must be at least 2");
  ChenSteinTerms t;
  if (mean_count <= 0.0) return t;
  const double inv = 1.0 / (M - 1);
  t.term1 = std::min(1.0, kSteinConstant / std::sqrt(mean_count)) * inv * mean_abs_centered;
  t.term2 = inv * std::min(1.0, 1.0 / mean_count) * mean_count;
  t.bound = t.term1 + t.term2;
  return t;
}

ChenSteinReport chen_stein_bound(const ChannelSamples& samples, double reference_mean) {
  const auto n = static_cast<std::int64_t>(samples.arrivals.size());
  if (n < 10000) throw Error(ErrorCode::InsufficientPaths, "Chen-Stein bound needs >= 10^4 paths");
  if (samples.others_sum.size() != samples.arrivals.size()) {
    throw Error(ErrorCode::BadDimension, "channel sample vectors differ in length");
  }
  ChenSteinReport rep;
  rep.M = samples.M;
  rep.mean_count = samples.source_count.mean();
  rep.reference_mean = reference_mean;
  const double centre = (samples.M - 1) * rep.mean_count;
  RunningMoments dev;
  EmpiricalPmf pmf;
  for (std::int64_t p = 0; p < n; ++p) {
    dev.add(std::abs(centre - static_cast<double>(samples.others_sum[p])));
    pmf.add(samples.arrivals[p]);
  }
  rep.mean_abs_centered = dev.mean();
  rep.mean_abs_centered_se = dev.se();
  rep.terms = chen_stein_terms(samples.M, rep.mean_count, rep.mean_abs_centered);
  if (rep.mean_count > 0.0) {
    rep.bound_se = std::min(1.0, kSteinConstant / std::sqrt(rep.mean_count)) /
                   (samples.M - 1) * rep.mean_abs_centered_se;
  }
  rep.tv = empirical_tv(pmf, poisson_pmf(reference_mean));
  rep.tv_empirical = empirical_tv(pmf, poisson_pmf(pmf.mean()));
  rep.dominates = rep.terms.bound >= rep.tv.value + 3.0 * std::hypot(rep.tv.se, rep.bound_se);
  return rep;
}

SteinSolution stein_solve(double lambda, const std::vector<int>& B, int k_max) {
  if (!(lambda > 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be positive");
  std::set<int> members;
  for (int b : B) {
    if (b < 0) throw Error(ErrorCode::InvalidArgument, "B must be a subset of N");
    members.insert(b);
  }
  const int b_max = members.empty() ? -1 : *members.rbegin();
  if (k_max < b_max + 10) throw Error(ErrorCode::InvalidArgument, "k_max must be >= max(B) + 10");

  SteinSolution sol;
  sol.g.assign(k_max + 1, 0.0);
  bool full = true;
  for (int k = 0; k <= k_max && full; ++k) full = members.count(k) > 0;
  if (members.empty() || full) return sol;

  // Poisson probabilities far enough right that the suffix sums are exact.
  const int far = std::max(k_max + 1, static_cast<int>(lambda + 40.0 * std::sqrt(lambda) + 60.0));
  std::vector<double> p(far + 1);
  for (int k = 0; k <= far; ++k) p[k] = std::exp(k * std::log(lambda) - lambda - std::lgamma(k + 1.0));
  std::vector<double> upper(far + 2, 0.0), upper_b(far + 2, 0.0);
  for (int k = far; k >= 0; --k) {
    upper[k] = upper[k + 1] + p[k];
    upper_b[k] = upper_b[k + 1] + (members.count(k) ? p[k] : 0.0);
  }
  double lower = 0.0, lower_b = 0.0;
  for (int k = 0; k < k_max; ++k) {
    lower += p[k];
    if (members.count(k)) lower_b += p[k];
    // U_k = {0..k}; P(B u U_k) P(U_k^c) - P(B n U_k^c) P(U_k), over lambda p(k).
    const double num = lower_b * upper[k + 1] - upper_b[k + 1] * lower;
    sol.g[k + 1] = num / (lambda * p[k]);
  }
  const double pb = upper_b[0];
  for (int k = 1; k <= k_max; ++k) sol.sup_g = std::max(sol.sup_g, std::abs(sol.g[k]));
  for (int k = 1; k < k_max; ++k)
    sol.sup_dg = std::max(sol.sup_dg, std::abs(sol.g[k + 1] - sol.g[k]));
  for (int k = 0; k < k_max; ++k) {
    const double lhs = lambda * sol.g[k + 1] - k * sol.g[k];
    const double rhs = (members.count(k) ? 1.0 : 0.0) - pb;
    sol.max_residual = std::max(sol.max_residual, std::abs(lhs - rhs));
  }
  sol.dg_within = sol.sup_dg <= std::min(1.0, 1.0 / lambda) * (1.0 + 1e-12);
  sol.g_within_sqrt = sol.sup_g <= std::min(1.0, kSteinConstant / std::sqrt(lambda));
  sol.g_within_linear = sol.sup_g <= std::min(1.0, kSteinConstant / lambda);
  return sol;
}

TllnResult tlln_error(const std::vector<std::int64_t>& counts, int M, int m) {
  if (M < 2) throw Error(ErrorCode::MTooSmall, "M must be at least 2");
  if (m < 0 || m >= M) throw Error(ErrorCode::InvalidArgument, "focal replica out of range");
  if (counts.size() % M != 0) throw Error(ErrorCode::BadDimension, "counts not a multiple of M");
  const auto paths = static_cast<std::int64_t>(counts.size() / M);
  if (paths < 30) throw Error(ErrorCode::InsufficientPaths, "TLLN error needs >= 30 paths");
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  const double mean = total / static_cast<double>(counts.size());
  RunningMoments err;
  for (std::int64_t p = 0; p < paths; ++p) {
    double s = 0.0;
    for (int n = 0; n < M; ++n)
      if (n != m) s += mean - static_cast<double>(counts[p * M + n]);
    err.add(std::abs(s) / (M - 1));
  }
  return {M, paths, err.mean(), err.se()};
}

TllnResult tlln_error(const ChannelSamples& samples) {
  if (samples.M < 2) throw Error(ErrorCode::MTooSmall, "M must be at least 2");
  const auto paths = static_cast<std::int64_t>(samples.others_sum.size());
  if (paths < 30) throw Error(ErrorCode::InsufficientPaths, "TLLN error needs >= 30 paths");
  const double centre = (samples.M - 1) * samples.source_count.mean();
  RunningMoments err;
  for (auto s : samples.others_sum) err.add(std::abs(centre - static_cast<double>(s)) / (samples.M - 1));
  return {samples.M, paths, err.mean(), err.se()};
}

double tlln_folded_normal(double mu, int M) {
  return std::sqrt(2.0 * (M - 1) * mu / std::numbers::pi) / (M - 1);
}

MeanEqualityReport mean_equality_check(const std::vector<MeanSeries>& rmf,
                                       const MeanIntensityGrid& limit, double t_max) {
  MeanEqualityReport rep;
  for (const auto& s : rmf) {
    if (s.K != limit.K || s.times.size() > limit.times.size()) {
      throw Error(ErrorCode::GridMismatch, "RMF and limit grids differ");
    }
    for (std::size_t g = 0; g < s.times.size(); ++g) {
      if (std::abs(s.times[g] - limit.times[g]) > 1e-9) {
        throw Error(ErrorCode::GridMismatch, "RMF and limit grids differ");
      }
      if (s.times[g] > t_max + 1e-12) continue;
      for (int i = 0; i < s.K; ++i) {
        MeanCell c;
        c.M = s.M;
        c.t = s.times[g];
        c.neuron = i;
        c.rmf_mean = s.mean[g * s.K + i];
        c.rmf_se = s.se[g * s.K + i];
        c.limit_mean = limit.mean[g * limit.K + i];
        c.limit_se = limit.se[g * limit.K + i];
        const double pooled = std::hypot(c.rmf_se, c.limit_se);
        const double diff = c.rmf_mean - c.limit_mean;
        c.z = pooled > 0.0 ? diff / pooled : (std::abs(diff) < 1e-12 ? 0.0 : INFINITY);
        rep.max_abs_z = std::max(rep.max_abs_z, std::abs(c.z));
        rep.cells.push_back(c);
      }
    }
  }
  rep.pass = rep.max_abs_z <= 3.0;
  return rep;
}

MomentBounds moment_bounds(const ValidatedParams& params, const InitialCondition& init, double T) {
  const int K = params.K();
  const double c = std::max(1.0, params.max_weight());
  MomentBounds mb;
  for (int i = 0; i < K; ++i) {
    const double q1 = initial_mean(init, i) * std::exp((c * (K - 1) + params.r(i)) * T);
    const double q2 = (initial_second_moment(init, i) + c * c * (K - 1) * q1 * T) *
                      std::exp(2.0 * c * (K - 1) * T);
    mb.q1.push_back(q1);
    mb.q2.push_back(q2);
  }
  return mb;
}

MomentCheck moment_bound_check(const RunningMoments& samples, int p, int neuron,
                               const MomentBounds& bounds) {
  if (p != 1 && p != 2) throw Error(ErrorCode::InvalidArgument, "p must be 1 or 2");
  MomentCheck mc;
  mc.p = p;
  mc.neuron = neuron;
  mc.empirical = samples.mean();
  mc.se = samples.se();
  mc.bound = p == 1 ? bounds.q1.at(neuron) : bounds.q2.at(neuron);
  mc.margin = 1.0 - (mc.empirical + 3.0 * mc.se) / mc.bound;
  mc.pass = mc.margin > 0.0;
  return mc;
}

double mgf_integrand(const double* lambda, const std::vector<double>& u,
                     const ValidatedParams& params, int M, double extra) {
  const int K = params.K();
  const std::size_t S = static_cast<std::size_t>(M) * K;
  double dot = 0.0;
  for (std::size_t s = 0; s < S; ++s) dot += u[s] * lambda[s];
  const double e_all = std::exp(dot);
  double total = 0.0;
  for (int m = 0; m < M; ++m) {
    for (int i = 0; i < K; ++i) {
      const std::size_t s = static_cast<std::size_t>(m) * K + i;
      double f = std::exp(u[s] * params.r(i));
      for (int j = 0; j < K; ++j) {
        if (j == i) continue;
        double avg = 0.0;
        for (int n = 0; n < M; ++n)
          if (n != m) avg += std::exp(u[static_cast<std::size_t>(n) * K + j] * params.weight(i, j));
        f *= avg / (M - 1);
      }
      if (K > 1) f *= extra;
      const double rest = std::exp(dot - u[s] * lambda[s]);
      total += lambda[s] * (f * rest - e_all);
    }
  }
  return total;
}

MgfAccumulator::MgfAccumulator(const ValidatedParams& params, int M, std::vector<double> u)
    : params_(&params), M_(M), u_(std::move(u)) {
  if (u_.size() != static_cast<std::size_t>(M) * params.K()) {
    throw Error(ErrorCode::BadDimension, "u must have M*K entries");
  }
}

void MgfAccumulator::add_path(const std::vector<double>& states) {
  const std::size_t S = u_.size();
  const std::size_t count = states.size() / S;
  if (count < 2) throw Error(ErrorCode::InsufficientPaths, "need >= 2 samples per path");
  const double extra_alt = M_ > 1 ? 1.0 / (M_ - 1) : 1.0;
  double d = 0.0, d_alt = 0.0, first = 0.0, second = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    const double* lam = states.data() + k * S;
    d += mgf_integrand(lam, u_, *params_, M_);
    d_alt += mgf_integrand(lam, u_, *params_, M_, extra_alt);
    double tot = 0.0;
    for (std::size_t s = 0; s < S; ++s) tot += lam[s];
    (k < count / 2 ? first : second) += tot;
  }
  main_.add(d / count);
  alt_.add(d_alt / count);
  halves_.add(first / (count / 2) - second / (count - count / 2));
}

void MgfAccumulator::merge(const MgfAccumulator& other) {
  main_.merge(other.main_);
  alt_.merge(other.alt_);
  halves_.merge(other.halves_);
}

MgfResult MgfAccumulator::finish(double gap_threshold) const {
  MgfResult r;
  r.paths = main_.n;
  if (r.paths < 2) throw Error(ErrorCode::InsufficientPaths, "MGF residual needs >= 2 paths");
  r.residual = main_.mean();
  r.se = main_.se();
  r.residual_alt = alt_.mean();
  r.se_alt = alt_.se();
  const double hse = halves_.se();
  r.window_z = hse > 0.0 ? halves_.mean() / hse : 0.0;
  if (std::abs(r.window_z) >= gap_threshold) {
    throw Error(ErrorCode::NotStationary,
                "window halves differ by " + std::to_string(r.window_z) + " standard errors");
  }
  return r;
}

}  // namespace rmfgl
