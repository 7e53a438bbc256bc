#include "rmfgl/gl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rmfgl/error.hpp"

namespace rmfgl {

std::vector<double> make_grid(double horizon, double step) {
  const auto n = static_cast<std::size_t>(std::llround(horizon / step));
  if (n < 1) throw Error(ErrorCode::GridTooShort, "grid needs at least one interval");
  std::vector<double> t(n + 1);
  for (std::size_t g = 0; g <= n; ++g) t[g] = g == n ? horizon : static_cast<double>(g) * step;
  return t;
}

namespace {

struct NeuronState {
  double t_start = 0.0;
  double lambda_start = 0.0;
  double integral_at_start = 0.0;
};

double current(const NeuronState& s, double base, double tau, double t) {
  if (!std::isfinite(tau)) return s.lambda_start;
  return base + (s.lambda_start - base) * std::exp(-(t - s.t_start) / tau);
}

double integral_since(const NeuronState& s, double base, double tau, double t) {
  const double dt = t - s.t_start;
  if (!std::isfinite(tau)) return s.lambda_start * dt;
  return base * dt - (s.lambda_start - base) * tau * std::expm1(-dt / tau);
}

void overflow(double v, double h_max) {
  std::ostringstream os;
  os << "intensity " << v << " exceeds " << h_max;
  throw Error(ErrorCode::IntensityOverflow, os.str());
}

}  // namespace

GlPath simulate_gl(const ValidatedParams& params, const InitialCondition& init, double T,
                   std::uint64_t master_seed, std::uint64_t path_id, const GlOptions& opts) {
  if (!(T > 0.0)) throw Error(ErrorCode::HorizonNonPositive, "T must be positive");
  validate_initial(init, params);
  const int K = params.K();
  const std::uint64_t seed = path_seed(master_seed, path_id);
  RandomStream rng = derive_stream(seed, StreamKey{1, 1, StreamTag::Auxiliary});

  std::vector<NeuronState> st(K);
  for (int i = 0; i < K; ++i) {
    RandomStream init_rng = derive_stream(seed, StreamKey{1, i + 1, StreamTag::Initial});
    st[i].lambda_start = sample_initial_coordinate(init, i, init_rng);
  }

  GlPath out;
  auto& sum = out.summary;
  sum.K = K;
  sum.times = make_grid(T, opts.grid_step);
  const std::size_t G = sum.times.size();
  sum.counts.assign(G * K, 0);
  sum.lambda.assign(G * K, 0.0);
  sum.integral.assign(G * K, 0.0);
  sum.arrivals.assign(G * K * K, 0);

  if (opts.record_trajectories) {
    out.trajectories.resize(K);
    for (int i = 0; i < K; ++i) {
      auto& tr = out.trajectories[i];
      tr.replica = 0;
      tr.neuron = i;
      tr.base = params.b(i);
      tr.tau = params.tau(i);
      tr.segments.push_back({0.0, st[i].lambda_start});
    }
  }

  std::vector<std::int64_t> counts(K, 0);
  std::vector<std::int64_t> arrivals(static_cast<std::size_t>(K) * K, 0);
  std::vector<double> lam(K);
  std::size_t next_grid = 0;

  auto snapshot_until = [&](double t_event) {
    while (next_grid < G && sum.times[next_grid] < t_event) {
      const double tg = sum.times[next_grid];
      for (int i = 0; i < K; ++i) {
        sum.counts[next_grid * K + i] = counts[i];
        sum.lambda[next_grid * K + i] = current(st[i], params.b(i), params.tau(i), tg);
        sum.integral[next_grid * K + i] =
            st[i].integral_at_start + integral_since(st[i], params.b(i), params.tau(i), tg);
      }
      std::copy(arrivals.begin(), arrivals.end(), sum.arrivals.begin() + next_grid * K * K);
      ++next_grid;
    }
  };

  auto restart = [&](int i, double t, double new_value) {
    st[i].integral_at_start += integral_since(st[i], params.b(i), params.tau(i), t);
    st[i].t_start = t;
    st[i].lambda_start = new_value;
    if (new_value > opts.h_max) overflow(new_value, opts.h_max);
    if (opts.record_trajectories) out.trajectories[i].segments.push_back({t, new_value});
  };

  auto fire = [&](int i, double t) {
    const double before = current(st[i], params.b(i), params.tau(i), t);
    restart(i, t, params.r(i));
    ++counts[i];
    if (opts.record_trajectories) {
      out.trajectories[i].events.push_back(
          {t, EventKind::Spike, -1, -1, params.r(i) - before, params.r(i)});
    }
    for (int j = 0; j < K; ++j) {
      if (j == i) continue;
      ++arrivals[static_cast<std::size_t>(i) * K + j];
      const double w = params.weight(i, j);
      const double v = current(st[j], params.b(j), params.tau(j), t);
      restart(j, t, v + w);
      if (opts.record_trajectories) {
        out.trajectories[j].events.push_back({t, EventKind::Arrival, i, 0, w, v + w});
      }
    }
  };

  for (int i = 0; i < K; ++i)
    if (st[i].lambda_start > opts.h_max) overflow(st[i].lambda_start, opts.h_max);

  double t = 0.0;
  if (params.convergence_eligible()) {
    while (true) {
      double total = 0.0;
      for (int i = 0; i < K; ++i) {
        lam[i] = st[i].lambda_start;
        total += lam[i];
      }
      const double t_next = t + rng.exponential(total);
      if (t_next > T) {
        snapshot_until(T + 1.0);
        break;
      }
      snapshot_until(t_next);
      double u = rng.uniform() * total;
      int who = K - 1;
      for (int i = 0; i < K; ++i) {
        if (u < lam[i]) {
          who = i;
          break;
        }
        u -= lam[i];
      }
      t = t_next;
      fire(who, t);
    }
  } else {
    while (true) {
      double bound = 0.0;
      for (int i = 0; i < K; ++i)
        bound += std::max(current(st[i], params.b(i), params.tau(i), t), params.b(i));
      const double t_next = t + rng.exponential(bound);
      if (t_next > T) {
        snapshot_until(T + 1.0);
        break;
      }
      snapshot_until(t_next);
      t = t_next;
      double total = 0.0;
      for (int i = 0; i < K; ++i) {
        lam[i] = current(st[i], params.b(i), params.tau(i), t);
        total += lam[i];
      }
      double u = rng.uniform() * bound;
      if (u >= total) continue;  // rejected proposal
      int who = K - 1;
      for (int i = 0; i < K; ++i) {
        if (u < lam[i]) {
          who = i;
          break;
        }
        u -= lam[i];
      }
      fire(who, t);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

SingleNeuronLaw single_neuron_law(double lambda0, double r, double t) {
  if (!(r > 0.0) || lambda0 < r) {
    throw Error(ErrorCode::InvalidArgument, "single_neuron_law needs lambda0 >= r > 0");
  }
  SingleNeuronLaw law;
  law.mean_intensity = r + (lambda0 - r) * std::exp(-lambda0 * t);
  law.mean_count = -std::expm1(-lambda0 * t) + r * (t + std::expm1(-lambda0 * t) / lambda0);
  if (t <= 0.0) {
    law.pmf = {1.0};
    law.mean_count = 0.0;
    return law;
  }
  const double c = lambda0 - r;
  const double log_t = std::log(t);
  const double log_c = c > 0.0 ? std::log(c) : -INFINITY;
  law.pmf.push_back(std::exp(-lambda0 * t));
  double acc = law.pmf[0];
  // P(N = n) = lambda0 e^{-lambda0 t} r^{n-1}/(n-1)! * sum_k c^k t^{n+k} / (k! (n+k))
  for (int n = 1; n < 100000; ++n) {
    double log_sum = -INFINITY;
    for (int k = 0;; ++k) {
      const double lt = (k > 0 ? k * log_c : 0.0) + (n + k) * log_t - std::lgamma(k + 1.0) -
                        std::log(static_cast<double>(n + k));
      if (k > 0 && std::isinf(log_c)) break;
      const double hi = std::max(log_sum, lt);
      log_sum = hi + std::log(std::exp(log_sum - hi) + std::exp(lt - hi));
      if (k > c * t + 5 && lt < log_sum - 40.0) break;
    }
    const double log_p = std::log(lambda0) - lambda0 * t + (n - 1) * std::log(r) -
                         std::lgamma(static_cast<double>(n)) + log_sum;
    const double p = std::exp(log_p);
    law.pmf.push_back(p);
    acc += p;
    if (n > (lambda0 + r) * t + 5 && (1.0 - acc < 1e-16 || p < 1e-300)) break;
  }
  law.tail = std::max(0.0, 1.0 - acc);
  return law;
}

}  // namespace rmfgl
