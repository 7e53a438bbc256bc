#include "rmfgl/limit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rmfgl/error.hpp"
#include "rmfgl/gl.hpp"
#include "rmfgl/parallel.hpp"

namespace rmfgl {

double MeanIntensityGrid::value(int j, double t) const {
  const std::size_t G = times.size();
  const double h = step();
  t = std::clamp(t, 0.0, horizon());
  auto g = static_cast<std::size_t>(t / h);
  if (g >= G - 1) g = G - 2;
  const double a = mean[g * K + j], b = mean[(g + 1) * K + j];
  return a + (b - a) * (t - times[g]) / (times[g + 1] - times[g]);
}

double MeanIntensityGrid::integral(int j, double t) const {
  const std::size_t G = times.size();
  const double h = step();
  t = std::clamp(t, 0.0, horizon());
  auto g = static_cast<std::size_t>(t / h);
  if (g >= G - 1) g = G - 2;
  const double a = mean[g * K + j], b = mean[(g + 1) * K + j];
  const double dt = t - times[g];
  const double slope = (b - a) / (times[g + 1] - times[g]);
  return cumulative[g * K + j] + dt * (a + 0.5 * slope * dt);
}

void MeanIntensityGrid::integrate() {
  const std::size_t G = times.size();
  cumulative.assign(G * K, 0.0);
  for (std::size_t g = 1; g < G; ++g) {
    const double dt = times[g] - times[g - 1];
    for (int j = 0; j < K; ++j) {
      cumulative[g * K + j] =
          cumulative[(g - 1) * K + j] + 0.5 * dt * (mean[(g - 1) * K + j] + mean[g * K + j]);
    }
  }
}

MeanIntensityGrid MeanIntensityGrid::constant(int K, const std::vector<double>& times,
                                              const std::vector<double>& level) {
  MeanIntensityGrid m;
  m.K = K;
  m.times = times;
  m.mean.resize(times.size() * K);
  m.se.assign(times.size() * K, 0.0);
  for (std::size_t g = 0; g < times.size(); ++g)
    for (int j = 0; j < K; ++j) m.mean[g * K + j] = level[j];
  m.integrate();
  return m;
}

namespace {

void check_grid(const MeanIntensityGrid& means, const ValidatedParams& params, double T) {
  if (!params.convergence_eligible()) {
    throw Error(ErrorCode::DecayNotSupported, "the limit dynamics require tau infinite");
  }
  if (!(T > 0.0)) throw Error(ErrorCode::HorizonNonPositive, "T must be positive");
  if (means.K != params.K()) throw Error(ErrorCode::GridMismatch, "mean grid has the wrong K");
  if (means.times.size() < 2 || means.horizon() < T * (1.0 - 1e-12)) {
    throw Error(ErrorCode::GridTooShort, "mean grid does not cover [0, T]");
  }
}

}  // namespace

LimitPath simulate_limit_path(const ValidatedParams& params, const InitialCondition& init,
                              const MeanIntensityGrid& means, double T, std::uint64_t master_seed,
                              std::uint64_t path_id, const LimitOptions& opts) {
  check_grid(means, params, T);
  const int K = params.K();
  const double step = means.step();
  const std::uint64_t seed = path_seed(master_seed, path_id);
  const FieldGeometry geom{step, 1.0, T, opts.h_max};

  LimitPath out;
  out.K = K;
  out.times = make_grid(T, step);
  const std::size_t G = out.times.size();
  out.lambda.assign(G * K, 0.0);
  out.counts.assign(G * K, 0);
  out.arrivals.assign(G * K * K, 0);
  if (opts.record_trajectories) out.trajectories.resize(K);

  struct Arrival {
    double time;
    int from;
  };
  std::vector<Arrival> arrivals;
  std::vector<std::int64_t> channel(K);

  for (int i = 0; i < K; ++i) {
    RandomStream init_rng = derive_stream(seed, StreamKey{i + 1, i + 1, StreamTag::Initial});
    double lam = sample_initial_coordinate(init, i, init_rng);
    if (lam > opts.h_max) throw Error(ErrorCode::IntensityOverflow, "initial intensity exceeds H_max");

    arrivals.clear();
    for (int j = 0; j < K; ++j) {
      if (j == i) continue;
      LazyPoissonField field(seed, StreamKey{j + 1, i + 1, StreamTag::Embedding}, geom);
      auto level = [&](double t) { return means.value(j, t); };
      auto column_max = [&](std::int32_t c) {
        const std::size_t g = std::min<std::size_t>(c, means.times.size() - 2);
        return std::max(means.mean[g * K + j], means.mean[(g + 1) * K + j]);
      };
      double t = 0.0;
      while (auto p = field.first_under(t, T, level, column_max)) {
        arrivals.push_back({p->time, j});
        t = p->time;
      }
    }
    std::sort(arrivals.begin(), arrivals.end(),
              [](const Arrival& a, const Arrival& b) { return a.time < b.time; });

    Trajectory* tr = nullptr;
    if (opts.record_trajectories) {
      tr = &out.trajectories[i];
      tr->replica = 0;
      tr->neuron = i;
      tr->base = params.b(i);
      tr->tau = kInfiniteTau;
      tr->segments.push_back({0.0, lam});
    }
    std::fill(channel.begin(), channel.end(), 0);
    std::int64_t spikes = 0;
    std::size_t next_grid = 0;
    auto snapshot_until = [&](double t_event) {
      while (next_grid < G && out.times[next_grid] < t_event) {
        out.lambda[next_grid * K + i] = lam;
        out.counts[next_grid * K + i] = spikes;
        for (int j = 0; j < K; ++j) out.arrivals[(next_grid * K + j) * K + i] = channel[j];
        ++next_grid;
      }
    };

    LazyPoissonField own(seed, StreamKey{i + 1, i + 1, StreamTag::Embedding}, geom);
    double t = 0.0;
    std::size_t next = 0;
    while (true) {
      const double until = next < arrivals.size() ? arrivals[next].time : T;
      if (auto p = own.first_below(t, until, lam)) {
        snapshot_until(p->time);
        t = p->time;
        const double before = lam;
        lam = params.r(i);
        ++spikes;
        if (tr) {
          tr->segments.push_back({t, lam});
          tr->events.push_back({t, EventKind::Spike, -1, -1, lam - before, lam});
        }
      } else if (next < arrivals.size()) {
        const auto a = arrivals[next++];
        snapshot_until(a.time);
        t = a.time;
        const double w = params.weight(a.from, i);
        lam += w;
        if (lam > opts.h_max) {
          throw Error(ErrorCode::IntensityOverflow, "limit intensity exceeds H_max");
        }
        ++channel[a.from];
        if (tr) {
          tr->segments.push_back({t, lam});
          tr->events.push_back({t, EventKind::Arrival, a.from, -1, w, lam});
        }
      } else {
        break;
      }
    }
    snapshot_until(std::numeric_limits<double>::infinity());
  }
  return out;
}

std::vector<LimitPath> simulate_limit(const ValidatedParams& params, const InitialCondition& init,
                                      const MeanIntensityGrid& means, double T, std::int64_t paths,
                                      std::uint64_t master_seed, const LimitOptions& opts) {
  std::vector<LimitPath> out;
  out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(paths, 0)));
  for (std::int64_t p = 0; p < paths; ++p)
    out.push_back(simulate_limit_path(params, init, means, T, master_seed, p, opts));
  return out;
}

PicardResult picard_solve_means(const ValidatedParams& params, const InitialCondition& init,
                                double T, std::int64_t paths, std::uint64_t master_seed,
                                const PicardOptions& opts) {
  if (!(opts.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
  if (paths < 2) throw Error(ErrorCode::InsufficientPaths, "Picard iteration needs >= 2 paths");
  validate_initial(init, params);
  const int K = params.K();
  const auto times = make_grid(T, opts.grid_step);
  const std::size_t G = times.size();

  std::vector<double> m0(K);
  for (int j = 0; j < K; ++j) m0[j] = initial_mean(init, j);
  MeanIntensityGrid current = MeanIntensityGrid::constant(K, times, m0);
  check_grid(current, params, T);

  PicardResult res;
  int rising = 0;
  const LimitOptions lopts{false, opts.h_max};
  for (int it = 1; it <= opts.max_iters; ++it) {
    struct Sums {
      std::vector<double> s, ss;
    };
    auto blocks = parallel_blocks<Sums>(paths, kPathBlock, opts.threads, [&](std::int64_t a,
                                                                             std::int64_t b) {
      Sums acc{std::vector<double>(G * K, 0.0), std::vector<double>(G * K, 0.0)};
      for (std::int64_t p = a; p < b; ++p) {
        const auto path = simulate_limit_path(params, init, current, T, master_seed, p, lopts);
        for (std::size_t c = 0; c < G * K; ++c) {
          acc.s[c] += path.lambda[c];
          acc.ss[c] += path.lambda[c] * path.lambda[c];
        }
      }
      return acc;
    });
    std::vector<double> s(G * K, 0.0), ss(G * K, 0.0);
    for (const auto& blk : blocks) {
      for (std::size_t c = 0; c < G * K; ++c) {
        s[c] += blk.s[c];
        ss[c] += blk.ss[c];
      }
    }
    MeanIntensityGrid next;
    next.K = K;
    next.times = times;
    next.mean.resize(G * K);
    next.se.resize(G * K);
    const double n = static_cast<double>(paths);
    for (std::size_t c = 0; c < G * K; ++c) {
      const double mu = s[c] / n;
      const double var = std::max(0.0, (ss[c] - n * mu * mu) / (n - 1.0));
      next.mean[c] = mu;
      next.se[c] = std::sqrt(var / n);
    }
    for (int j = 0; j < K; ++j) {
      next.mean[j] = m0[j];
      next.se[j] = 0.0;
    }
    next.integrate();

    double gap = 0.0, noise = 0.0;
    for (std::size_t c = 0; c < G * K; ++c) {
      gap = std::max(gap, std::abs(next.mean[c] - current.mean[c]));
      noise = std::max(noise, std::hypot(next.se[c], current.se[c]));
    }
    res.gaps.push_back(gap);
    res.noise.push_back(noise);
    current = std::move(next);
    res.iterations = it;
    if (gap < std::max(opts.tol, 2.0 * noise)) {
      res.converged = true;
      break;
    }
    const std::size_t L = res.gaps.size();
    rising = (L >= 2 && res.gaps[L - 1] > res.gaps[L - 2] + noise) ? rising + 1 : 0;
    if (rising >= 3) {
      throw Error(ErrorCode::NoConvergence, "Picard gap grew for 3 consecutive iterations");
    }
  }
  res.means = std::move(current);
  return res;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<LazyPoissonField> make_fields(std::uint64_t seed, int M, int K, double T,
                                          const PhiOptions& opts) {
  const FieldGeometry geom{opts.grid_step, 1.0, T, opts.h_max};
  std::vector<LazyPoissonField> fields;
  fields.reserve(static_cast<std::size_t>(M) * K);
  for (int m = 0; m < M; ++m)
    for (int i = 0; i < K; ++i)
      fields.emplace_back(seed, StreamKey{m + 1, i + 1, StreamTag::Embedding}, geom);
  return fields;
}

constexpr std::uint64_t kLooseSpikeDomain = 0x4c4f4f5345000007ULL;

PhiOutput phi_with_fields(const SpikeInput& input, const ValidatedParams& params,
                          const InitialCondition& init, double T, std::uint64_t seed,
                          const std::vector<LazyPoissonField>& fields) {
  const int M = input.M, K = input.K;
  struct Arrival {
    double time;
    int from_replica;
    int from_neuron;
  };
  std::vector<std::vector<Arrival>> inbox(static_cast<std::size_t>(M) * K);
  for (int n = 0; n < M; ++n) {
    for (int j = 0; j < K; ++j) {
      const auto& train = input.trains[static_cast<std::size_t>(n) * K + j];
      for (std::size_t k = 0; k < train.size(); ++k) {
        const Spike& sp = train[k];
        for (int i = 0; i < K; ++i) {
          if (i == j) continue;
          const int v =
              sp.has_id ? routing_mark(RoutingMark(sp.id), i + 1, M, n + 1) - 1
                        : routing_choice(hash_words(seed, kLooseSpikeDomain, n, j, k), i + 1, M,
                                         n + 1) - 1;
          inbox[static_cast<std::size_t>(v) * K + i].push_back({sp.time, n, j});
        }
      }
    }
  }

  PhiOutput out;
  out.trajectories.resize(static_cast<std::size_t>(M) * K);
  out.spikes.horizon = input.horizon;
  out.spikes.M = M;
  out.spikes.K = K;
  out.spikes.trains.resize(static_cast<std::size_t>(M) * K);
  for (int m = 0; m < M; ++m) {
    for (int i = 0; i < K; ++i) {
      const std::size_t s = static_cast<std::size_t>(m) * K + i;
      auto& box = inbox[s];
      std::sort(box.begin(), box.end(),
                [](const Arrival& a, const Arrival& b) { return a.time < b.time; });
      RandomStream init_rng = derive_stream(seed, StreamKey{m + 1, i + 1, StreamTag::Initial});
      double lam = sample_initial_coordinate(init, i, init_rng);
      auto& tr = out.trajectories[s];
      tr.replica = m;
      tr.neuron = i;
      tr.base = params.b(i);
      tr.tau = kInfiniteTau;
      tr.segments.push_back({0.0, lam});
      auto& train = out.spikes.trains[s];
      double t = 0.0;
      std::size_t next = 0;
      while (true) {
        const double until = next < box.size() ? box[next].time : T;
        if (auto p = fields[s].first_below(t, until, lam)) {
          t = p->time;
          const double before = lam;
          lam = params.r(i);
          tr.segments.push_back({t, lam});
          tr.events.push_back({t, EventKind::Spike, -1, -1, lam - before, lam});
          train.push_back({t, p->id, true});
        } else if (next < box.size()) {
          const auto a = box[next++];
          t = a.time;
          const double w = params.weight(a.from_neuron, i);
          lam += w;
          if (lam > fields[s].geometry().h_max) {
            throw Error(ErrorCode::IntensityOverflow, "Phi output intensity exceeds H_max");
          }
          tr.segments.push_back({t, lam});
          tr.events.push_back({t, EventKind::Arrival, a.from_neuron, a.from_replica, w, lam});
        } else {
          break;
        }
      }
    }
  }
  return out;
}

void check_input(const SpikeInput& input, const ValidatedParams& params, double T) {
  if (!params.convergence_eligible()) {
    throw Error(ErrorCode::DecayNotSupported, "the Phi map requires tau infinite");
  }
  if (input.M < 2) throw Error(ErrorCode::MTooSmall, "M must be at least 2");
  if (input.K != params.K() ||
      input.trains.size() != static_cast<std::size_t>(input.M) * input.K) {
    throw Error(ErrorCode::BadDimension, "input trains do not match M x K");
  }
  if (std::abs(input.horizon - T) > 1e-12 * std::max(1.0, T)) {
    throw Error(ErrorCode::InputHorizonMismatch, "input horizon differs from T");
  }
  for (const auto& train : input.trains) {
    for (const auto& sp : train) {
      if (sp.time < 0.0 || sp.time > T) {
        throw Error(ErrorCode::InputHorizonMismatch, "input point outside [0, T]");
      }
    }
  }
}

}  // namespace

PhiOutput phi_apply(const SpikeInput& input, const ValidatedParams& params,
                    const InitialCondition& init, double T, std::uint64_t master_seed,
                    std::uint64_t path_id, const PhiOptions& opts) {
  check_input(input, params, T);
  validate_initial(init, params);
  const std::uint64_t seed = path_seed(master_seed, path_id);
  const auto fields = make_fields(seed, input.M, input.K, T, opts);
  return phi_with_fields(input, params, init, T, seed, fields);
}

namespace {

SpikeInput seed_input_from(const std::vector<LazyPoissonField>& fields,
                           const InitialCondition& init, int M, int K, double T) {
  SpikeInput in;
  in.horizon = T;
  in.M = M;
  in.K = K;
  in.trains.resize(static_cast<std::size_t>(M) * K);
  for (int n = 0; n < M; ++n) {
    for (int j = 0; j < K; ++j) {
      const std::size_t s = static_cast<std::size_t>(n) * K + j;
      const double rate = initial_mean(init, j);
      double t = 0.0;
      while (auto p = fields[s].first_below(t, T, rate)) {
        in.trains[s].push_back({p->time, p->id, true});
        t = p->time;
      }
    }
  }
  return in;
}

}  // namespace

SpikeInput phi_seed_input(const ValidatedParams& params, const InitialCondition& init, int M,
                          double T, std::uint64_t master_seed, std::uint64_t path_id,
                          const PhiOptions& opts) {
  validate_initial(init, params);
  if (M < 2) throw Error(ErrorCode::MTooSmall, "M must be at least 2");
  const std::uint64_t seed = path_seed(master_seed, path_id);
  const auto fields = make_fields(seed, M, params.K(), T, opts);
  return seed_input_from(fields, init, M, params.K(), T);
}

ContractionResult phi_contraction_curve(const ValidatedParams& params,
                                        const InitialCondition& init, int M, double T, int L,
                                        std::int64_t paths, std::uint64_t master_seed,
                                        const PhiOptions& opts, int threads) {
  if (L < 3) throw Error(ErrorCode::InvalidArgument, "contraction curve needs L >= 3");
  if (paths < 2) throw Error(ErrorCode::InsufficientPaths, "contraction curve needs >= 2 paths");
  if (M < 2) throw Error(ErrorCode::MTooSmall, "M must be at least 2");
  if (!params.convergence_eligible()) {
    throw Error(ErrorCode::DecayNotSupported, "the Phi map requires tau infinite");
  }
  validate_initial(init, params);
  const int K = params.K();

  struct Sums {
    std::vector<double> s, cross;
  };
  auto blocks = parallel_blocks<Sums>(paths, kPathBlock, threads, [&](std::int64_t a,
                                                                      std::int64_t b) {
    Sums acc{std::vector<double>(L, 0.0), std::vector<double>(L * L, 0.0)};
    std::vector<double> d(L);
    for (std::int64_t p = a; p < b; ++p) {
      const std::uint64_t seed = path_seed(master_seed, static_cast<std::uint64_t>(p));
      const auto fields = make_fields(seed, M, K, T, opts);
      SpikeInput in = seed_input_from(fields, init, M, K, T);
      PhiOutput prev = phi_with_fields(in, params, init, T, seed, fields);
      for (int l = 0; l < L; ++l) {
        PhiOutput next = phi_with_fields(prev.spikes, params, init, T, seed, fields);
        double dist = 0.0;
        for (std::size_t s = 0; s < next.trajectories.size(); ++s)
          dist += sup_distance(next.trajectories[s], prev.trajectories[s], T);
        d[l] = dist;
        prev = std::move(next);
      }
      for (int x = 0; x < L; ++x) {
        acc.s[x] += d[x];
        for (int y = 0; y < L; ++y) acc.cross[x * L + y] += d[x] * d[y];
      }
    }
    return acc;
  });
  std::vector<double> s(L, 0.0), cross(L * L, 0.0);
  for (const auto& blk : blocks) {
    for (int x = 0; x < L; ++x) s[x] += blk.s[x];
    for (int c = 0; c < L * L; ++c) cross[c] += blk.cross[c];
  }
  ContractionResult res;
  res.paths = paths;
  const double n = static_cast<double>(paths);
  res.d.resize(L);
  res.se.resize(L);
  res.covariance.resize(L * L);
  for (int x = 0; x < L; ++x) res.d[x] = s[x] / n;
  for (int x = 0; x < L; ++x) {
    for (int y = 0; y < L; ++y) {
      const double cov = (cross[x * L + y] - n * res.d[x] * res.d[y]) / (n - 1.0);
      res.covariance[x * L + y] = cov / n;
    }
    res.se[x] = std::sqrt(std::max(0.0, res.covariance[x * L + x]));
  }
  int rising = 0;
  for (int x = 1; x < L; ++x) {
    const double band = 3.0 * std::hypot(res.se[x], res.se[x - 1]);
    rising = res.d[x] > res.d[x - 1] + band ? rising + 1 : 0;
    if (rising >= 3) throw Error(ErrorCode::NoConvergence, "Phi iterates drift apart");
  }
  return res;
}

}  // namespace rmfgl
