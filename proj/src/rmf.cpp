#include "rmfgl/rmf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "rmfgl/error.hpp"
#include "rmfgl/gl.hpp"

namespace rmfgl {

namespace {

// Complete binary tree over n leaves; internal nodes hold subtree sums.
class SumTree {
 public:
  explicit SumTree(std::size_t n) {
    while (size_ < n) size_ <<= 1;
    node_.assign(2 * size_, 0.0);
  }
  void set(std::size_t leaf, double v) {
    std::size_t k = leaf + size_;
    node_[k] = v;
    for (k >>= 1; k >= 1; k >>= 1) node_[k] = node_[2 * k] + node_[2 * k + 1];
  }
  double total() const { return node_[1]; }
  double leaf(std::size_t i) const { return node_[i + size_]; }
  // Leaf whose cumulative range contains u, 0 <= u < total().
  std::size_t find(double u) const {
    std::size_t k = 1;
    while (k < size_) {
      if (u < node_[2 * k] || node_[2 * k + 1] <= 0.0) {
        k = 2 * k;
      } else {
        u -= node_[2 * k];
        k = 2 * k + 1;
      }
    }
    return k - size_;
  }

 private:
  std::size_t size_ = 1;
  std::vector<double> node_;
};

// Same shape, internal nodes hold the index of the smallest leaf.
class MinTree {
 public:
  explicit MinTree(std::size_t n) {
    while (size_ < n) size_ <<= 1;
    key_.assign(size_, std::numeric_limits<double>::infinity());
    node_.assign(2 * size_, 0);
    for (std::size_t i = 0; i < size_; ++i) node_[i + size_] = i;
    for (std::size_t k = size_ - 1; k >= 1; --k) node_[k] = better(node_[2 * k], node_[2 * k + 1]);
  }
  void set(std::size_t leaf, double v) {
    key_[leaf] = v;
    for (std::size_t k = (leaf + size_) >> 1; k >= 1; k >>= 1)
      node_[k] = better(node_[2 * k], node_[2 * k + 1]);
  }
  std::size_t argmin() const { return node_[1]; }
  double key(std::size_t i) const { return key_[i]; }

 private:
  std::size_t better(std::size_t a, std::size_t b) const { return key_[b] < key_[a] ? b : a; }
  std::size_t size_ = 2;
  std::vector<double> key_;
  std::vector<std::size_t> node_;
};

struct Candidate {
  double time = std::numeric_limits<double>::infinity();
  PointId id;
};

}  // namespace

std::size_t RmfPath::grid_index(double t) const {
  const double tol = 1e-9 * std::max(1.0, times.empty() ? 1.0 : times.back());
  auto it = std::lower_bound(times.begin(), times.end(), t - tol);
  if (it == times.end() || std::abs(*it - t) > tol) {
    std::ostringstream os;
    os << "t = " << t << " is not a grid time";
    throw Error(ErrorCode::GridMismatch, os.str());
  }
  return static_cast<std::size_t>(it - times.begin());
}

const FocalTally& RmfPath::tally_for(int replica) const {
  for (const auto& t : tallies)
    if (t.replica == replica) return t;
  throw Error(ErrorCode::InvalidArgument, "replica " + std::to_string(replica + 1) + " was not tallied");
}

RmfPath simulate_rmf(const ValidatedParams& params, int M, const InitialCondition& init, double T,
                     std::uint64_t master_seed, std::uint64_t path_id, const RmfOptions& opts) {
  if (!params.convergence_eligible()) {
    throw Error(ErrorCode::DecayNotSupported, "the replica dynamics require tau infinite");
  }
  if (M < 2) throw Error(ErrorCode::MTooSmall, "M must be at least 2");
  if (!(T > 0.0)) throw Error(ErrorCode::HorizonNonPositive, "T must be positive");
  validate_initial(init, params);

  const int K = params.K();
  const std::size_t S = static_cast<std::size_t>(M) * K;
  const std::uint64_t seed = path_seed(master_seed, path_id);

  RmfPath out;
  out.M = M;
  out.K = K;
  out.times = make_grid(T, opts.grid_step);
  const std::size_t G = out.times.size();
  out.counts.assign(G * S, 0);
  out.lambda.assign(G * S, 0.0);
  out.integral.assign(G * S, 0.0);

  std::vector<int> focal_of(M, -1);
  for (int f : opts.focal_replicas) {
    if (f < 0 || f >= M) throw Error(ErrorCode::InvalidArgument, "focal replica out of range");
    if (focal_of[f] >= 0) continue;
    focal_of[f] = static_cast<int>(out.tallies.size());
    out.tallies.push_back({f, std::vector<std::int64_t>(G * K * K, 0)});
  }
  std::vector<std::int64_t> running_tally(out.tallies.size() * K * K, 0);

  std::vector<double> lam(S), acc(S, 0.0), t_last(S, 0.0);
  std::vector<std::int64_t> counts(S, 0);
  for (int m = 0; m < M; ++m) {
    for (int i = 0; i < K; ++i) {
      RandomStream rng = derive_stream(seed, StreamKey{m + 1, i + 1, StreamTag::Initial});
      lam[m * K + i] = sample_initial_coordinate(init, i, rng);
      if (lam[m * K + i] > opts.h_max) {
        throw Error(ErrorCode::IntensityOverflow, "initial intensity exceeds H_max");
      }
    }
  }
  if (opts.record_spikes) out.spikes.resize(S);
  if (opts.record_trajectories) {
    out.trajectories.resize(S);
    for (std::size_t s = 0; s < S; ++s) {
      auto& tr = out.trajectories[s];
      tr.replica = static_cast<int>(s / K);
      tr.neuron = static_cast<int>(s % K);
      tr.base = params.b(tr.neuron);
      tr.tau = kInfiniteTau;
      tr.segments.push_back({0.0, lam[s]});
    }
  }

  std::size_t next_grid = 0;
  auto snapshot_until = [&](double t_event) {
    while (next_grid < G && out.times[next_grid] < t_event) {
      const double tg = out.times[next_grid];
      const std::size_t base = next_grid * S;
      for (std::size_t s = 0; s < S; ++s) {
        out.counts[base + s] = counts[s];
        out.lambda[base + s] = lam[s];
        out.integral[base + s] = acc[s] + lam[s] * (tg - t_last[s]);
      }
      for (std::size_t f = 0; f < out.tallies.size(); ++f) {
        std::copy_n(running_tally.begin() + f * K * K, K * K,
                    out.tallies[f].channel.begin() + next_grid * K * K);
      }
      ++next_grid;
    }
  };

  auto set_value = [&](std::size_t s, double t, double v) {
    acc[s] += lam[s] * (t - t_last[s]);
    t_last[s] = t;
    lam[s] = v;
    if (v > opts.h_max) {
      std::ostringstream os;
      os << "intensity " << v << " exceeds H_max " << opts.h_max;
      throw Error(ErrorCode::IntensityOverflow, os.str());
    }
    if (opts.record_trajectories) out.trajectories[s].segments.push_back({t, v});
  };

  // Applies a spike of stream s at time t. `route(i)` returns the 0-based
  // replica receiving the effect on neuron i. `touched` collects the streams
  // whose intensity changed.
  std::vector<std::size_t> touched;
  auto apply_spike = [&](std::size_t s, double t, const Spike& spike, auto&& route) {
    const int n = static_cast<int>(s / K);
    const int j = static_cast<int>(s % K);
    touched.clear();
    const double before = lam[s];
    set_value(s, t, params.r(j));
    ++counts[s];
    touched.push_back(s);
    if (opts.record_spikes) out.spikes[s].push_back(spike);
    if (opts.record_trajectories) {
      out.trajectories[s].events.push_back(
          {t, EventKind::Spike, -1, -1, params.r(j) - before, params.r(j)});
    }
    for (int i = 0; i < K; ++i) {
      if (i == j) continue;
      const int v = route(i);
      const std::size_t target = static_cast<std::size_t>(v) * K + i;
      const double w = params.weight(j, i);
      set_value(target, t, lam[target] + w);
      touched.push_back(target);
      if (focal_of[v] >= 0) ++running_tally[(focal_of[v] * K + i) * K + j];
      if (opts.record_routing) out.routing.push_back({t, n, j, i, v});
      if (opts.record_trajectories) {
        out.trajectories[target].events.push_back({t, EventKind::Arrival, j, n, w, lam[target]});
      }
    }
  };

  if (opts.engine == Engine::Direct) {
    RandomStream clock = derive_stream(seed, StreamKey{1, 1, StreamTag::Auxiliary});
    RandomStream router = derive_stream(seed, StreamKey{1, 1, StreamTag::Routing});
    SumTree tree(S);
    for (std::size_t s = 0; s < S; ++s) tree.set(s, lam[s]);
    double t = 0.0;
    while (true) {
      const double total = tree.total();
      const double t_next = t + clock.exponential(total);
      if (t_next > T) break;
      snapshot_until(t_next);
      t = t_next;
      std::size_t s = tree.find(clock.uniform() * total);
      while (tree.leaf(s) <= 0.0) s = tree.find(clock.uniform() * total);
      const int origin = static_cast<int>(s / K);
      Spike spike{t, PointId{}, false};
      apply_spike(s, t, spike, [&](int) {
        const auto pick = static_cast<int>(router.below(static_cast<std::uint64_t>(M - 1)));
        return pick >= origin ? pick + 1 : pick;
      });
      for (std::size_t u : touched) tree.set(u, lam[u]);
    }
  } else {
    const FieldGeometry geom{opts.grid_step, 1.0, T, opts.h_max};
    std::vector<LazyPoissonField> fields;
    fields.reserve(S);
    for (int m = 0; m < M; ++m)
      for (int i = 0; i < K; ++i)
        fields.emplace_back(seed, StreamKey{m + 1, i + 1, StreamTag::Embedding}, geom);

    std::vector<Candidate> cand(S);
    MinTree tree(S);
    auto refresh = [&](std::size_t s, double from) {
      Candidate c;
      if (auto p = fields[s].first_below(from, T, lam[s])) {
        c.time = p->time;
        c.id = p->id;
      }
      cand[s] = c;
      tree.set(s, c.time);
    };
    for (std::size_t s = 0; s < S; ++s) refresh(s, 0.0);
    while (true) {
      const std::size_t s = tree.argmin();
      const Candidate c = cand[s];
      if (!std::isfinite(c.time)) break;
      snapshot_until(c.time);
      const int origin = static_cast<int>(s / K);
      const RoutingMark mark(c.id);
      apply_spike(s, c.time, Spike{c.time, c.id, true},
                  [&](int i) { return routing_mark(mark, i + 1, M, origin + 1) - 1; });
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      for (std::size_t u : touched) refresh(u, c.time);
    }
  }
  snapshot_until(std::numeric_limits<double>::infinity());
  return out;
}

ArrivalDecomposition arrival_decomposition(const RmfPath& path, const ValidatedParams& params,
                                           int m, int i, double t) {
  const std::size_t g = path.grid_index(t);
  const auto& tally = path.tally_for(m);
  const int K = path.K;
  ArrivalDecomposition d;
  d.channels.assign(K, 0);
  for (int j = 0; j < K; ++j) {
    if (j == i) continue;
    d.channels[j] = tally.channel[(g * K + i) * K + j];
    d.weighted += params.weight(j, i) * static_cast<double>(d.channels[j]);
  }
  return d;
}

std::vector<RoutingSample> routing_samples(const RmfPath& path, int m, int i, int j, double t) {
  const std::size_t g = path.grid_index(t);
  std::vector<RoutingSample> out(path.M);
  for (const auto& rec : path.routing) {
    if (rec.time > path.times[g] || rec.source_neuron != j || rec.target_neuron != i) continue;
    if (rec.source_replica == m) continue;
    out[rec.source_replica].hits.push_back(rec.chosen == m ? 1 : 0);
  }
  std::vector<RoutingSample> samples;
  for (int n = 0; n < path.M; ++n) {
    if (n == m) continue;
    out[n].source_count = path.count(g, n, j);
    samples.push_back(std::move(out[n]));
  }
  return samples;
}

RoutingReport routing_conditional_check(const std::vector<RoutingSample>& samples, int M,
                                        std::int64_t paths, std::int64_t min_bin) {
  if (M < 2) throw Error(ErrorCode::MTooSmall, "M must be at least 2");
  if (paths < 10000) {
    throw Error(ErrorCode::InsufficientPaths, "routing check needs at least 10^4 paths");
  }
  struct Acc {
    std::int64_t n = 0, ones = 0;
    std::int64_t pairs = 0;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  };
  std::map<std::int64_t, Acc> bins;
  for (const auto& smp : samples) {
    if (smp.hits.empty()) continue;
    auto& a = bins[smp.source_count];
    for (std::size_t k = 0; k < smp.hits.size(); ++k) {
      ++a.n;
      a.ones += smp.hits[k];
      if (k + 1 < smp.hits.size()) {
        const double x = smp.hits[k], y = smp.hits[k + 1];
        ++a.pairs;
        a.sx += x;
        a.sy += y;
        a.sxx += x * x;
        a.syy += y * y;
        a.sxy += x * y;
      }
    }
  }
  RoutingReport rep;
  rep.M = M;
  rep.expected = 1.0 / (M - 1);
  const double p = rep.expected;
  for (const auto& [label, a] : bins) {
    if (a.n < min_bin) continue;
    RoutingBin b;
    b.source_count = label;
    b.indicators = a.n;
    b.mean = static_cast<double>(a.ones) / static_cast<double>(a.n);
    const double var = p * (1.0 - p) / static_cast<double>(a.n);
    if (var > 0.0) {
      b.z_mean = (b.mean - p) / std::sqrt(var);
    } else {
      b.z_mean = b.mean == p ? 0.0 : std::numeric_limits<double>::infinity();
    }
    b.pairs = a.pairs;
    b.correlation = std::numeric_limits<double>::quiet_NaN();
    if (a.pairs >= 2) {
      const double np = static_cast<double>(a.pairs);
      const double cxy = a.sxy / np - (a.sx / np) * (a.sy / np);
      const double vx = a.sxx / np - (a.sx / np) * (a.sx / np);
      const double vy = a.syy / np - (a.sy / np) * (a.sy / np);
      if (vx > 0.0 && vy > 0.0) {
        b.correlation = cxy / std::sqrt(vx * vy);
        b.z_correlation = b.correlation * std::sqrt(np);
      }
    }
    b.pass = std::abs(b.z_mean) <= 3.0 && std::abs(b.z_correlation) <= 3.0;
    rep.pass = rep.pass && b.pass;
    rep.bins.push_back(b);
  }
  return rep;
}

}  // namespace rmfgl
