#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "rmfgl/error.hpp"
#include "rmfgl/gl.hpp"
#include "rmfgl/rmf.hpp"
#include "rmfgl/stats.hpp"

using namespace rmfgl;

namespace {

ValidatedParams pair_params() {
  return validate_params(NetworkParams::from_rows({{0, 1}, {0.5, 0}}, {1, 1.5}, {0.5, 1}));
}

const InitialCondition kInit = InitialCondition::deterministic({2.0, 2.5});

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(SimulateRmf, ForcedRoutingAtTwoReplicas) {
  const auto params = pair_params();
  for (auto engine : {Engine::Direct, Engine::Embedded}) {
    RmfOptions ro;
    ro.engine = engine;
    for (int p = 0; p < 300; ++p) {
      const auto path = simulate_rmf(params, 2, kInit, 1.0, 21, p, ro);
      const auto& tally = path.tally_for(0);
      for (std::size_t g = 0; g < path.times.size(); ++g) {
        // Every spike of replica 2 lands on replica 1.
        ASSERT_EQ(tally.channel[(g * 2 + 1) * 2 + 0], path.count(g, 1, 0));
        ASSERT_EQ(tally.channel[(g * 2 + 0) * 2 + 1], path.count(g, 1, 1));
      }
      const auto d = arrival_decomposition(path, params, 0, 1, 1.0);
      ASSERT_EQ(d.channels[0], path.count(path.times.size() - 1, 1, 0));
    }
  }
}

TEST(ArrivalDecomposition, WeightedIdentity) {
  const auto params = pair_params();
  for (int p = 0; p < 300; ++p) {
    const auto path = simulate_rmf(params, 4, kInit, 1.0, 22, p);
    for (double t : {0.0, 0.35, 1.0}) {
      for (int i = 0; i < 2; ++i) {
        const auto d = arrival_decomposition(path, params, 0, i, t);
        double w = 0.0;
        for (int j = 0; j < 2; ++j) w += params.weight(j, i) * static_cast<double>(d.channels[j]);
        ASSERT_EQ(d.weighted, w);
        ASSERT_EQ(d.channels[i], 0);
        if (t == 0.0) ASSERT_EQ(d.weighted, 0.0);
      }
    }
  }
}

TEST(SimulateRmf, SingleNeuronReplicasMatchClosedForm) {
  const auto params = validate_params(NetworkParams::from_rows({{0}}, {1}, {1}));
  const auto init = InitialCondition::deterministic({2.0});
  EmpiricalPmf pmf;
  for (int p = 0; p < 100000; ++p) {
    const auto path = simulate_rmf(params, 3, init, 1.0, 23, p);
    pmf.add(path.count(path.times.size() - 1, 1, 0));
  }
  const auto law = single_neuron_law(2.0, 1.0, 1.0);
  EXPECT_LT(empirical_tv(pmf, ExactPmf{1.0, law.pmf, law.tail}).value, 0.02);
}

TEST(SimulateRmf, ReplicasExchangeable) {
  const auto params = pair_params();
  RunningMoments a, b;
  for (int p = 0; p < 100000; ++p) {
    const auto path = simulate_rmf(params, 3, kInit, 1.0, 24, p);
    const std::size_t g = path.times.size() - 1;
    a.add(path.intensity(g, 0, 0));
    b.add(path.intensity(g, 1, 0));
  }
  EXPECT_LT(std::abs(a.mean() - b.mean()), 3 * std::hypot(a.se(), b.se()));
}

TEST(SimulateRmf, EnginesAgreeInLaw) {
  const auto params = pair_params();
  const int n = 100000;
  std::vector<std::vector<std::int64_t>> direct, embedded;
  RmfOptions rd, re;
  re.engine = Engine::Embedded;
  for (int p = 0; p < n; ++p) {
    const auto a = simulate_rmf(params, 3, kInit, 0.5, 25, p, rd);
    const auto b = simulate_rmf(params, 3, kInit, 0.5, 26, p, re);
    const std::size_t g = a.times.size() - 1;
    std::vector<std::int64_t> x, y;
    for (int m = 0; m < 3; ++m) {
      for (int i = 0; i < 2; ++i) {
        x.push_back(a.count(g, m, i));
        y.push_back(b.count(g, m, i));
      }
    }
    direct.push_back(std::move(x));
    embedded.push_back(std::move(y));
  }
  EXPECT_GT(two_sample_chi_square(direct, embedded).p_value, 0.001);
}

TEST(SimulateRmf, EmbeddingCouplesFirstEventAcrossM) {
  const auto params = pair_params();
  RmfOptions ro;
  ro.engine = Engine::Embedded;
  ro.record_spikes = true;
  auto first = [](const RmfPath& path) {
    int best = -1;
    double t = INFINITY;
    for (std::size_t s = 0; s < path.spikes.size(); ++s) {
      if (!path.spikes[s].empty() && path.spikes[s].front().time < t) {
        t = path.spikes[s].front().time;
        best = static_cast<int>(s);
      }
    }
    return best;
  };
  int shared = 0;
  for (int p = 0; p < 500; ++p) {
    const auto small = simulate_rmf(params, 3, kInit, 1.0, 27, p, ro);
    const auto large = simulate_rmf(params, 5, kInit, 1.0, 27, p, ro);
    const int s3 = first(small), s5 = first(large);
    ASSERT_GE(s3, 0);
    ASSERT_GE(s5, 0);
    if (s5 < 3 * 2) {
      ++shared;
      ASSERT_EQ(s3, s5);
      ASSERT_EQ(small.spikes[s3].front().time, large.spikes[s5].front().time);
      ASSERT_EQ(small.spikes[s3].front().id, large.spikes[s5].front().id);
    } else {
      ASSERT_LT(large.spikes[s5].front().time, small.spikes[s3].front().time);
    }
  }
  EXPECT_GT(shared, 100);
}

TEST(SimulateRmf, Deterministic) {
  const auto params = pair_params();
  for (auto engine : {Engine::Direct, Engine::Embedded}) {
    RmfOptions ro;
    ro.engine = engine;
    const auto a = simulate_rmf(params, 4, kInit, 1.0, 28, 3, ro);
    const auto b = simulate_rmf(params, 4, kInit, 1.0, 28, 3, ro);
    EXPECT_EQ(a.counts, b.counts);
    EXPECT_EQ(a.lambda, b.lambda);
  }
}

TEST(SimulateRmf, Errors) {
  const auto decaying =
      validate_params(NetworkParams::from_rows({{0, 1}, {1, 0}}, {1, 1}, {1, 1}, {1.0, 1.0}));
  EXPECT_EQ(code_of([&] { simulate_rmf(decaying, 3, kInit, 1.0, 1, 0); }), ErrorCode::DecayNotSupported);
  EXPECT_EQ(code_of([&] { simulate_rmf(pair_params(), 1, kInit, 1.0, 1, 0); }), ErrorCode::MTooSmall);
  const auto path = simulate_rmf(pair_params(), 3, kInit, 1.0, 1, 0);
  EXPECT_EQ(code_of([&] { path.grid_index(0.333); }), ErrorCode::GridMismatch);
}

namespace {

std::vector<RoutingSample> collect_routing(int M, int paths, std::uint64_t seed) {
  const auto params = pair_params();
  RmfOptions ro;
  ro.record_routing = true;
  std::vector<RoutingSample> all;
  for (int p = 0; p < paths; ++p) {
    const auto path = simulate_rmf(params, M, kInit, 1.0, seed, p, ro);
    for (auto& s : routing_samples(path, 0, 1, 0, 1.0)) all.push_back(std::move(s));
  }
  return all;
}

}  // namespace

TEST(RoutingCheck, ForcedAtTwoReplicas) {
  const auto samples = collect_routing(2, 10000, 30);
  for (const auto& s : samples)
    for (auto h : s.hits) ASSERT_EQ(h, 1);
  const auto rep = routing_conditional_check(samples, 2, 10000);
  EXPECT_TRUE(rep.pass);
  for (const auto& b : rep.bins) EXPECT_EQ(b.mean, 1.0);
}

TEST(RoutingCheck, UniformAtFiveReplicas) {
  const auto samples = collect_routing(5, 10000, 31);
  const auto rep = routing_conditional_check(samples, 5, 10000);
  EXPECT_DOUBLE_EQ(rep.expected, 0.25);
  EXPECT_FALSE(rep.bins.empty());
  EXPECT_TRUE(rep.pass);
}

TEST(RoutingCheck, ConstantRouterFails) {
  auto samples = collect_routing(5, 10000, 32);
  for (auto& s : samples) std::fill(s.hits.begin(), s.hits.end(), 1);
  EXPECT_FALSE(routing_conditional_check(samples, 5, 10000).pass);
}

TEST(RoutingCheck, NeedsEnoughPaths) {
  const auto samples = collect_routing(5, 100, 33);
  EXPECT_EQ(code_of([&] { routing_conditional_check(samples, 5, 100); }), ErrorCode::InsufficientPaths);
}
