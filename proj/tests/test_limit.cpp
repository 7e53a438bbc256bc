#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "rmfgl/error.hpp"
#include "rmfgl/gl.hpp"
#include "rmfgl/limit.hpp"
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

TEST(MeanIntensityGrid, InterpolationAndIntegral) {
  const std::vector<double> times{0.0, 0.5, 1.0};
  MeanIntensityGrid g;
  g.K = 1;
  g.times = times;
  g.mean = {1.0, 3.0, 3.0};
  g.se = {0, 0, 0};
  g.integrate();
  EXPECT_DOUBLE_EQ(g.value(0, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(g.integral(0, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(g.integral(0, 0.25), 0.25 * 1.5);
  EXPECT_DOUBLE_EQ(g.integral(0, 1.0), 2.5);
  const auto c = MeanIntensityGrid::constant(2, times, {1.0, 2.0});
  EXPECT_DOUBLE_EQ(c.integral(1, 0.7), 1.4);
}

TEST(Picard, SingleNeuronClosedForm) {
  const auto params = validate_params(NetworkParams::from_rows({{0}}, {1}, {1}));
  const auto init = InitialCondition::deterministic({2.0});
  PicardOptions po;
  po.grid_step = 0.1;
  const auto res = picard_solve_means(params, init, 1.0, 40000, 41, po);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.means.mean[0], 2.0);
  EXPECT_EQ(res.means.se[0], 0.0);
  for (std::size_t g = 1; g < res.means.times.size(); ++g) {
    const double exact = single_neuron_law(2.0, 1.0, res.means.times[g]).mean_intensity;
    EXPECT_LE(std::abs(res.means.mean[g] - exact), 3 * res.means.se[g]) << "t=" << res.means.times[g];
  }
}

TEST(Picard, SymmetricNetworkEqualMeans) {
  const auto params = validate_params(
      NetworkParams::from_rows({{0, 0.5, 0.5}, {0.5, 0, 0.5}, {0.5, 0.5, 0}}, {1, 1, 1}, {1, 1, 1}));
  const auto init = InitialCondition::deterministic({2.0, 2.0, 2.0});
  PicardOptions po;
  po.grid_step = 0.1;
  const auto res = picard_solve_means(params, init, 1.0, 20000, 42, po);
  for (std::size_t g = 0; g < res.means.times.size(); ++g) {
    for (int a = 0; a < 3; ++a) {
      for (int b = a + 1; b < 3; ++b) {
        const double gap = std::abs(res.means.mean[g * 3 + a] - res.means.mean[g * 3 + b]);
        EXPECT_LE(gap, 3 * std::hypot(res.means.se[g * 3 + a], res.means.se[g * 3 + b]) + 1e-12);
      }
    }
  }
}

TEST(Picard, InitialValueExact) {
  PicardOptions po;
  po.grid_step = 0.05;
  const auto res = picard_solve_means(pair_params(), kInit, 0.5, 5000, 43, po);
  EXPECT_EQ(res.means.mean[0], 2.0);
  EXPECT_EQ(res.means.mean[1], 2.5);
  for (std::size_t c = 1; c < res.means.cumulative.size(); ++c) EXPECT_GE(res.means.cumulative[c] + 1e-15, 0.0);
  for (std::size_t g = 1; g < res.means.times.size(); ++g)
    for (int j = 0; j < 2; ++j)
      EXPECT_GE(res.means.cumulative[g * 2 + j], res.means.cumulative[(g - 1) * 2 + j]);
}

TEST(Picard, GridRefinementStable) {
  PicardOptions coarse, fine;
  coarse.grid_step = 0.05;
  fine.grid_step = 0.025;
  const auto a = picard_solve_means(pair_params(), kInit, 0.5, 40000, 44, coarse);
  const auto b = picard_solve_means(pair_params(), kInit, 0.5, 40000, 45, fine);
  const std::size_t ga = a.means.times.size() - 1, gb = b.means.times.size() - 1;
  for (int j = 0; j < 2; ++j) {
    const double d = std::abs(a.means.mean[ga * 2 + j] - b.means.mean[gb * 2 + j]);
    EXPECT_LE(d, 3 * std::hypot(a.means.se[ga * 2 + j], b.means.se[gb * 2 + j]));
  }
}

TEST(SimulateLimit, ChannelsArePoisson) {
  PicardOptions po;
  const auto pic = picard_solve_means(pair_params(), kInit, 0.5, 20000, 46, po);
  EmpiricalPmf a01, a10;
  for (int p = 0; p < 100000; ++p) {
    const auto path = simulate_limit_path(pair_params(), kInit, pic.means, 0.5, 47, p);
    const std::size_t g = path.times.size() - 1;
    a01.add(path.arrival(g, 0, 1));
    a10.add(path.arrival(g, 1, 0));
  }
  EXPECT_LT(empirical_tv(a01, poisson_pmf(pic.means.integral(0, 0.5))).value, 0.01);
  EXPECT_LT(empirical_tv(a10, poisson_pmf(pic.means.integral(1, 0.5))).value, 0.01);
}

TEST(SimulateLimit, ChannelsIndependent) {
  const auto params = validate_params(
      NetworkParams::from_rows({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}, {1, 1, 1}, {1, 1, 1}));
  const auto init = InitialCondition::deterministic({2, 2, 2});
  const auto times = make_grid(1.0, 0.05);
  const auto means = MeanIntensityGrid::constant(3, times, {2.0, 2.0, 2.0});
  const int n = 100000;
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (int p = 0; p < n; ++p) {
    const auto path = simulate_limit_path(params, init, means, 1.0, 48, p);
    const std::size_t g = path.times.size() - 1;
    const double x = path.arrival(g, 0, 1), y = path.arrival(g, 0, 2);
    sx += x; sy += y; sxy += x * y; sxx += x * x; syy += y * y;
  }
  const double cov = sxy / n - sx * sy / n / n;
  const double corr = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
  EXPECT_LT(std::abs(corr), 0.01);
}

TEST(SimulateLimit, ZeroRatesGiveSingleNeurons) {
  const auto params = pair_params();
  const auto times = make_grid(1.0, 0.05);
  const auto zero = MeanIntensityGrid::constant(2, times, {0.0, 0.0});
  EmpiricalPmf pmf;
  for (int p = 0; p < 50000; ++p) {
    const auto path = simulate_limit_path(params, kInit, zero, 1.0, 49, p);
    const std::size_t g = path.times.size() - 1;
    ASSERT_EQ(path.arrival(g, 0, 1), 0);
    ASSERT_EQ(path.arrival(g, 1, 0), 0);
    pmf.add(path.counts[g * 2 + 0]);
  }
  const auto law = single_neuron_law(2.0, 0.5, 1.0);
  const auto tv = empirical_tv(pmf, ExactPmf{1.0, law.pmf, law.tail});
  EXPECT_LT(tv.value, tv.bias_bound + 3 * tv.se);
}

TEST(SimulateLimit, GridTooShort) {
  const auto means = MeanIntensityGrid::constant(2, make_grid(0.5, 0.05), {1.0, 1.0});
  EXPECT_EQ(code_of([&] { simulate_limit_path(pair_params(), kInit, means, 1.0, 1, 0); }),
            ErrorCode::GridTooShort);
}

TEST(Phi, EmptyInputIsPureReset) {
  const auto params = pair_params();
  SpikeInput empty{1.0, 3, 2, std::vector<std::vector<Spike>>(6)};
  EmpiricalPmf pmf;
  for (int p = 0; p < 50000; ++p) {
    const auto out = phi_apply(empty, params, kInit, 1.0, 50, p);
    for (const auto& tr : out.trajectories)
      for (const auto& e : tr.events) ASSERT_EQ(e.kind, EventKind::Spike);
    pmf.add(static_cast<std::int64_t>(out.spikes.trains[2].size()));  // replica 2, neuron 1
  }
  const auto law = single_neuron_law(2.0, 0.5, 1.0);
  const auto tv = empirical_tv(pmf, ExactPmf{1.0, law.pmf, law.tail});
  EXPECT_LT(tv.value, tv.bias_bound + 3 * tv.se);
}

TEST(Phi, DeterministicAndChecksInput) {
  const auto params = pair_params();
  const auto in = phi_seed_input(params, kInit, 3, 0.5, 51, 4);
  const auto a = phi_apply(in, params, kInit, 0.5, 51, 4);
  const auto b = phi_apply(in, params, kInit, 0.5, 51, 4);
  ASSERT_EQ(a.spikes.trains.size(), b.spikes.trains.size());
  for (std::size_t s = 0; s < a.spikes.trains.size(); ++s) {
    ASSERT_EQ(a.spikes.trains[s].size(), b.spikes.trains[s].size());
    for (std::size_t k = 0; k < a.spikes.trains[s].size(); ++k)
      EXPECT_EQ(a.spikes.trains[s][k].time, b.spikes.trains[s][k].time);
  }
  EXPECT_EQ(code_of([&] { phi_apply(in, params, kInit, 1.0, 51, 4); }), ErrorCode::InputHorizonMismatch);
}

TEST(Phi, ContractionDecaysFast) {
  const auto params = pair_params();
  const auto c = phi_contraction_curve(params, kInit, 3, 0.5, 5, 4000, 52);
  ASSERT_EQ(c.d.size(), 5u);
  for (std::size_t l = 1; l < c.d.size(); ++l)
    EXPECT_LE(c.d[l], c.d[l - 1] + 3 * std::hypot(c.se[l], c.se[l - 1]));
  // Ratios shrink, the signature of factorial decay.
  for (std::size_t l = 2; l < 4; ++l) {
    const double r_now = c.d[l] / c.d[l - 1], r_prev = c.d[l - 1] / c.d[l - 2];
    const double sig = r_now * std::hypot(c.se[l] / c.d[l], c.se[l - 1] / c.d[l - 1]);
    EXPECT_LE(r_now, r_prev + 3 * sig);
  }
}

TEST(Phi, ContractionSeedInvariant) {
  const auto params = pair_params();
  const auto a = phi_contraction_curve(params, kInit, 3, 0.5, 3, 3000, 53);
  const auto b = phi_contraction_curve(params, kInit, 3, 0.5, 3, 3000, 54);
  for (std::size_t l = 0; l < 3; ++l)
    EXPECT_LE(std::abs(a.d[l] - b.d[l]), 3 * std::hypot(a.se[l], b.se[l]));
}
