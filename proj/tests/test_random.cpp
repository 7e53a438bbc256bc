#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "rmfgl/error.hpp"
#include "rmfgl/random.hpp"
#include "rmfgl/stats.hpp"

using namespace rmfgl;

TEST(RandomStream, SameKeySameSequence) {
  auto a = derive_stream(42, {1, 1, StreamTag::Embedding});
  auto b = derive_stream(42, {1, 1, StreamTag::Embedding});
  for (int k = 0; k < 1000; ++k) ASSERT_EQ(a(), b());
}

TEST(RandomStream, DifferentKeysDiffer) {
  std::set<std::uint64_t> seen;
  for (int m = 1; m <= 4; ++m)
    for (int i = 1; i <= 4; ++i)
      for (auto tag : {StreamTag::Embedding, StreamTag::Routing, StreamTag::Initial, StreamTag::Auxiliary})
        seen.insert(stream_hash(7, {m, i, tag}));
  EXPECT_EQ(seen.size(), 64u);
}

TEST(RandomStream, NeighbouringStreamsUncorrelated) {
  auto a = derive_stream(3, {1, 1, StreamTag::Embedding});
  auto b = derive_stream(3, {1, 2, StreamTag::Embedding});
  const int n = 100000;
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (int k = 0; k < n; ++k) {
    const double x = a.uniform(), y = b.uniform();
    sa += x; sb += y; sab += x * y; saa += x * x; sbb += y * y;
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
  EXPECT_LT(std::abs(corr), 0.01);
}

TEST(RandomStream, UniformRanges) {
  RandomStream s(1);
  for (int k = 0; k < 100000; ++k) {
    const double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = s.uniform_pos();
    ASSERT_GT(v, 0.0);
    ASSERT_LE(v, 1.0);
    ASSERT_LT(s.below(7), 7u);
  }
}

TEST(RandomStream, PoissonMoments) {
  RandomStream s(9);
  for (double mean : {0.3, 5.0, 40.0}) {
    RunningMoments m;
    for (int k = 0; k < 200000; ++k) m.add(static_cast<double>(s.poisson(mean)));
    EXPECT_NEAR(m.mean(), mean, 4 * std::sqrt(mean / 200000));
    EXPECT_NEAR(m.variance(), mean, 0.02 * mean + 0.01);
  }
}

TEST(LazyPoissonField, CountsInAreaTwo) {
  // 10^4 independent fields, one rectangle of area 2 each.
  FieldGeometry geom{0.05, 1.0, 1.0, 100.0};
  RunningMoments m;
  for (int key = 0; key < 10000; ++key) {
    LazyPoissonField f(static_cast<std::uint64_t>(key) + 1, {1, 1, StreamTag::Embedding}, geom);
    m.add(static_cast<double>(f.field_points({0.1, 0.6, 0.5, 4.5}).size()));
  }
  EXPECT_GE(m.mean(), 1.97);
  EXPECT_LE(m.mean(), 2.03);
  EXPECT_GE(m.variance(), 1.9);
  EXPECT_LE(m.variance(), 2.1);
}

TEST(LazyPoissonField, QueryOrderIrrelevant) {
  FieldGeometry geom{0.05, 1.0, 1.0, 50.0};
  LazyPoissonField a(5, {2, 1, StreamTag::Embedding}, geom);
  LazyPoissonField b(5, {2, 1, StreamTag::Embedding}, geom);
  const auto late = b.field_points({0.5, 1.0, 0.0, 20.0});
  const auto all_a = a.field_points({0.0, 1.0, 0.0, 20.0});
  const auto all_b = b.field_points({0.0, 1.0, 0.0, 20.0});
  ASSERT_EQ(all_a.size(), all_b.size());
  for (std::size_t k = 0; k < all_a.size(); ++k) {
    EXPECT_EQ(all_a[k].time, all_b[k].time);
    EXPECT_EQ(all_a[k].height, all_b[k].height);
    EXPECT_EQ(all_a[k].id, all_b[k].id);
  }
  std::size_t tail = 0;
  for (const auto& p : all_a) tail += p.time >= 0.5;
  EXPECT_EQ(tail, late.size());
}

TEST(LazyPoissonField, FirstBelowMatchesScan) {
  FieldGeometry geom{0.05, 1.0, 1.0, 50.0};
  LazyPoissonField f(11, {1, 3, StreamTag::Embedding}, geom);
  const double level = 3.7;
  const auto pts = f.field_points({0.0, 1.0, 0.0, level});
  auto hit = f.first_below(0.2, 1.0, level);
  std::optional<FieldPoint> expect;
  for (const auto& p : pts) {
    if (p.time > 0.2) {
      expect = p;
      break;
    }
  }
  ASSERT_EQ(hit.has_value(), expect.has_value());
  if (hit) EXPECT_EQ(hit->id, expect->id);
}

TEST(LazyPoissonField, RectOutsideThrows) {
  FieldGeometry geom{0.05, 1.0, 1.0, 10.0};
  LazyPoissonField f(1, {1, 1, StreamTag::Embedding}, geom);
  EXPECT_THROW(f.field_points({0.0, 2.0, 0.0, 1.0}), Error);
}

TEST(Routing, UniformOverOtherReplicas) {
  const int M = 5, n = 100000;
  std::vector<int> hits(M + 1, 0);
  for (int k = 0; k < n; ++k) {
    const int v = routing_mark(RoutingMark(PointId{99, k, 0, k % 7}), 2, M, 3);
    ASSERT_GE(v, 1);
    ASSERT_LE(v, M);
    ASSERT_NE(v, 3);
    ++hits[v];
  }
  for (int v = 1; v <= M; ++v) {
    if (v == 3) continue;
    const double f = static_cast<double>(hits[v]) / n;
    EXPECT_GE(f, 0.245);
    EXPECT_LE(f, 0.255);
  }
}

TEST(Routing, MarksAreFunctionsOfThePoint) {
  const RoutingMark m(PointId{5, 1, 2, 3});
  EXPECT_EQ(routing_mark(m, 1, 7, 2), routing_mark(m, 1, 7, 2));
  EXPECT_EQ(routing_mark(m, 1, 2, 2), 1);
  EXPECT_THROW(routing_mark(m, 1, 1, 1), Error);
}
