#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "expertad/error.hpp"
#include "expertad//flops.hpp"
#include "expertad/grad_check.hpp"
#include "expertad/random_stream.hpp"
#include "expertad/sparse_attention.hpp"

using namespace expertad;

TEST(RandomStream, SameSeedAndIdRepeats) {
  auto a = seeded_stream(7, "a");
  auto b = seeded_stream(7, "a");
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_normal(), b.next_normal());
}

TEST(RandomStream, DistinctIdsDiffer) {
  auto a = seeded_stream(7, "a");
  auto b = seeded_stream(7, "b");
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_normal() == b.next_normal();
  EXPECT_EQ(same, 0);
}

TEST(RandomStream, NormalMeanNearZero) {
  auto rng = seeded_stream(11, "mean");
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(RandomStream, CounterAccessIsOrderFree) {
  const auto rng = seeded_stream(3, "x");
  const double late = rng.normal(50);
  auto seq = seeded_stream(3, "x");
  for (int i = 0; i < 50; ++i) seq.next_normal();
  EXPECT_EQ(seq.next_normal(), late);
}

TEST(RandomStream, ForksAreIndependentOfParentCursor) {
  auto a = seeded_stream(5, "p");
  auto b = seeded_stream(5, "p");
  b.next_normal();
  EXPECT_EQ(a.fork("c").next_bits(), b.fork("c").next_bits());
  EXPECT_NE(a.fork(std::uint64_t{1}).next_bits(), a.fork(std::uint64_t{2}).next_bits());
}

TEST(RandomStream, PermutationIsAPermutation) {
  auto rng = seeded_stream(9, "perm");
  auto p = rng.permutation(50);
  std::vector<int> seen(50, 0);
  for (auto i : p) seen.at(i)++;
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(GradCheck, SquareCorrectGradientPasses) {
  const ScalarFn fn = [](std::span<const double> x) { return x[0] * x[0]; };
  const double point[] = {3.0};
  const double grad[] = {6.0};
  const auto r = check_gradient(fn, point, grad, 1e-5, 1e-6);
  EXPECT_TRUE(r.passed);
  EXPECT_LE(r.max_relative_error, 1e-8);
}

TEST(GradCheck, SquareWrongGradientFails) {
  const ScalarFn fn = [](std::span<const double> x) { return x[0] * x[0]; };
  const double point[] = {3.0};
  const double grad[] = {5.0};
  const auto r = check_gradient(fn, point, grad, 1e-5, 1e-4);
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.max_relative_error, 1.0 / 6.0, 1e-6);
}

TEST(GradCheck, SoftmaxDotMatchesAnalytic) {
  const std::vector<double> target = {0.3, -1.0, 2.0, 0.5};
  const ScalarFn fn = [&](std::span<const double> x) {
    double m = x[0];
    for (double v : x) m = std::max(m, v);
    double z = 0.0;
    for (double v : x) z += std::exp(v - m);
    double out = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) out += std::exp(x[i] - m) / z * target[i];
    return out;
  };
  const std::vector<double> x = {0.1, 0.7, -0.4, 1.2};
  double m = 1.2, z = 0.0;
  std::vector<double> p(4);
  for (int i = 0; i < 4; ++i) z += std::exp(x[i] - m);
  double pt = 0.0;
  for (int i = 0; i < 4; ++i) {
    p[i] = std::exp(x[i] - m) / z;
    pt += p[i] * target[i];
  }
  std::vector<double> g(4);
  for (int i = 0; i < 4; ++i) g[i] = p[i] * (target[i] - pt);
  EXPECT_TRUE(check_gradient(fn, x, g, 1e-5, 1e-5).passed);
}

TEST(GradCheck, CentralDifferenceErrorIsQuadraticInStep) {
  const ScalarFn fn = [](std::span<const double> x) { return x[0] * x[0] * x[0]; };
  const double point[] = {1.0};
  const double grad[] = {3.0};
  const double e1 = check_gradient(fn, point, grad, 1e-2, 1.0).max_relative_error;
  const double e2 = check_gradient(fn, point, grad, 5e-3, 1.0).max_relative_error;
  EXPECT_NEAR(e1 / e2, 4.0, 0.1);
}

TEST(GradCheck, NonFiniteNeverPasses) {
  const ScalarFn fn = [](std::span<const double> x) { return std::log(x[0]); };
  const double point[] = {0.0};
  const double grad[] = {0.0};
  const auto r = check_gradient(fn, point, grad, 1e-5, 1e9);
  EXPECT_FALSE(r.passed);
  EXPECT_FALSE(r.finite);
}

TEST(FlopLedger, SingleMatmul) {
  FlopTrace t;
  t.matmul("x", 2, 3, 4);
  const auto c = flop_ledger(t.records());
  EXPECT_EQ(c.multiply_adds, 24u);
  EXPECT_EQ(c.exponentials, 0u);
  EXPECT_EQ(c.total(), 48u);
}

TEST(FlopLedger, EmptyTraceIsZero) {
  FlopTrace t;
  EXPECT_EQ(flop_ledger(t.records()), FlopCount{});
}

TEST(FlopLedger, DenseAttentionScoreCount) {
  const auto f = analytic_attention_flops(AttentionPattern::dense(), 8, 8, 4, 1);
  EXPECT_EQ(f.at("score").multiply_adds, 256u);
  EXPECT_EQ(f.at("softmax").exponentials, 64u);

  FlopTrace t;
  Mat X = Mat::Ones(8, 4);
  AttentionProjections p{Mat::Identity(4, 4), Mat::Identity(4, 4), Mat::Identity(4, 4), Mat::Identity(4, 4),
                         RowVec::Zero(4)};
  sparse_mhca({X, X, X, 1}, AttentionPattern::dense(), p, &t);
  const auto by = flop_ledger_by_label(t.records());
  EXPECT_EQ(by.at("score").multiply_adds, 256u);
  EXPECT_EQ(by.at("softmax").exponentials, 64u);
}

TEST(FlopLedger, AdditiveOverConcatenation) {
  FlopTrace a, b;
  a.matmul("x", 2, 3, 4);
  a.softmax("s", 7);
  b.matmul("y", 5, 5, 5);
  b.softmax("s", 3);
  FlopTrace ab = a;
  ab.append(b);
  EXPECT_EQ(flop_ledger(ab.records()), flop_ledger(a.records()) + flop_ledger(b.records()));
}
