#include <gtest/gtest.h>

#include <cmath>
#include <bit>
#include <random>

#include "nqd/scaling.hpp"

using namespace nqd;

TEST(LogFloor, ClampsBelowE) {
  EXPECT_DOUBLE_EQ(log_floor(0.5), 1.0);
  EXPECT_DOUBLE_EQ(log_floor(-3.0), 1.0);
  EXPECT_DOUBLE_EQ(log_floor(std::exp(2.0)), 2.0);
  EXPECT_NEAR(log_floor(10.0), 2.302585092994046, 1e-15);
}

TEST(LogFloor, LogLogClamp) {
  EXPECT_DOUBLE_EQ(loglog_floor(10.0), 1.0);
  EXPECT_DOUBLE_EQ(loglog_floor(std::exp(kE)), 1.0);
  EXPECT_NEAR(loglog_floor(std::exp(std::exp(2.0))), 2.0, 1e-14);
}

TEST(GTrunc, Examples) {
  EXPECT_DOUBLE_EQ(g_trunc(3.0, TruncationWindow(0.0, 5.0)), 3.0);
  EXPECT_DOUBLE_EQ(g_trunc(10.0, TruncationWindow(2.0, 5.0)), 5.0);
  EXPECT_DOUBLE_EQ(g_trunc(1.0, TruncationWindow(2.0, 5.0)), 0.0);
}

TEST(GTrunc, RangeAndMonotone) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int w = 0; w < 200; ++w) {
    const TruncationWindow win(std::fabs(u(gen)), std::fabs(u(gen)) + 1e-3);
    std::vector<double> xs(100);
    for (auto& x : xs) x = u(gen);
    std::sort(xs.begin(), xs.end());
    double prev = -1.0;
    for (double x : xs) {
      const double g = g_trunc(x, win);
      EXPECT_GE(g, 0.0);
      EXPECT_LE(g, win.t_len);
      EXPECT_GE(g, prev);
      prev = g;
    }
  }
}

TEST(GTrunc, RejectsBadWindow) {
  EXPECT_THROW(TruncationWindow(-1.0, 1.0), ValidationError);
  EXPECT_THROW(TruncationWindow(0.0, 0.0), ValidationError);
}

TEST(LambdaCapital, Examples) {
  const auto unit = MomentInequalityProfile::unit();
  EXPECT_EQ(lambda_capital(1, unit), 1.0);
  EXPECT_EQ(lambda_capital(4, unit), 3.0);
  EXPECT_EQ(lambda_capital(8, unit), 4.0);
  EXPECT_THROW(lambda_capital(0, unit), ValidationError);
}

TEST(LambdaCapital, TableMatchesRecursionAndBitLength) {
  const LambdaTable table(MomentInequalityProfile::unit());
  for (std::uint64_t n = 1; n <= 100000; ++n) {
    const double v = table(n);
    ASSERT_EQ(v, lambda_capital(n, MomentInequalityProfile::unit())) << n;
    ASSERT_EQ(v, static_cast<double>(std::bit_width(n))) << n;
  }
  EXPECT_EQ(table.at_real(std::ldexp(1.0, 80)), 81.0);
}

TEST(LambdaCapital, NondecreasingForGrowingLambda) {
  const auto prof = MomentInequalityProfile::from_rule(2.0, [](double n) { return 1.0 + std::log(n); });
  const LambdaTable table(prof);
  double prev = 0.0;
  for (std::uint64_t n = 1; n <= 20000; ++n) {
    const double v = table(n);
    ASSERT_GE(v, prev);
    ASSERT_NEAR(v, lambda_capital(n, prof), 1e-12 * v);
    prev = v;
  }
}

TEST(ScalingFamily, Examples) {
  const auto fam = ScalingFamily::make(1.5);
  EXPECT_NEAR(fam.s, 1.0 / 3.0, 1e-16);
  EXPECT_DOUBLE_EQ(fam.normalizer_b(1.0), 1.0);
  EXPECT_NEAR(fam.normalizer_b(10.0), std::pow(10.0, 2.0 / 3.0), 1e-13);
  const double n = std::ceil(std::exp(std::exp(2.0)));
  const double llog = std::log(std::log(n));
  EXPECT_NEAR(fam.normalizer_b(n), std::pow(n, 2.0 / 3.0) * std::pow(llog, 2.0 / 3.0), 1e-12 * fam.normalizer_b(n));
  EXPECT_NEAR(fam.threshold_c(10.0), std::pow(10.0, 2.0 / 3.0) / std::pow(std::log(10.0), 4.0), 1e-14);
  EXPECT_NEAR(fam.threshold_c(10.0), 0.16514, 1e-4);
  EXPECT_NEAR(fam.threshold_d(10.0), 4.6415888336127775, 1e-13);
  EXPECT_DOUBLE_EQ(fam.weight_a(4.0), 0.25);
}

TEST(ScalingFamily, OrderingAndMonotonicity) {
  for (double p : {1.1, 1.3, 1.5, 1.7, 1.9}) {
    const auto fam = ScalingFamily::make(p);
    double prev_b = 0.0;
    std::vector<double> grid;
    for (double n = 1; n < 1e6; n = std::ceil(n * 1.01)) grid.push_back(n);
    for (double bp : {kE, std::exp(kE), std::exp(std::exp(2.0))}) {
      grid.push_back(std::floor(bp));
      grid.push_back(std::ceil(bp));
    }
    std::sort(grid.begin(), grid.end());
    for (double n : grid) {
      const double c = fam.threshold_c(n), d = fam.threshold_d(n), b = fam.normalizer_b(n);
      EXPECT_LE(c, d * (1 + 1e-15)) << n;
      EXPECT_LE(d, std::pow(n, 1.0 / p) * (1 + 1e-15)) << n;
      EXPECT_GE(b, prev_b) << n;
      prev_b = b;
    }
  }
}

TEST(ScalingFamily, RejectsBadParameters) {
  EXPECT_THROW(ScalingFamily::make(2.0), ValidationError);
  EXPECT_THROW(ScalingFamily::make(1.5, 1.4), ValidationError);
  EXPECT_THROW(ScalingFamily::make(1.5, 2.0, 1.0), ValidationError);
}

TEST(Blocks, Examples) {
  EXPECT_EQ(block_l(1, 1.0 / 3.0), 2u);
  EXPECT_EQ(block_l(8, 1.0 / 3.0), 7u);
  EXPECT_EQ(block_l(27, 1.0 / 3.0), 20u);
  EXPECT_EQ(block_m(1), 2u);
  EXPECT_EQ(block_m(10), 1024u);
  EXPECT_THROW(block_m(63), NumericError);
  EXPECT_THROW(block_l(100000000, 0.5), NumericError);
}

TEST(Blocks, PhiExamples) {
  EXPECT_EQ(phi_s(2, 1.0 / 3.0), 1u);
  EXPECT_EQ(phi_s(20, 1.0 / 3.0), 26u);
  EXPECT_EQ(phi_s(3, 0.5), 1u);
}

TEST(Blocks, PhiIsSmallestCoveringIndex) {
  for (double s : {1.0 / 3.0, 0.5}) {
    for (std::uint64_t n = 2; n <= 20000; ++n) {
      const auto k = phi_s(n, s);
      ASSERT_GE(block_l(k + 1, s), n) << n;
      if (k > 1) {
        ASSERT_LT(block_l(k, s), n) << n;
      }
    }
  }
}

TEST(Blocks, DistinctRunsCoverIndices) {
  const double s = 1.0 / 3.0;
  const auto runs = distinct_blocks(s, 100000);
  ASSERT_FALSE(runs.empty());
  EXPECT_EQ(runs.front().k_first, 1u);
  EXPECT_GE(runs.back().value, 100000u);
  for (std::size_t q = 0; q < runs.size(); ++q) {
    for (auto k = runs[q].k_first; k <= runs[q].k_last; ++k) ASSERT_EQ(block_l(k, s), runs[q].value);
    if (q > 0) {
      ASSERT_EQ(runs[q].k_first, runs[q - 1].k_last + 1);
      ASSERT_GT(runs[q].value, runs[q - 1].value);
    }
  }
}

TEST(Asymptotic, PrefixExamples) {
  const auto rows = asymptotic_ratio(AsymptoticKind::PowerLogPrefix, {0.0, 0.5, 0.0}, {10000});
  EXPECT_NEAR(rows[0].lhs, 198.5446, 1e-3);
  EXPECT_NEAR(rows[0].rhs, 200.0, 1e-12);
  EXPECT_NEAR(rows[0].ratio, 0.9927, 1e-4);
  for (const auto& r : asymptotic_ratio(AsymptoticKind::PowerLogPrefix, {0.0, 0.0, 0.0}, {1, 10, 1000})) {
    EXPECT_DOUBLE_EQ(r.ratio, 1.0);
  }
}

TEST(Asymptotic, TrendTowardOne) {
  const std::vector<std::uint64_t> grid{100, 1000, 100000};
  struct Case {
    AsymptoticKind kind;
    AsymptoticParams prm;
  };
  for (const auto& c : {Case{AsymptoticKind::PowerLogPrefix, {2.0, 0.5, 0}},
                        Case{AsymptoticKind::PowerLogLogPrefix, {1.0, 0.3, 0}},
                        Case{AsymptoticKind::PowerLogTail, {2.0, 1.5, 0}},
                        Case{AsymptoticKind::PowerLogLogTail, {1.0, 1.8, 0}}}) {
    const auto rows = asymptotic_ratio(c.kind, c.prm, grid);
    EXPECT_LT(std::fabs(rows.back().ratio - 1.0), std::fabs(rows.front().ratio - 1.0));
  }
}

TEST(Asymptotic, BlockRatioNearOne) {
  const auto rows = asymptotic_ratio(AsymptoticKind::BlockRatio, {0, 0, 1.0 / 3.0}, {1000});
  EXPECT_GE(rows[0].ratio, 1.0);
  EXPECT_LE(rows[0].ratio, 1.05);
}

TEST(Asymptotic, DomainErrors) {
  EXPECT_THROW(asymptotic_ratio(AsymptoticKind::PowerLogPrefix, {0, 1.0, 0}, {10}), ValidationError);
  EXPECT_THROW(asymptotic_ratio(AsymptoticKind::PowerLogTail, {0, 1.0, 0}, {10}), ValidationError);
  EXPECT_THROW(asymptotic_ratio(AsymptoticKind::PowerLogPrefix, {0, 0.5, 0}, {10, 5}), ValidationError);
}
