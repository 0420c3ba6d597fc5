#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nqd/dependence.hpp"
#include "nqd/oracles.hpp"

using namespace nqd;

namespace {

DiscreteJoint two_by_two(double p00, double p01, double p10, double p11) {
  return DiscreteJoint(2, {0, 0, 0, 1, 1, 0, 1, 1}, {p00, p01, p10, p11});
}

// Brute-force quadrant gap maximum, one query per grid point.
double brute_worst_gap(const DiscreteJoint& j) {
  double worst = 0.0;
  for (std::size_t a = 0; a < j.dims(); ++a) {
    for (std::size_t b = a + 1; b < j.dims(); ++b) {
      for (double x : j.support(a)) {
        for (double y : j.support(b)) worst = std::max(worst, quadrant_gap(j, a, b, x, y));
      }
    }
  }
  return worst;
}

std::vector<std::vector<double>> dense_cholesky(const std::vector<double>& band, std::size_t n) {
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0)), l = a;
  for (std::size_t i = 0; i < n; ++i) {
    a[i][i] = 1.0;
    for (std::size_t j = 1; j <= band.size() && i + j < n; ++j) a[i][i + j] = a[i + j][i] = band[j - 1];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      l[i][j] = i == j ? std::sqrt(s) : s / l[j][j];
    }
  }
  return l;
}

}  // namespace

TEST(NqdCheck, Examples) {
  const auto product = DiscreteJoint(2, {0, 0, 0, 1, 1, 0, 1, 1}, {0.06, 0.14, 0.24, 0.56});
  const auto prod = nqd_check_exact(product);
  EXPECT_TRUE(prod.pass);
  EXPECT_NEAR(prod.worst_gap, 0.0, 1e-15);

  const auto neg = two_by_two(0.1, 0.4, 0.4, 0.1);
  EXPECT_TRUE(nqd_check_exact(neg).pass);
  EXPECT_NEAR(quadrant_gap(neg, 0, 1, 0, 0), -0.15, 1e-15);

  const auto pos = two_by_two(0.4, 0.1, 0.1, 0.4);
  const auto bad = nqd_check_exact(pos);
  EXPECT_FALSE(bad.pass);
  EXPECT_NEAR(bad.worst_gap, 0.15, 1e-15);
  EXPECT_EQ(bad.x, 0.0);
  EXPECT_EQ(bad.y, 0.0);
}

TEST(NqdCheck, AgreesWithBruteForce) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    // Arbitrary (not necessarily NQD) pmf on a 3x3x2 grid.
    std::vector<double> pts, pr;
    double total = 0.0;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int c = 0; c < 2; ++c) {
          pts.insert(pts.end(), {double(a), double(b) * 0.5, double(c) + 2});
          pr.push_back(u(gen));
          total += pr.back();
        }
      }
    }
    for (auto& p : pr) p /= total;
    const DiscreteJoint j(3, pts, pr);
    EXPECT_NEAR(nqd_check_exact(j).worst_gap, brute_worst_gap(j), 1e-14);
  }
}

TEST(NqdCheck, CorpusPasses) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto j = make_antithetic_mixture(seed, 2 + seed % 4);
    ASSERT_TRUE(nqd_check_exact(j).pass) << seed;
  }
}

TEST(DiscreteJoint, Validation) {
  EXPECT_THROW(DiscreteJoint(2, {0, 0, 1, 1}, {0.5, 0.6}), ValidationError);
  EXPECT_THROW(DiscreteJoint(2, {0, 0, 1, 1}, {-0.5, 1.5}), ValidationError);
  EXPECT_THROW(DiscreteJoint(2, {0, 0, 1}, {0.5, 0.5}), ValidationError);
  EXPECT_NO_THROW(DiscreteJoint(2, {0, 0, 1, 1}, {0.5, 0.5 + 5e-13}));
  std::vector<double> pts(2 * (DiscreteJoint::kMaxAtoms + 1), 0.0);
  std::vector<double> pr(DiscreteJoint::kMaxAtoms + 1, 1.0 / double(DiscreteJoint::kMaxAtoms + 1));
  EXPECT_THROW(DiscreteJoint(2, pts, pr), ValidationError);
}

TEST(Covariance, Examples) {
  const auto neg = two_by_two(0.1, 0.4, 0.4, 0.1);
  auto id = [](double x) { return x; };
  EXPECT_NEAR(covariance_sign_oracle(neg, 0, 1, id, id), -0.15, 1e-15);
  const auto product = DiscreteJoint(2, {0, 0, 0, 1, 1, 0, 1, 1}, {0.06, 0.14, 0.24, 0.56});
  EXPECT_NEAR(covariance_sign_oracle(product, 0, 1, [](double x) { return std::exp(x); }, id), 0.0, 1e-15);
  EXPECT_THROW(covariance_sign_oracle(neg, 0, 1, [](double x) { return -x; }, id), ValidationError);

  const auto anti = antithetic_uniform_pair(100);
  const TruncationWindow w(0.0, 1.0);
  auto g = [&](double x) { return g_trunc(x, w); };
  EXPECT_LE(covariance_sign_oracle(anti, 0, 1, g, g), 0.0);
}

TEST(Covariance, NonpositiveOnCorpus) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto j = make_antithetic_mixture(seed, 3);
    for (int t = 0; t < 20; ++t) {
      const TruncationWindow wf(u(gen), u(gen) + 0.1), wg(u(gen), u(gen) + 0.1);
      const double cov = covariance_sign_oracle(
          j, 0, 2, [&](double x) { return g_trunc(x, wf); }, [&](double x) { return std::pow(x, 1.5) + g_trunc(x, wg); });
      ASSERT_LE(cov, 1e-14);
    }
  }
}

TEST(MomentInequality, AntitheticPair) {
  const auto anti = antithetic_uniform_pair(100);
  const auto v = moment_inequality_exact(anti, TruncationWindow(0.0, 1.0), BlockLayout::singletons(2));
  EXPECT_NEAR(v.lhs, 0.0, 1e-15);
  EXPECT_NEAR(v.rhs, 1.0 / 6.0, 1e-12);
}

TEST(MomentInequality, IndependentBlocksEqual) {
  const auto product = DiscreteJoint(2, {0, 0, 0, 1, 1, 0, 1, 1}, {0.06, 0.14, 0.24, 0.56});
  const auto v = moment_inequality_exact(product, TruncationWindow(0.0, 1.0), BlockLayout::singletons(2));
  EXPECT_NEAR(v.lhs, v.rhs, 1e-15);
}

TEST(MomentInequality, GapIsTwiceCrossCovariance) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto j = make_antithetic_mixture(seed, 3);
    const TruncationWindow w(0.3, 1.5);
    BlockLayout blocks;
    blocks.bounds = {0, 1, 3};
    blocks.count = 2;
    const auto v = moment_inequality_exact(j, w, blocks);
    auto g = [&](double x) { return g_trunc(x, w); };
    const double cross = covariance_sign_oracle(j, 0, 1, g, g) + covariance_sign_oracle(j, 0, 2, g, g);
    EXPECT_LE(v.lhs, v.rhs + 1e-14);
    EXPECT_NEAR(v.lhs - v.rhs, 2.0 * cross, 1e-13);
  }
}

TEST(MomentInequality, LayoutValidation) {
  const auto j = make_antithetic_mixture(1, 3);
  BlockLayout b;
  b.bounds = {0, 2, 4};
  b.count = 2;
  EXPECT_THROW(moment_inequality_exact(j, TruncationWindow(0, 1), b), ValidationError);
  b.bounds = {0, 2, 2};
  EXPECT_THROW(moment_inequality_exact(j, TruncationWindow(0, 1), b), ValidationError);
}

TEST(BandedCholesky, MatchesDense) {
  const std::vector<double> band{-0.3, -0.1};
  const BandedCholesky chol(band, 60);
  const auto dense = dense_cholesky(band, 60);
  for (std::size_t i = 0; i < 60; ++i) {
    for (std::size_t j = (i >= 2 ? i - 2 : 0); j <= i; ++j) EXPECT_NEAR(chol.at(i, j), dense[i][j], 1e-14);
  }
  EXPECT_LT(chol.stored_rows(), 60u);
}

TEST(BandedCholesky, BoundaryBandIsDefinite) {
  EXPECT_NO_THROW(BandedCholesky(std::vector<double>{-0.5}, 100000));
}

TEST(Dependence, RejectsNonPsdOrPositive) {
  EXPECT_THROW(DependenceModel::gaussian_copula(Marginal::uniform(0, 1), {-0.6}), ValidationError);
  EXPECT_THROW(DependenceModel::gaussian_copula(Marginal::uniform(0, 1), {0.2}), ValidationError);
  EXPECT_THROW(DependenceModel::gaussian_copula(Marginal::uniform(0, 1), {-0.4, -0.4}), ValidationError);
  EXPECT_NO_THROW(DependenceModel::gaussian_copula(Marginal::uniform(0, 1), {-0.5}));
}

TEST(Generate, IidParetoMean) {
  const auto batch = generate(DependenceModel::iid(Marginal::pareto(1.8, 1.0)), 0, 1, 1000);
  double mean = 0.0, sq = 0.0;
  for (double x : batch.values) mean += x;
  mean /= 1000.0;
  for (double x : batch.values) sq += (x - mean) * (x - mean);
  const double se = std::sqrt(sq / 999.0 / 1000.0);
  EXPECT_NEAR(mean, 2.25, 3.0 * se);
  EXPECT_DOUBLE_EQ(batch.means[0], 2.25);
}

TEST(Generate, AntitheticPairsExact) {
  const auto batch = generate(DependenceModel::antithetic_pairs(Marginal::uniform(0, 1)), 3, 4, 101);
  for (std::uint64_t p = 0; p < 4; ++p) {
    const auto path = batch.path(p);
    for (std::size_t i = 0; i + 1 < path.size(); i += 2) ASSERT_EQ(path[i + 1], 1.0 - path[i]);
  }
}

TEST(Generate, ZeroBandIsIidTransform) {
  const auto m = Marginal::pareto(1.8, 1.0);
  const auto batch = generate(DependenceModel::gaussian_copula(m, {0.0}), 9, 2, 50);
  for (std::uint64_t p = 0; p < 2; ++p) {
    const CounterStream rng(9, p);
    for (std::uint64_t i = 0; i < 50; ++i) {
      EXPECT_EQ(batch.path(p)[i], m.survival_quantile(0.5 * std::erfc(rng.normal(i) * M_SQRT1_2)));
    }
  }
}

TEST(Generate, DeterministicAcrossThreads) {
  for (const auto& model : {DependenceModel::iid(Marginal::exponential(1.0)),
                            DependenceModel::gaussian_copula(Marginal::pareto(1.5), {-0.3, -0.1}),
                            DependenceModel::antithetic_pairs(Marginal::uniform(0, 2)),
                            DependenceModel::discrete_joint(make_antithetic_mixture(2, 3))}) {
    const auto a = generate(model, 42, 16, 500, 1);
    const auto b = generate(model, 42, 16, 500, 4);
    ASSERT_EQ(a.values, b.values) << model.describe();
    const auto c = generate(model, 43, 16, 500, 1);
    ASSERT_NE(a.values, c.values);
  }
}

TEST(Generate, DiscreteJointMeansExact) {
  const auto joint = make_antithetic_mixture(4, 3);
  const auto batch = generate(DependenceModel::discrete_joint(joint), 1, 1, 7);
  for (std::uint64_t k = 1; k <= 7; ++k) EXPECT_DOUBLE_EQ(batch.means[k - 1], joint.marginal_mean((k - 1) % 3));
}

TEST(Generate, GaussianCopulaEmpiricalNqd) {
  const std::uint64_t n = 100000;
  const auto batch = generate(DependenceModel::gaussian_copula(Marginal::uniform(0, 1), {-0.5}), 17, n, 2);
  const double band = std::sqrt(std::log(2.0 / 0.05) / (2.0 * n));
  double at_center = 0.0;
  for (int a = 1; a < 10; ++a) {
    for (int b = 1; b < 10; ++b) {
      const double u = a / 10.0, v = b / 10.0;
      std::uint64_t hits = 0;
      for (std::uint64_t p = 0; p < n; ++p) hits += batch.path(p)[0] <= u && batch.path(p)[1] <= v;
      const double c = double(hits) / double(n);
      EXPECT_LE(c, u * v + 3.0 * band) << u << "," << v;
      if (a == 5 && b == 5) at_center = c;
    }
  }
  EXPECT_LT(at_center, 0.25 - 3.0 * band);
}
