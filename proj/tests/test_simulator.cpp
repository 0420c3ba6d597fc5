#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "nqd/oracles.hpp"
#include "nqd/simulator.hpp"

using namespace nqd;

namespace {

SimConfig small(DependenceModel model, std::uint64_t horizon = 20000, std::uint64_t paths = 40) {
  SimConfig c;
  c.model = std::move(model);
  c.paths = paths;
  c.horizon = horizon;
  return c;
}

std::map<std::pair<std::uint64_t, NormalizerKind>, QuantileRow> by_key(const TrajectoryStats& st) {
  std::map<std::pair<std::uint64_t, NormalizerKind>, QuantileRow> out;
  for (const auto& q : st.quantiles) out[{q.n, q.normalizer}] = q;
  return out;
}

}  // namespace

TEST(Simulator, QuantileMatchesLinearInterpolation) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.9), 3.7);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.0), 1.0);
}

TEST(Simulator, DefaultCheckpointsAreQuarterDecades) {
  const auto cps = default_checkpoints(1000000);
  ASSERT_EQ(cps.size(), 13u);
  EXPECT_EQ(cps.front(), 1000u);
  EXPECT_EQ(cps[1], 1778u);
  EXPECT_EQ(cps[4], 10000u);
  EXPECT_EQ(cps.back(), 1000000u);
  EXPECT_EQ(default_checkpoints(50), (std::vector<std::uint64_t>{10, 18, 32}));
}

TEST(Simulator, DegenerateMarginalHasNoDeviation) {
  const auto st = simulate(small(DependenceModel::iid(Marginal::degenerate(3.0)), 5000, 8));
  ASSERT_FALSE(st.quantiles.empty());
  for (const auto& q : st.quantiles) {
    EXPECT_EQ(q.median, 0.0);
    EXPECT_EQ(q.max, 0.0);
  }
  for (const auto& e : st.events) EXPECT_EQ(e.event_freq, 0.0);
}

TEST(Simulator, BnDominatesPlainExactly) {
  const auto cfg = small(DependenceModel::iid(Marginal::pareto(1.8, 1.0)));
  const auto st = simulate(cfg);
  const auto rows = by_key(st);
  for (std::uint64_t n : cfg.resolved_checkpoints()) {
    const auto& bn = rows.at({n, NormalizerKind::Bn});
    const auto& plain = rows.at({n, NormalizerKind::Plain});
    const auto& ref = rows.at({n, NormalizerKind::Reference});
    EXPECT_LE(bn.median, plain.median);
    EXPECT_LE(bn.q90, plain.q90);
    const double factor = std::pow(loglog_floor(static_cast<double>(n)), 2.0 * (cfg.fam.p - 1.0) / cfg.fam.p);
    EXPECT_NEAR(plain.median / bn.median, factor, 1e-12 * factor);
    EXPECT_NEAR(plain.max / bn.max, factor, 1e-12 * factor);
    EXPECT_EQ(ref.median, plain.median);
  }
}

TEST(Simulator, ThreadCountDoesNotChangeOutput) {
  auto cfg = small(DependenceModel::gaussian_copula(Marginal::pareto(1.8, 1.0), {-0.25}), 10000, 24);
  cfg.threads = 1;
  const auto one = simulate(cfg);
  cfg.threads = 3;
  const auto three = simulate(cfg);
  EXPECT_EQ(quantiles_csv(one), quantiles_csv(three));
  EXPECT_EQ(events_csv(one), events_csv(three));
}

TEST(Simulator, SeedChangesOutput) {
  auto cfg = small(DependenceModel::iid(Marginal::pareto(1.8, 1.0)), 5000, 10);
  const auto a = quantiles_csv(simulate(cfg));
  cfg.seed = 1;
  EXPECT_NE(a, quantiles_csv(simulate(cfg)));
}

TEST(Simulator, EventFrequenciesShrinkWithEpsilon) {
  auto cfg = small(DependenceModel::iid(Marginal::pareto(1.8, 1.0)), 20000, 60);
  cfg.epsilons = {0.05, 0.2, 1.0, 5.0};
  const auto st = simulate(cfg);
  std::map<std::uint64_t, std::vector<double>> by_k;
  for (const auto& e : st.events) {
    EXPECT_GE(e.event_freq, 0.0);
    EXPECT_LE(e.event_freq, 1.0);
    by_k[e.k].push_back(e.event_freq);
  }
  ASSERT_FALSE(by_k.empty());
  for (const auto& [k, f] : by_k) {
    ASSERT_EQ(f.size(), cfg.epsilons.size());
    for (std::size_t i = 1; i < f.size(); ++i) EXPECT_LE(f[i], f[i - 1]) << "k=" << k;
  }
}

TEST(Simulator, CompareRowsFollowQuantiles) {
  const auto cfg = small(DependenceModel::iid(Marginal::pareto(1.8, 1.0)), 5000, 12);
  const auto rows = compare_normalizers(cfg);
  const auto q = by_key(simulate(cfg));
  ASSERT_EQ(rows.size(), cfg.resolved_checkpoints().size());
  for (const auto& r : rows) {
    EXPECT_EQ(r.b_n, q.at({r.n, NormalizerKind::Bn}).median);
    EXPECT_EQ(r.plain, q.at({r.n, NormalizerKind::Plain}).median);
    EXPECT_EQ(r.reference, r.plain);
  }
  EXPECT_EQ(comparison_csv(rows).substr(0, 33), "checkpoint_n,b_n,plain,reference\n");
}

TEST(Simulator, RejectsBadConfig) {
  auto cfg = small(DependenceModel::iid(Marginal::pareto(1.8, 1.0)), 100, 10);
  cfg.checkpoints = {50, 200};
  EXPECT_THROW(simulate(cfg), ValidationError);
  cfg.checkpoints = {50, 40};
  EXPECT_THROW(simulate(cfg), ValidationError);
  cfg.checkpoints = {};
  cfg.paths = 1;
  EXPECT_THROW(simulate(cfg), ValidationError);
  cfg.paths = 10;
  cfg.epsilons = {0.0};
  EXPECT_THROW(simulate(cfg), ValidationError);
}

TEST(MomentInequalityMonteCarlo, AgreesWithExactOracle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto joint = make_antithetic_mixture(seed, 4);
    SimConfig cfg;
    cfg.model = DependenceModel::discrete_joint(joint);
    cfg.paths = 20000;
    cfg.seed = seed;
    const TruncationWindow window(0.5, 1.0);
    const auto layout = BlockLayout::singletons(4);
    const auto exact = moment_inequality_exact(joint, window, layout);
    const auto mc = empirical_moment_inequality(cfg, window, 2.0, layout);
    EXPECT_NEAR(mc.lhs, exact.lhs, 4.0 * mc.lhs_se + 1e-12) << "seed " << seed;
    EXPECT_NEAR(mc.rhs, exact.rhs, 4.0 * mc.rhs_se + 1e-12) << "seed " << seed;
    EXPECT_LE(exact.lhs, exact.rhs + 1e-12);
  }
}

TEST(MomentInequalityMonteCarlo, IndependentSingletonsGiveUnitRatio) {
  SimConfig cfg;
  cfg.model = DependenceModel::iid(Marginal::exponential(1.0));
  cfg.paths = 20000;
  const auto mc = empirical_moment_inequality(cfg, TruncationWindow(0.0, 2.0), 2.0, BlockLayout::singletons(6));
  EXPECT_GT(mc.ratio_se, 0.0);
  EXPECT_NEAR(mc.ratio, 1.0, 4.0 * mc.ratio_se);
}

TEST(MomentInequalityMonteCarlo, AntitheticPairsCancel) {
  SimConfig cfg;
  cfg.model = DependenceModel::antithetic_pairs(Marginal::uniform(0.0, 1.0));
  cfg.paths = 500;
  const auto mc = empirical_moment_inequality(cfg, TruncationWindow(0.0, 1.0), 2.0, BlockLayout::singletons(2));
  EXPECT_NEAR(mc.lhs, 0.0, 1e-24);
  EXPECT_NEAR(mc.rhs, 1.0 / 6.0, 4.0 * mc.rhs_se);
}
