#include <gtest/gtest.h>

#include <sstream>

#include "nqd/config.hpp"

using namespace nqd;

namespace {

RunConfig from_text(const std::string& text) {
  std::istringstream in(text);
  return RunConfig::parse(in, "test.ini");
}

std::string error_of(const std::string& text) {
  try {
    from_text(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsApply) {
  const auto c = from_text("[marginal]\nlaw = pareto(alpha=1.8, xm=1)\n");
  EXPECT_DOUBLE_EQ(c.p, 1.5);
  EXPECT_DOUBLE_EQ(c.r, 2.0);
  EXPECT_DOUBLE_EQ(c.resolved_s(), 1.0 / 3.0);
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.dependence, DependenceKind::Iid);
  EXPECT_EQ(c.conditions.size(), 8u);
  EXPECT_EQ(c.marginal->to_string(), Marginal::pareto(1.8, 1.0).to_string());
}

TEST(Config, TopLevelMarginalAndComments) {
  const auto c = from_text(
      "# experiment\nmarginal = uniform(lo=0, hi=2)\n; note\n[scaling]\np = 1.2\n[simulate]\nseed = 7\n"
      "checkpoints = 10, 100\nepsilons = 0.25\n");
  EXPECT_DOUBLE_EQ(c.marginal->mean(), 1.0);
  EXPECT_DOUBLE_EQ(c.p, 1.2);
  EXPECT_DOUBLE_EQ(c.resolved_s(), 0.8 / 1.2);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.checkpoints, (std::vector<std::uint64_t>{10, 100}));
  EXPECT_EQ(c.epsilons, std::vector<double>{0.25});
}

TEST(Config, UnknownKeysAndSectionsRejected) {
  EXPECT_NE(error_of("marginal = degenerate(v=1)\n[scaling]\nq = 2\n").find("scaling.q"), std::string::npos);
  EXPECT_NE(error_of("marginal = degenerate(v=1)\n[plots]\nx = 1\n").find("[plots]"), std::string::npos);
  EXPECT_NE(error_of("horizon = 5\n").find("horizon"), std::string::npos);
}

TEST(Config, ErrorsNameTheKeyPath) {
  EXPECT_NE(error_of("marginal = degenerate(v=1)\n[scaling]\np = abc\n").find("scaling.p"), std::string::npos);
  EXPECT_NE(error_of("marginal = degenerate(v=1)\n[simulate]\npaths = 2.5\n").find("simulate.paths"),
            std::string::npos);
  EXPECT_NE(error_of("[marginal]\nlaw = cauchy(x=1)\n").find("marginal.law"), std::string::npos);
  EXPECT_NE(error_of("marginal = degenerate(v=1)\n[check]\nconditions = a, z\n").find("check.conditions"),
            std::string::npos);
  EXPECT_NE(error_of("marginal = degenerate(v=1)\n[scaling]\np = 2.5\n").find("scaling"), std::string::npos);
  EXPECT_NE(error_of("marginal = degenerate(v=1)\n[scaling]\np = 1.5\np = 1.6\n").find("line"), std::string::npos);
}

TEST(Config, MissingMarginalNamedAtUse) {
  const auto c = from_text("[scaling]\np = 1.5\n");
  try {
    (void)c.model();
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("marginal"), std::string::npos);
  }
}

TEST(Config, RoundTripThroughResolvedText) {
  const auto c = from_text(
      "marginal = two_point(v1=0.5, p1=0.3, v2=2)\n[dependence]\nkind = gaussian_copula\nband = -0.25, -0.05\n"
      "[scaling]\np = 1.8\nr = 3\n[simulate]\nseed = 11\npaths = 50\nhorizon = 5000\ncheckpoints = 100, 5000\n"
      "[check]\nconditions = c, f\ntolerance = 0.002\nexact_log2 = 14\n[output]\nprefix = run1\n");
  const std::string text = c.to_ini();
  const auto back = from_text(text);
  EXPECT_EQ(back.to_ini(), text);
  EXPECT_EQ(back.band, c.band);
  EXPECT_EQ(back.conditions, (std::vector<std::string>{"c", "f"}));
  EXPECT_EQ(back.series.exact_log2, 14);
  EXPECT_EQ(back.output_prefix, "run1");
  EXPECT_EQ(back.marginal->to_string(), c.marginal->to_string());
}

TEST(Config, RoundTripWithoutMarginal) {
  const auto c = from_text("[scaling]\np = 1.2\n");
  EXPECT_EQ(from_text(c.to_ini()).to_ini(), c.to_ini());
}

TEST(Config, SimConfigCarriesFields) {
  const auto c = from_text(
      "marginal = pareto(alpha=1.8, xm=1)\n[simulate]\nseed = 3\npaths = 20\nhorizon = 1000\n");
  const auto sc = c.sim(4);
  EXPECT_EQ(sc.seed, 3u);
  EXPECT_EQ(sc.paths, 20u);
  EXPECT_EQ(sc.horizon, 1000u);
  EXPECT_EQ(sc.threads, 4u);
  EXPECT_DOUBLE_EQ(sc.fam.p, 1.5);
}

TEST(Config, SimValidationCarriesSource) {
  const auto c = from_text("marginal = pareto(alpha=1.8, xm=1)\n[simulate]\nhorizon = 50\ncheckpoints = 100\n");
  try {
    (void)c.sim(1);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("test.ini"), std::string::npos);
  }
}
