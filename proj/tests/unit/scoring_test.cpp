#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <gtest/gtest.h>

#include "abundance/random.hpp"
#include "abundance/scoring.hpp"

namespace abundance {
namespace {

// Closed-form CRPS of a Poisson forecast (Wei and Held):
// (y - l)(2F(y) - 1) + 2 l f(y) - l e^{-2l} (I0(2l) + I1(2l)).
double poisson_crps_closed_form(double lambda, std::int64_t y) {
  double f = std::exp(-lambda), cdf = f;
  for (std::int64_t k = 1; k <= y; ++k) {
    f *= lambda / static_cast<double>(k);
    cdf += f;
  }
  const double yd = static_cast<double>(y);
  return (yd - lambda) * (2.0 * cdf - 1.0) + 2.0 * lambda * f -
         lambda * std::exp(-2.0 * lambda) *
             (boost::math::cyl_bessel_i(0, 2.0 * lambda) + boost::math::cyl_bessel_i(1, 2.0 * lambda));
}

TEST(LogScore, PaperValues) {
  const LogScore a = log_score(CountDistribution::poisson(1.0), 0);
  EXPECT_DOUBLE_EQ(a.value, 1.0);
  EXPECT_FALSE(a.clamped);
  EXPECT_NEAR(log_score(CountDistribution::poisson(2.0), 2).value, 2.0 - std::log(2.0), 1e-12);
  EXPECT_NEAR(log_score(CountDistribution::negbin(2.0, 1.0), 0).value, std::log(3.0), 1e-12);
}

TEST(LogScore, ClampsImpossibleObservations) {
  const LogScore s = log_score(CountDistribution::point_mass(3), 4);
  EXPECT_TRUE(s.clamped);
  EXPECT_NEAR(s.value, -std::log(kLogScoreFloor), 1e-9);
  EXPECT_TRUE(log_score(CountDistribution::poisson(1.0), 10000).clamped);
}

TEST(Crps, PointMasses) {
  EXPECT_EQ(crps(CountDistribution::point_mass(5), 5), 0.0);
  EXPECT_EQ(crps(CountDistribution::point_mass(3), 1), 2.0);
  EXPECT_EQ(crps(CountDistribution::point_mass(0), 4), 4.0);
}

TEST(Crps, PoissonMatchesClosedForm) {
  EXPECT_NEAR(crps(CountDistribution::poisson(1.0), 0), 0.4762, 1e-3);
  for (double lambda : {0.3, 1.0, 4.5, 30.0})
    for (std::int64_t y : {0, 1, 3, 10, 40})
      EXPECT_NEAR(crps(CountDistribution::poisson(lambda), y), poisson_crps_closed_form(lambda, y), 1e-8)
          << lambda << " " << y;
}

TEST(Crps, TruncationInvariant) {
  for (std::int64_t y : {0, 4, 12}) {
    const double a = crps(CountDistribution::negbin(6.0, 1.3, 1e-9), y);
    const double b = crps(CountDistribution::negbin(6.0, 1.3, 1e-12), y);
    EXPECT_NEAR(a, b, 1e-7);
  }
}

TEST(Crps, ProprietySpotCheck) {
  const CountDistribution truth = CountDistribution::poisson(3.0, 1e-14);
  const std::vector<CountDistribution> candidates{truth, CountDistribution::poisson(2.0), CountDistribution::poisson(4.0),
                                                  CountDistribution::negbin(3.0, 5.0)};
  std::vector<double> expected;
  for (const CountDistribution& c : candidates) {
    double e = 0.0;
    for (std::int64_t y = 0; y <= truth.max_support(); ++y) e += truth.pmf(y) * crps(c, y);
    expected.push_back(e);
  }
  for (std::size_t i = 1; i < expected.size(); ++i) EXPECT_LT(expected[0], expected[i]) << i;
}

TEST(Bootstrap, Defaults) {
  const BootstrapOptions o;
  EXPECT_EQ(o.resamples, 10000u);
  EXPECT_EQ(o.level, 0.90);
}

TEST(Bootstrap, ConstantScoresAndBounds) {
  const std::vector<double> c(8, 1.25);
  const Interval i = bootstrap_ci(c, BootstrapOptions{}, 1);
  EXPECT_EQ(i.lo, 1.25);
  EXPECT_EQ(i.hi, 1.25);
  const std::vector<double> s{0.3, 2.0, 1.1, 0.9, 5.0, 0.2};
  const Interval j = bootstrap_ci(s, BootstrapOptions{}, 2);
  EXPECT_GE(j.lo, 0.2);
  EXPECT_LE(j.hi, 5.0);
  EXPECT_LE(j.lo, j.hi);
  const Interval k = bootstrap_ci(s, BootstrapOptions{}, 2);
  EXPECT_EQ(j.lo, k.lo);
  EXPECT_EQ(j.hi, k.hi);
}

TEST(Bootstrap, UnitWeightsMatchPlainResampling) {
  const std::vector<double> s{0.3, 2.0, 1.1, 0.9, 5.0, 0.2};
  const std::vector<double> w(s.size(), 1.0);
  const Interval a = bootstrap_ci(s, BootstrapOptions{2000, 0.9}, 3);
  const Interval b = bootstrap_ci(s, w, BootstrapOptions{2000, 0.9}, 3);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
}

TEST(Coverage, SingleUnit) {
  const std::vector<CountDistribution> d{CountDistribution::poisson(10.0)};
  const std::vector<std::int64_t> y{10};
  const std::vector<double> levels{0.5};
  EXPECT_EQ(coverage(d, y, levels)[0], 1.0);
  EXPECT_TRUE(covers(d[0], 10, 0.5));
  EXPECT_FALSE(covers(d[0], 30, 0.9));
}

TEST(Coverage, SelfConsistentDraws) {
  const CountDistribution pred = CountDistribution::negbin(1000.0, 20.0);
  Engine engine(17);
  boost::random::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 10000;
  std::vector<std::int64_t> ys(n);
  for (auto& y : ys) y = pred.quantile(u(engine));
  const std::vector<CountDistribution> dists(n, pred);
  const std::vector<double> levels{0.5, 0.9};
  const std::vector<double> cov = coverage(dists, ys, levels);
  EXPECT_NEAR(cov[0], 0.5, 0.02);
  EXPECT_NEAR(cov[1], 0.9, 0.02);
}

TEST(ScoreTable, FoldMeansAndCoverageCounts) {
  const std::vector<double> levels{0.5, 0.9};
  std::vector<UnitScore> units;
  const std::vector<std::pair<std::size_t, std::int64_t>> obs{{0, 0}, {0, 2}, {1, 1}, {2, 9}};
  for (const auto& [fold, y] : obs) {
    UnitScore u = score_unit(CountDistribution::poisson(1.5), y, levels);
    u.fold = fold;
    u.unit = "u" + std::to_string(y);
    units.push_back(u);
  }
  const ScoreTable t = make_score_table(units, 3, levels, BootstrapOptions{500, 0.9}, 4);
  ASSERT_EQ(t.fold_sizes, (std::vector<std::size_t>{2, 1, 1}));
  EXPECT_NEAR(t.fold_crps[0], 0.5 * (units[0].crps + units[1].crps), 1e-15);
  double mean = 0.0;
  for (const UnitScore& u : units) mean += u.log_score;
  EXPECT_NEAR(t.mean_log, mean / 4.0, 1e-15);
  EXPECT_EQ(units[3].covered[1], false);
  EXPECT_EQ(t.covered[1], 3u);
  EXPECT_LE(t.ci_crps.lo, t.mean_crps);
  EXPECT_GE(t.ci_crps.hi, t.mean_crps);
  std::ostringstream out;
  const std::vector<std::pair<std::string, const ScoreTable*>> rows{{"m", &t}};
  write_score_table(out, "photos", rows);
  EXPECT_NE(out.str().find("CRPS"), std::string::npos);
}

}  // namespace
}  // namespace abundance
