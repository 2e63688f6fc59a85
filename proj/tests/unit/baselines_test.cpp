#include <cmath>
#include <sstream>

#include <boost/math/distributions/poisson.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <gtest/gtest.h>

#include "abundance/baselines.hpp"
#include "abundance/error.hpp"
#include "abundance/random.hpp"
#include "fixtures.hpp"

namespace abundance {
namespace {

using testing::make_photo;

Survey two_unit_photos() {
  return Survey(std::vector<Photo>{make_photo("a", "T1", {0.5, 0.5}, 1, 1, 3), make_photo("b", "T2", {0.5, 5.5}, 1, 1, 5)});
}

// Total variation between a NegBin pmf and the average of exact Poisson pmfs
// over Gamma(a, rate b) draws of the intensity.
double tv_against_gamma_poisson(const CountDistribution& nb, double a, double b, double area, std::uint64_t seed) {
  const std::size_t draws = 100000;
  Engine engine(seed);
  boost::random::gamma_distribution<double> gamma(a, 1.0 / b);
  const std::int64_t kmax = nb.max_support() + 50;
  std::vector<double> mc(static_cast<std::size_t>(kmax + 1), 0.0);
  for (std::size_t i = 0; i < draws; ++i) {
    const double mu = area * gamma(engine);
    const boost::math::poisson_distribution<double> po(mu);
    for (std::int64_t k = 0; k <= kmax; ++k) mc[static_cast<std::size_t>(k)] += boost::math::pdf(po, static_cast<double>(k));
  }
  double tv = 0.0;
  for (std::int64_t k = 0; k <= kmax; ++k) tv += std::abs(mc[static_cast<std::size_t>(k)] / draws - nb.pmf(k));
  return 0.5 * tv;
}

TEST(HomPois, ConjugateUpdate) {
  const GammaPosterior p = fit_hom_pois(two_unit_photos(), "seal");
  EXPECT_EQ(p.a, 18.0);
  EXPECT_EQ(p.b, 12.0);
  const GammaPosterior q = fit_hom_pois(two_unit_photos(), "seal", 1.0, 2.0);
  EXPECT_EQ(q.a, 9.0);
  EXPECT_EQ(q.b, 4.0);
}

TEST(HomPois, EmptySurveyLeavesPrior) {
  const GammaPosterior p = fit_hom_pois(Survey(std::vector<Photo>{}), "seal", 10.0, 10.0);
  EXPECT_EQ(p.a, 10.0);
  EXPECT_EQ(p.b, 10.0);
}

TEST(HomPois, PredictiveIsNegBin) {
  const CountDistribution d = predictive_hom_pois(GammaPosterior{18.0, 12.0}, 10.0);
  EXPECT_EQ(d.kind(), CountDistribution::Kind::NegBin);
  EXPECT_DOUBLE_EQ(d.mean(), 15.0);
  EXPECT_DOUBLE_EQ(d.shape(), 18.0);
  EXPECT_NEAR(d.pmf(0), std::pow(12.0 / 22.0, 18.0), 1e-15);
  EXPECT_NEAR(d.pmf(0), 1.8e-5, 1e-6);
}

TEST(HomPois, MatchesGammaPoissonMonteCarlo) {
  const GammaPosterior post{18.0, 12.0};
  EXPECT_LT(tv_against_gamma_poisson(predictive_hom_pois(post, 10.0), post.a, post.b, 10.0, 1), 0.003);
  // A single unobserved photo.
  const double photo = 0.226 * 0.346;
  EXPECT_LT(tv_against_gamma_poisson(predictive_hom_pois(post, photo), post.a, post.b, photo, 2), 0.005);
}

TEST(Kingsley, ToyArithmetic) {
  const KingsleyEstimate k = kingsley(
      Survey(std::vector<Photo>{make_photo("a", "T1", {0.5, 0}, 1, 1, 10), make_photo("b", "T2", {0.5, 5}, 1, 1, 20)}),
      "seal", 6.0);
  EXPECT_EQ(k.point, 90.0);
  EXPECT_EQ(k.variance, 900.0);
  EXPECT_EQ(k.sd(), 30.0);
}

TEST(Kingsley, EqualDensitiesHaveZeroVariance) {
  const KingsleyEstimate k = kingsley(
      Survey(std::vector<Photo>{make_photo("a", "T1", {0.5, 0}, 1, 1, 4), make_photo("b", "T2", {1, 5}, 2, 1, 8),
                                make_photo("c", "T3", {0.25, 9}, 0.5, 1, 2)}),
      "seal", 50.0);
  EXPECT_EQ(k.variance, 0.0);
  EXPECT_NEAR(k.point, 200.0, 1e-12);
  const KingsleyEstimate b = kingsley(
      Survey(std::vector<Photo>{make_photo("a", "T1", {0.5, 0}, 1, 1, 4), make_photo("b", "T2", {1, 5}, 2, 1, 8)}),
      "seal", 50.0, KingsleyVariance::BetweenTransect);
  EXPECT_EQ(b.variance, 0.0);
}

TEST(Kingsley, ReorderingKeepsPointButNotVariance) {
  auto survey = [](std::vector<std::int64_t> counts) {
    std::vector<Photo> photos;
    for (std::size_t t = 0; t < counts.size(); ++t)
      photos.push_back(make_photo("p" + std::to_string(t), "T" + std::to_string(t), {0.5, 5.0 * t}, 1, 1, counts[t]));
    return Survey(std::move(photos));
  };
  const KingsleyEstimate a = kingsley(survey({1, 5, 2}), "seal", 20.0);
  const KingsleyEstimate b = kingsley(survey({1, 2, 5}), "seal", 20.0);
  EXPECT_EQ(a.point, b.point);
  EXPECT_NE(a.variance, b.variance);
  // Serial differences (4, -3) vs (1, 3): 400 / 12 * 25 and 400 / 12 * 10.
  EXPECT_NEAR(a.variance, 400.0 / 12.0 * 25.0, 1e-9);
  EXPECT_NEAR(b.variance, 400.0 / 12.0 * 10.0, 1e-9);
  const KingsleyEstimate c = kingsley(survey({1, 5, 2}), "seal", 20.0, KingsleyVariance::BetweenTransect);
  const KingsleyEstimate d = kingsley(survey({1, 2, 5}), "seal", 20.0, KingsleyVariance::BetweenTransect);
  EXPECT_EQ(c.variance, d.variance);
}

TEST(Kingsley, AgreesWithVagueHomPoisMean) {
  const Survey s = testing::toy_survey(4, 5);
  const double area = 123.4;
  const KingsleyEstimate k = kingsley(s, "seal", area);
  const CountDistribution d = predictive_hom_pois(fit_hom_pois(s, "seal", 1e-15, 1e-15), area);
  EXPECT_NEAR(d.mean() / k.point, 1.0, 1e-9);
}

TEST(Kingsley, NeedsTwoTransects) {
  const Survey s(std::vector<Photo>{make_photo("a", "T1", {0.5, 0}, 1, 1, 4)});
  EXPECT_THROW(kingsley(s, "seal", 10.0), InputError);
}

TEST(Kingsley, SummaryHasInterval) {
  std::ostringstream out;
  write_kingsley_summary(out, KingsleyEstimate{90.0, 900.0});
  EXPECT_NE(out.str().find("90"), std::string::npos);
  EXPECT_NE(out.str().find("150"), std::string::npos);
}

}  // namespace
}  // namespace abundance
