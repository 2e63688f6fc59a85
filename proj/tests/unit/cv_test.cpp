#include <algorithm>
#include <cstring>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/random/poisson_distribution.hpp>
#include <gtest/gtest.h>

#include "abundance/cv.hpp"
#include "abundance/error.hpp"
#include "abundance/random.hpp"
#include "abundance/simulator.hpp"
#include "fixtures.hpp"

namespace abundance {
namespace {

void expect_partition(const FoldSpec& f, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& fold : f.folds)
    for (std::size_t i : fold) {
      ASSERT_LT(i, n);
      ++seen[i];
    }
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], 1) << i;
}

// Homogeneous Poisson counts with intensity lambda0 per km^2.
Survey homogeneous_survey(std::size_t transects, std::size_t per, double lambda0, std::uint64_t seed) {
  Engine engine(seed);
  return testing::grid_survey(transects, per, 0.226, 0.346, 0.5, 5.6, [&](std::size_t, std::size_t) {
    return boost::random::poisson_distribution<std::int64_t>(lambda0 * 0.226 * 0.346)(engine);
  });
}

TEST(FoldsRandom, TwentyPhotosTenFolds) {
  const Survey s = testing::toy_survey(4, 5);
  const FoldSpec f = folds_random(s, 10, 3);
  EXPECT_EQ(f.kind, FoldKind::Random);
  ASSERT_EQ(f.size(), 10u);
  for (const auto& fold : f.folds) EXPECT_EQ(fold.size(), 2u);
  expect_partition(f, s.size());
}

TEST(FoldsRandom, NearEqualSizesAndDeterminism) {
  const Survey s = testing::toy_survey(3, 9);
  const FoldSpec f = folds_random(s, 10, 5);
  std::size_t lo = s.size(), hi = 0;
  for (const auto& fold : f.folds) {
    lo = std::min(lo, fold.size());
    hi = std::max(hi, fold.size());
  }
  EXPECT_LE(hi - lo, 1u);
  expect_partition(f, s.size());
  EXPECT_EQ(folds_random(s, 10, 5).folds, f.folds);
  EXPECT_NE(folds_random(s, 10, 6).folds, f.folds);
  EXPECT_THROW(folds_random(s, 0, 1), InputError);
}

TEST(FoldsTransect, OneFoldPerTransect) {
  const Survey s = testing::toy_survey(3, 4);
  const FoldSpec f = folds_transect(s);
  ASSERT_EQ(f.size(), 3u);
  expect_partition(f, s.size());
  for (std::size_t t = 0; t < 3; ++t) {
    std::vector<std::size_t> members = s.transects()[t].members;
    std::vector<std::size_t> fold = f.folds[t];
    std::sort(members.begin(), members.end());
    std::sort(fold.begin(), fold.end());
    EXPECT_EQ(fold, members);
  }
}

TEST(FoldsTransect, PaperLikeLayoutHas27Folds) {
  SimConfig c = sim_preset_paper_like();
  c.sigma2 = 0.0;
  const SimResult r = simulate_lgcp_survey(c);
  EXPECT_EQ(folds_transect(r.survey).size(), 27u);
}

CvConfig small_config(ModelKind kind) {
  CvConfig c;
  c.model = kind;
  c.draws = 200;
  c.bootstrap.resamples = 200;
  c.lgcp.covariates = {Covariate::Intercept};
  c.lgcp.grid = GridSpec::rectangular(std::vector<double>{0.5, 1.5}, std::vector<double>{-1.0});
  c.gam.covariates = {Covariate::Intercept};
  c.gam.knots = 6;
  c.gam.lambda = 5.0;
  return c;
}

TEST(FitFold, HeldOutCountsNeverReachTheFit) {
  const Survey s = testing::toy_survey(3, 5);
  const std::vector<std::size_t> held{1, 7, 12};
  std::vector<Photo> perturbed(s.photos().begin(), s.photos().end());
  for (std::size_t i : held) perturbed[i].counts["seal"] += 37;
  const Survey s2(perturbed);
  for (ModelKind kind : {ModelKind::HomPo, ModelKind::GamPo, ModelKind::GamNb, ModelKind::Lgcp}) {
    const CvConfig cfg = small_config(kind);
    const FoldModel a = fit_fold(s, nullptr, cfg, held);
    const FoldModel b = fit_fold(s2, nullptr, cfg, held);
    const std::vector<double> fa = a.fingerprint(), fb = b.fingerprint();
    ASSERT_FALSE(fa.empty()) << to_string(kind);
    ASSERT_EQ(fa.size(), fb.size());
    EXPECT_EQ(std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)), 0) << to_string(kind);
  }
}

TEST(PredictFold, AggregateMeanIsSumOfPhotoMeans) {
  const Survey s = testing::toy_survey(3, 5);
  const std::vector<std::size_t> held{0, 4, 9};
  for (ModelKind kind : {ModelKind::HomPo, ModelKind::GamPo, ModelKind::Lgcp}) {
    const CvConfig cfg = small_config(kind);
    const FoldModel m = fit_fold(s, nullptr, cfg, held);
    const FoldPredictions p = predict_fold(m, s, held, cfg, 11);
    ASSERT_EQ(p.photos.size(), held.size());
    ASSERT_TRUE(p.aggregate.has_value());
    double sum = 0.0;
    for (const CountDistribution& d : p.photos) sum += d.mean();
    EXPECT_NEAR(p.aggregate->mean() / sum, 1.0, 1e-6) << to_string(kind);
  }
}

TEST(PredictFold, HomPoPhotoPredictiveIsNegBin) {
  const Survey s = testing::toy_survey(3, 5);
  const std::vector<std::size_t> held{2};
  const CvConfig cfg = small_config(ModelKind::HomPo);
  const FoldModel m = fit_fold(s, nullptr, cfg, held);
  const FoldPredictions p = predict_fold(m, s, held, cfg, 1);
  const GammaPosterior& g = *m.hom;
  EXPECT_NEAR(p.photos[0].mean(), s.photo(2).area() * g.a / g.b, 1e-12);
  EXPECT_EQ(p.photos[0].shape(), g.a);
}

TEST(RunCv, ReportBookkeeping) {
  const Survey s = testing::toy_survey(3, 5);
  const CvConfig cfg = small_config(ModelKind::HomPo);
  const FoldSpec folds = folds_random(s, 5, 2);
  const CvReport r = run_cv(s, nullptr, cfg, folds, 7);
  EXPECT_EQ(r.num_folds, 5u);
  EXPECT_TRUE(r.complete);
  ASSERT_TRUE(r.photo.has_value());
  ASSERT_TRUE(r.aggregate.has_value());
  EXPECT_EQ(r.photo->units.size(), s.size());
  EXPECT_EQ(r.aggregate->units.size(), 5u);
  double log = 0.0, crps_sum = 0.0;
  for (const UnitScore& u : r.photo->units) {
    log += u.log_score;
    crps_sum += u.crps;
  }
  EXPECT_NEAR(r.photo->mean_log, log / s.size(), 1e-12);
  EXPECT_NEAR(r.photo->mean_crps, crps_sum / s.size(), 1e-12);
  const CvReport t = run_cv(s, nullptr, cfg, folds_transect(s), 7);
  EXPECT_EQ(t.num_folds, 3u);
  std::ostringstream out;
  const std::vector<CvReport> reports{r, t};
  write_cv_report(out, reports);
  EXPECT_NE(out.str().find("hom-po"), std::string::npos);
}

TEST(RunCv, DeterministicForSeed) {
  const Survey s = testing::toy_survey(3, 5);
  const CvConfig cfg = small_config(ModelKind::GamPo);
  const FoldSpec folds = folds_transect(s);
  const CvReport a = run_cv(s, nullptr, cfg, folds, 3), b = run_cv(s, nullptr, cfg, folds, 3);
  ASSERT_EQ(a.photo->units.size(), b.photo->units.size());
  for (std::size_t i = 0; i < a.photo->units.size(); ++i) EXPECT_EQ(a.photo->units[i].crps, b.photo->units[i].crps);
  EXPECT_EQ(a.photo->ci_log.lo, b.photo->ci_log.lo);
}

TEST(RunCv, HomPoCrpsMatchesTruePoissonOnHomogeneousData) {
  const double lambda0 = 60.0;
  const Survey s = homogeneous_survey(10, 50, lambda0, 4);
  CvConfig cfg = small_config(ModelKind::HomPo);
  cfg.a0 = 1e-3;
  cfg.b0 = 1e-3;
  const CvReport r = run_cv(s, nullptr, cfg, folds_random(s, 10, 1), 2);
  double oracle = 0.0;
  for (const UnitScore& u : r.photo->units) {
    const std::size_t i = static_cast<std::size_t>(std::find_if(s.photos().begin(), s.photos().end(),
                                                                [&](const Photo& p) { return p.id == u.unit; }) -
                                                   s.photos().begin());
    oracle += crps(CountDistribution::poisson(lambda0 * s.photo(i).area()), u.observed);
  }
  oracle /= static_cast<double>(r.photo->units.size());
  EXPECT_EQ(r.photo->units.size(), 500u);
  EXPECT_NEAR(r.photo->mean_crps / oracle, 1.0, 0.05);
}

TEST(RunCv, DegenerateLgcpAgreesWithHomPo) {
  const Survey s = homogeneous_survey(4, 25, 200.0, 9);
  CvConfig lg = small_config(ModelKind::Lgcp);
  lg.draws = 2000;
  lg.lgcp.grid.points = {Hyper{8.0, -1.0}};  // field variance about 6e-8
  CvConfig hp = small_config(ModelKind::HomPo);
  hp.a0 = 1e-9;
  hp.b0 = 1e-9;
  const std::vector<std::size_t> held{3, 30, 57, 88};
  const FoldPredictions pl = predict_fold(fit_fold(s, nullptr, lg, held), s, held, lg, 5);
  const FoldPredictions ph = predict_fold(fit_fold(s, nullptr, hp, held), s, held, hp, 5);
  // Standard error of the LGCP mixture mean from the spread of its component means.
  const auto comps = pl.aggregate->component_means();
  double m = 0.0, v = 0.0;
  for (double c : comps) m += c;
  m /= static_cast<double>(comps.size());
  for (double c : comps) v += (c - m) * (c - m);
  const double se = std::sqrt(v / (comps.size() - 1.0) / static_cast<double>(comps.size()));
  EXPECT_NEAR(pl.aggregate->mean(), ph.aggregate->mean(), 3.0 * se);
}

TEST(ModelKind, NamesRoundTrip) {
  for (ModelKind k : {ModelKind::Lgcp, ModelKind::GamPo, ModelKind::GamNb, ModelKind::HomPo})
    EXPECT_EQ(model_from_string(to_string(k)), k);
  EXPECT_THROW(model_from_string("kriging"), InputError);
}

}  // namespace
}  // namespace abundance
