#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "abundance/error.hpp"
#include "abundance/simulator.hpp"

namespace abundance {
namespace {

SimConfig homogeneous(double lambda0) {
  SimConfig c = sim_preset_small();
  c.sigma2 = 0.0;
  c.beta.clear();
  c.raster.kind = RasterKind::None;
  c.alpha = std::log(lambda0);
  return c;
}

std::int64_t photo_total(const Survey& s) {
  std::int64_t n = 0;
  for (const Photo& p : s.photos()) n += p.counts.at("seal");
  return n;
}

TEST(Simulator, HomogeneousTotalMean) {
  const double lambda0 = 0.5;
  const int reps = 200;
  double sum = 0.0, sum2 = 0.0, area = 0.0;
  for (int r = 0; r < reps; ++r) {
    SimConfig c = homogeneous(lambda0);
    c.seed = 100 + static_cast<std::uint64_t>(r);
    const SimResult res = simulate_lgcp_survey(c);
    area = res.region.area;
    EXPECT_NEAR(res.expected_total / (lambda0 * area), 1.0, 1e-9);
    const double t = static_cast<double>(res.true_total);
    sum += t;
    sum2 += t * t;
  }
  const double mean = sum / reps;
  const double var = (sum2 - reps * mean * mean) / (reps - 1.0);
  EXPECT_NEAR(mean, lambda0 * area, 3.0 * std::sqrt(var / reps));
}

TEST(Simulator, DoublingPhotoAreaDoublesCounts) {
  const double lambda0 = 40.0;
  double small = 0.0, big = 0.0;
  for (int r = 0; r < 100; ++r) {
    SimConfig a = homogeneous(lambda0);
    a.seed = 7 + static_cast<std::uint64_t>(r);
    SimConfig b = a;
    b.photo_width *= 2.0;
    small += static_cast<double>(photo_total(simulate_lgcp_survey(a).survey));
    big += static_cast<double>(photo_total(simulate_lgcp_survey(b).survey));
  }
  // Expected totals 100 * 24 * 40 * area and twice that; Poisson sd of each sum is its square root.
  const double expect_small = 100.0 * 24.0 * lambda0 * 0.226 * 0.346;
  EXPECT_NEAR(small, expect_small, 4.0 * std::sqrt(expect_small));
  EXPECT_NEAR(big, 2.0 * expect_small, 4.0 * std::sqrt(2.0 * expect_small));
  EXPECT_NEAR(big / small, 2.0, 0.1);
}

TEST(Simulator, DeterministicForSeed) {
  SimConfig c = sim_preset_small();
  c.seed = 42;
  const SimResult a = simulate_lgcp_survey(c), b = simulate_lgcp_survey(c);
  EXPECT_EQ(a.true_total, b.true_total);
  ASSERT_EQ(a.survey.size(), b.survey.size());
  for (std::size_t i = 0; i < a.survey.size(); ++i) EXPECT_EQ(a.survey.photo(i).counts, b.survey.photo(i).counts);
  EXPECT_EQ(a.field, b.field);
  c.seed = 43;
  EXPECT_NE(simulate_lgcp_survey(c).field, a.field);
}

TEST(Simulator, PhotosTilingTheRegionCountEverything) {
  SimConfig c = sim_preset_small();
  c.photo_step = c.photo_width;
  c.half_width = 0.5 * c.photo_height;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    c.seed = seed;
    const SimResult r = simulate_lgcp_survey(c);
    EXPECT_EQ(photo_total(r.survey), r.true_total);
    EXPECT_NEAR(r.region.area, 3 * 8 * c.photo_width * c.photo_height, 1e-9);
  }
}

TEST(Simulator, PhotoCountsAtMostTotal) {
  SimConfig c = sim_preset_small();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    c.seed = seed;
    const SimResult r = simulate_lgcp_survey(c);
    EXPECT_LE(photo_total(r.survey), r.true_total);
    EXPECT_EQ(r.survey.size(), 24u);
  }
}

TEST(Simulator, CountsIncreaseAcrossCovariateQuartiles) {
  SimConfig c = homogeneous(20.0);
  c.num_transects = 8;
  c.photos_per_transect = 4;
  c.raster.kind = RasterKind::Gradient;
  c.beta = {{Covariate::Ice, 1.5}};
  const int reps = 500;
  std::vector<double> sums(c.num_transects * c.photos_per_transect, 0.0);
  std::vector<double> ice(sums.size(), 0.0);
  for (int r = 0; r < reps; ++r) {
    c.seed = 1000 + static_cast<std::uint64_t>(r);
    const SimResult res = simulate_lgcp_survey(c);
    for (std::size_t i = 0; i < res.survey.size(); ++i) {
      sums[i] += static_cast<double>(res.survey.photo(i).counts.at("seal"));
      ice[i] = covariate_at(*res.raster, res.survey.photo(i).center);
    }
  }
  std::vector<std::size_t> order(sums.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ice[a] < ice[b]; });
  const std::size_t q = order.size() / 4;
  double prev = -1.0;
  for (std::size_t k = 0; k < 4; ++k) {
    double m = 0.0;
    for (std::size_t j = k * q; j < (k + 1) * q; ++j) m += sums[order[j]];
    EXPECT_GT(m, prev) << "quartile " << k;
    prev = m;
  }
}

TEST(Simulator, RasterWithinUnitInterval) {
  for (RasterKind kind : {RasterKind::Gradient, RasterKind::Smooth}) {
    RasterSpec spec;
    spec.kind = kind;
    const CovariateRaster r = make_sim_raster(spec, Rect{0, 0, 20, 12}, 3);
    for (std::size_t j = 0; j < r.ny(); ++j)
      for (std::size_t i = 0; i < r.nx(); ++i) {
        EXPECT_GE(r.value(i, j), 0.0);
        EXPECT_LE(r.value(i, j), 1.0);
      }
  }
}

TEST(Simulator, PresetsAndValidation) {
  const SimConfig p = sim_preset("paper-like");
  EXPECT_EQ(p.num_transects, 27u);
  EXPECT_EQ(p.transect_spacing, 5.6);
  EXPECT_EQ(p.photo_width, 0.226);
  EXPECT_EQ(p.photo_height, 0.346);
  EXPECT_EQ(p.num_transects * p.photos_per_transect, 297u);
  EXPECT_THROW(sim_preset("huge"), InputError);
  SimConfig bad = sim_preset_small();
  bad.photo_step = 0.1;
  EXPECT_THROW(simulate_lgcp_survey(bad), InputError);
  bad = sim_preset_small();
  bad.raster.kind = RasterKind::None;
  EXPECT_THROW(simulate_lgcp_survey(bad), InputError);
}

TEST(Simulator, TruthDump) {
  const SimResult r = simulate_lgcp_survey(sim_preset_small());
  std::ostringstream out;
  write_truth(out, r);
  EXPECT_NE(out.str().find("true_total " + std::to_string(r.true_total)), std::string::npos);
}

}  // namespace
}  // namespace abundance
