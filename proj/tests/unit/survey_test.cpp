#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "abundance/error.hpp"
#include "abundance/survey.hpp"
#include "fixtures.hpp"

namespace abundance {
namespace {

using testing::make_photo;

const char* kHeader = "id,transect_id,center_x_km,center_y_km,width_km,height_km,harp,hooded\n";

TEST(LoadSurvey, FourRowsTwoTransects) {
  std::istringstream in(std::string(kHeader) +
                        "a,T1,0.113,0,0.226,0.346,3,0\n"
                        "b,T1,0.5,0,0.226,0.346,1,2\n"
                        "c,T2,0.113,5.6,0.226,0.346,0,0\n"
                        "d,T2,0.5,5.6,0.226,0.346,7,1\n");
  const Survey s = parse_survey(in);
  ASSERT_EQ(s.size(), 4u);
  ASSERT_EQ(s.transects().size(), 2u);
  EXPECT_EQ(s.photo(3).id, "d");
  EXPECT_EQ(s.photo(3).counts.at("harp"), 7);
  EXPECT_EQ(s.counts("hooded"), (std::vector<std::int64_t>{0, 2, 0, 1}));
  EXPECT_EQ(s.transects()[1].id, "T2");
}

TEST(LoadSurvey, NegativeCountNamesRow) {
  std::istringstream in(std::string(kHeader) + "a,T1,0,0,0.2,0.3,1,1\nb,T1,1,0,0.2,0.3,-1,0\n");
  try {
    parse_survey(in, "s.csv");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
}

TEST(LoadSurvey, DuplicateIdNamed) {
  std::istringstream in(std::string(kHeader) + "dup,T1,0,0,0.2,0.3,1,1\ndup,T1,1,0,0.2,0.3,1,0\n");
  try {
    parse_survey(in);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("dup"), std::string::npos) << e.what();
  }
}

TEST(LoadSurvey, MissingColumnAndBadDimension) {
  std::istringstream missing("id,transect_id,center_x_km,center_y_km,width_km,harp\na,T,0,0,1,2\n");
  EXPECT_THROW(parse_survey(missing), InputError);
  std::istringstream zero(std::string(kHeader) + "a,T1,0,0,0,0.3,1,1\n");
  EXPECT_THROW(parse_survey(zero), InputError);
}

TEST(LoadSurvey, RoundTripsThroughWriter) {
  const Survey s = testing::toy_survey();
  std::ostringstream out;
  write_survey(out, s);
  std::istringstream in(out.str());
  const Survey back = parse_survey(in);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(back.photo(i).id, s.photo(i).id);
    EXPECT_DOUBLE_EQ(back.photo(i).center.x, s.photo(i).center.x);
    EXPECT_EQ(back.photo(i).counts, s.photo(i).counts);
  }
}

TEST(Survey, OverlappingPhotosInTransectRejected) {
  std::vector<Photo> photos{make_photo("a", "T", {0, 0}, 1, 1, 0), make_photo("b", "T", {0.5, 0}, 1, 1, 0)};
  EXPECT_THROW(Survey(std::move(photos)), InputError);
}

TEST(LoadRaster, ConstantGrid) {
  std::istringstream in("2 2 0 0 1 1\n0.5 0.5\n0.5 0.5\n");
  const CovariateRaster r = parse_raster(in);
  EXPECT_EQ(r.nx(), 2u);
  EXPECT_EQ(r.ny(), 2u);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(r.value(i, j), 0.5);
  EXPECT_DOUBLE_EQ(covariate_at(r, {0.3, 0.8}), 0.5);
}

TEST(LoadRaster, ShortRowAndNanRejected) {
  std::istringstream short_row("3 1 0 0 1 1\n0.1 0.2\n");
  EXPECT_THROW(parse_raster(short_row), InputError);
  std::istringstream nan_value("2 1 0 0 1 1\n0.1 nan\n");
  EXPECT_THROW(parse_raster(nan_value), InputError);
}

CovariateRaster ramp() {
  // Node values 0, 0 on the southern row and 1, 1 on the northern row.
  return CovariateRaster({0.0, 0.0}, 1.0, 1.0, 2, 2, {0.0, 0.0, 1.0, 1.0});
}

TEST(CovariateAt, NodeValueAndCentre) {
  const CovariateRaster r = ramp();
  EXPECT_DOUBLE_EQ(covariate_at(r, {1.0, 1.0}), 1.0);
  EXPECT_DOUBLE_EQ(covariate_at(r, {0.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(covariate_at(r, {0.5, 0.5}), 0.5);
}

TEST(CovariateAt, OutsideIsDomainErrorUnlessClamped) {
  const CovariateRaster r = ramp();
  EXPECT_THROW(covariate_at(r, {1.5, 0.5}), DomainError);
  EXPECT_DOUBLE_EQ(covariate_at_clamped(r, {5.0, 7.0}), 1.0);
  EXPECT_DOUBLE_EQ(covariate_at_clamped(r, {-3.0, -1.0}), 0.0);
}

TEST(CovariateAt, ContinuousAcrossCellEdges) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> values(16);
  for (double& v : values) v = u(rng);
  const CovariateRaster r({0.0, 0.0}, 0.5, 0.25, 4, 4, values);
  for (int k = 0; k < 20; ++k) {
    const double y = 0.75 * u(rng);
    const double x = 0.5;  // shared edge between columns 0 and 1
    const double left = covariate_at(r, {std::nextafter(x, 0.0), y});
    const double right = covariate_at(r, {std::nextafter(x, 1.0), y});
    EXPECT_NEAR(left, right, 1e-12);
  }
}

TEST(BuildRegion, SingleTransectBand) {
  // Photos spanning x in [0, 10].
  std::vector<Photo> photos{make_photo("a", "T", {0.5, 0}, 1, 0.3, 0), make_photo("b", "T", {9.5, 0}, 1, 0.3, 0)};
  const Region r = build_region(Survey(std::move(photos)), 2.778);
  ASSERT_EQ(r.bands.size(), 1u);
  EXPECT_NEAR(r.bands[0].width(), 10.0, 1e-12);
  EXPECT_NEAR(r.bands[0].height(), 5.556, 1e-12);
  EXPECT_NEAR(r.area, 55.56, 1e-9);
}

TEST(BuildRegion, DisjointAndOverlappingBands) {
  std::vector<Photo> one{make_photo("a", "A", {0.5, 0}, 1, 0.3, 0)};
  const double single = build_region(Survey(one), 1.0).area;
  std::vector<Photo> disjoint{make_photo("a", "A", {0.5, 0}, 1, 0.3, 0), make_photo("b", "B", {0.5, 10}, 1, 0.3, 0)};
  EXPECT_NEAR(build_region(Survey(disjoint), 1.0).area, 2.0 * single, 1e-12);
  std::vector<Photo> same{make_photo("a", "A", {0.5, 0}, 1, 0.3, 0), make_photo("b", "B", {0.5, 0.0}, 1, 0.3, 0)};
  EXPECT_NEAR(build_region(Survey(same), 1.0).area, single, 1e-12);
}

TEST(BuildRegion, TransectOrderDoesNotChangeArea) {
  const Survey s = testing::grid_survey(4, 3, 0.3, 0.4, 0.2, 1.5, [](std::size_t, std::size_t) { return 1; });
  std::vector<Photo> photos(s.photos().begin(), s.photos().end());
  std::reverse(photos.begin(), photos.end());
  EXPECT_NEAR(build_region(Survey(photos)).area, build_region(s).area, 1e-9);
}

TEST(BuildRegion, PhotoAreaWithinBandArea) {
  const Survey s = testing::toy_survey(3, 5);
  const Region r = build_region(s);
  for (std::size_t t = 0; t < s.transects().size(); ++t) {
    double sum = 0.0;
    for (std::size_t i : s.transects()[t].members) sum += s.photo(i).area();
    EXPECT_LE(sum, r.bands[t].area());
  }
}

TEST(ResolveSpecies, SingleOrExplicit) {
  const Survey s = testing::toy_survey();
  EXPECT_EQ(resolve_species(s, ""), "seal");
  EXPECT_EQ(resolve_species(s, "seal"), "seal");
  EXPECT_THROW(s.counts("walrus"), InputError);
}

}  // namespace
}  // namespace abundance
