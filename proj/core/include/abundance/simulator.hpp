#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "abundance/geometry.hpp"
#include "abundance/lgcp.hpp"
#include "abundance/survey.hpp"

namespace abundance {

enum class RasterKind { None, Gradient, Smooth };

/// Synthetic ice raster with values in [0, 1] covering the region plus a margin.
/// Gradient increases linearly from south to north; Smooth is a fixed sum of
/// low-frequency cosines whose phases come from the seed.
struct RasterSpec {
  RasterKind kind = RasterKind::Gradient;
  double spacing = 0.5;  ///< km
  double margin = 2.0;   ///< km beyond the region bounding box
};

struct SimConfig {
  std::size_t num_transects = 27;
  double transect_spacing = 5.6;  ///< km between transect centre lines
  std::size_t photos_per_transect = 11;
  double photo_width = 0.226;     ///< km, along the transect
  double photo_height = 0.346;    ///< km
  double photo_step = 4 * 0.226;  ///< km between consecutive photo centres
  Point origin{0.0, 0.0};         ///< left edge of the first photo on the southern transect
  double half_width = kDefaultHalfWidthKm;
  std::string species = "seal";

  double alpha = 3.0;
  /// Non-intercept effects in log intensity.
  std::vector<std::pair<Covariate, double>> beta{{Covariate::Ice, 1.0}};
  double kappa = 0.0747;
  double sigma2 = 1.0;

  RasterSpec raster;
  /// Simulation cells per photo side; photo footprints are unions of cells.
  std::size_t subdivision = 4;
  /// Latent lattice spacing and margin (km); <= 0 picks range / 10 and range.
  double lattice_spacing = 0.0;
  double lattice_margin = 0.0;
  std::uint64_t seed = 1;

  /// Throws InputError on an inconsistent layout.
  void validate() const;
};

/// 27 transects 5.6 km apart with 11 photos each.
SimConfig sim_preset_paper_like();
/// 3 short transects, for quick runs.
SimConfig sim_preset_small();
/// "paper-like" or "small".
SimConfig sim_preset(const std::string& name);

struct SimResult {
  SimConfig config;
  Survey survey;
  std::optional<CovariateRaster> raster;
  Region region;
  /// Realised number of animals in the region.
  std::int64_t true_total = 0;
  /// Integral of the realised intensity over the region.
  double expected_total = 0.0;
  /// Latent field on the lattice, node (i, j) at index j * (nx + 1) + i.
  Rect lattice;
  std::size_t lattice_nx = 0;
  std::size_t lattice_ny = 0;
  Eigen::VectorXd field;

  /// Bilinear interpolation of the latent field.
  double field_at(Point p) const;
};

/// Draws the latent field on a regular lattice, evaluates the intensity on a
/// grid of cells `subdivision` times finer than the photos, and draws
/// independent Poisson counts per cell. Photo counts and the true total are
/// exact sums of cell counts. Cells whose centre falls in an earlier band are
/// skipped so overlapping bands are counted once.
SimResult simulate_lgcp_survey(const SimConfig& config);

CovariateRaster make_sim_raster(const RasterSpec& spec, const Rect& box, std::uint64_t seed);

/// `key value` lines with the true total and generating parameters.
void write_truth(std::ostream& out, const SimResult& result);

}  // namespace abundance
