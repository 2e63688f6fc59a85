#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "abundance/count_distribution.hpp"
#include "abundance/gam.hpp"
#include "abundance/geometry.hpp"
#include "abundance/lgcp.hpp"
#include "abundance/survey.hpp"

namespace abundance {

/// Photo-sized default cells (km).
inline constexpr double kDefaultCellWidthKm = 0.226;
inline constexpr double kDefaultCellHeightKm = 0.346;

struct PredictionGrid {
  std::vector<Rect> cells;
  std::vector<Point> centers;
  std::vector<double> areas;

  std::size_t size() const { return cells.size(); }
  double total_area() const;
};

/// Regular lattice over the region's bounding box keeping cells whose centres
/// lie in the region. Throws InputError when no cell is kept.
PredictionGrid build_grid(const Region& region, double cell_w = kDefaultCellWidthKm,
                          double cell_h = kDefaultCellHeightKm);

/// Midpoint rule sum_j exp(eta_j) |B_j|.
double integrate_intensity(const Eigen::VectorXd& eta, std::span<const double> areas);

/// Equal-weight Poisson mixture.
CountDistribution predictive_mixture(std::span<const double> mu, double tail = kDefaultTail);

/// For each parameter draw k (column of params), N_k = sum_j N_jk with
/// N_jk ~ NegBin(|B_j| exp(x_j' theta_k), tau) independent; returns the
/// empirical law of {N_k}. Sampled as a Poisson with the Gamma-mixed sum of
/// cell means, which has the same distribution.
CountDistribution predictive_negbin_sum(const Eigen::MatrixXd& x, const Eigen::MatrixXd& params,
                                        std::span<const double> areas, double tau, std::uint64_t seed);

struct PredictiveSummary {
  double mean = 0.0;
  std::int64_t median = 0;
  std::int64_t mode = 0;
  std::int64_t q025 = 0;
  std::int64_t q25 = 0;
  std::int64_t q75 = 0;
  std::int64_t q975 = 0;
  std::int64_t iqr = 0;
};

PredictiveSummary summarize(const CountDistribution& dist);

/// `count probability` lines followed by a `# summary ...` line.
void write_predictive(std::ostream& out, const CountDistribution& dist);
/// Reads the pmf written by write_predictive (comment lines ignored).
CountDistribution read_predictive(std::istream& in, const std::string& source = "<stream>");
void write_summary_line(std::ostream& out, const PredictiveSummary& s);

/// Point targets with exposures: prediction cells or photos.
struct Targets {
  std::span<const Point> centers;
  std::span<const double> areas;
};

/// Per-draw predictive means: sum over `total` targets and one value per
/// `points` target.
struct DrawMeans {
  std::vector<double> total;   ///< K (empty when no total targets)
  Eigen::MatrixXd points;      ///< points x K
};

/// K latent fields from the LGCP posterior pushed through the targets.
DrawMeans lgcp_draw_means(const LgcpFit& fit, Targets total, Targets points, std::size_t k,
                          std::uint64_t seed);

/// Same for parameter draws of a GAM (columns of params).
DrawMeans gam_draw_means(const GamDesign& design, const Eigen::MatrixXd& params, Targets total,
                         Targets points);

/// Per-target posterior median intensity (count per km^2) from K draws.
Eigen::VectorXd lgcp_median_intensity(const LgcpFit& fit, std::span<const Point> centers, std::size_t k,
                                      std::uint64_t seed);

}  // namespace abundance
