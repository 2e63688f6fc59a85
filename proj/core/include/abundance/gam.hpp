#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "abundance/geometry.hpp"
#include "abundance/lgcp.hpp"
#include "abundance/survey.hpp"

namespace abundance {

/// Thin-plate kernel r^2 log r (0 at r = 0).
double tps_kernel(double r);

/// Low-rank thin-plate spline: radial functions at the knots, constrained to
/// be orthogonal to affine functions at the knots. Coordinates are centred
/// and scaled internally; this only shifts the affine part.
class ThinPlateBasis {
 public:
  ThinPlateBasis() = default;
  /// Needs at least 3 non-collinear knots; throws InputError otherwise.
  explicit ThinPlateBasis(std::vector<Point> knots);

  const std::vector<Point>& knots() const { return knots_; }
  /// Raw radial values eta(|p - k_j|), one column per knot.
  Eigen::MatrixXd radial(std::span<const Point> points) const;
  /// Constrained radial columns (radial * Z), knots - 3 of them.
  Eigen::MatrixXd evaluate(std::span<const Point> points) const;
  /// Bending-energy penalty Z' E Z of the constrained columns.
  const Eigen::MatrixXd& penalty() const { return penalty_; }
  Eigen::Index size() const { return penalty_.rows(); }

 private:
  std::vector<Point> knots_;
  Point centre_;
  double scale_ = 1.0;
  Eigen::MatrixXd null_space_;
  Eigen::MatrixXd penalty_;
};

/// Design [1, s1, s2, constrained radial] and a penalty that is zero on the
/// three affine columns.
struct BasisMatrices {
  Eigen::MatrixXd radial;  ///< raw radial values
  Eigen::MatrixXd x;
  Eigen::MatrixXd penalty;
};
BasisMatrices build_basis(std::span<const Point> knots, std::span<const Point> points);

/// Deterministic farthest-point sample of n distinct points (first pick: the
/// point nearest the centroid).
std::vector<Point> farthest_point_knots(std::span<const Point> points, std::size_t n);

enum class GamFamily { Poisson, NegBin };
std::string to_string(GamFamily f);

struct PirlsOptions {
  int max_iter = 200;
  double tol = 1e-9;
};

struct GamFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;  ///< (X'WX + lambda P)^-1 at convergence
  double edf = 0.0;
  double lambda = 0.0;
  GamFamily family = GamFamily::Poisson;
  double tau = 0.0;       ///< NegBin shape; 0 for Poisson
  double deviance = 0.0;  ///< unpenalised
  int iterations = 0;
  /// Penalised deviance after each accepted iterate.
  std::vector<double> deviance_history;
  Eigen::VectorXd fitted;  ///< fitted means
};

/// Family deviance sum; tau ignored for Poisson.
double deviance(std::span<const double> y, std::span<const double> mu, GamFamily family, double tau);

/// Penalised IRLS with log link and offsets (log exposures). Throws
/// NumericalError on non-convergence or coefficient blow-up.
GamFit fit_pirls(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::VectorXd& offset,
                 GamFamily family, double lambda, const Eigen::MatrixXd& penalty, double tau = 0.0,
                 const PirlsOptions& options = {});

/// n D / (n - edf)^2; +inf when n <= edf.
double gcv_score(const GamFit& fit, std::size_t n);

struct SmoothingSelection {
  double lambda = 0.0;
  double gcv = 0.0;
  std::vector<double> grid_lambda;
  std::vector<double> grid_gcv;  ///< +inf where skipped or failed
};

/// GCV over a log-spaced grid scaled by tr(X'WX)/tr(P), then golden-section
/// refinement around the best grid point.
SmoothingSelection select_smoothing(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& offset, GamFamily family,
                                    const Eigen::MatrixXd& penalty, double tau = 0.0);

/// Maximum-likelihood shape with fitted means held fixed, capped at 1e8.
double estimate_nb_shape(std::span<const double> y, std::span<const double> mu);
inline constexpr double kShapeCap = 1e8;

/// K draws of the coefficients from N(coef, cov), as columns.
Eigen::MatrixXd sample_params(const GamFit& fit, std::size_t k, std::uint64_t seed);

struct GamConfig {
  std::string species;
  std::vector<Covariate> covariates = default_covariates();
  std::size_t knots = 30;
  GamFamily family = GamFamily::Poisson;
  std::optional<double> lambda;  ///< fixed smoothing; GCV when empty
  int max_shape_rounds = 20;
};

/// Fixed covariates plus the thin-plate smooth. Affine columns of the spline
/// not already among the covariates are added unpenalised.
struct GamDesign {
  std::vector<Covariate> covariates;
  std::optional<CovariateRaster> raster;
  ThinPlateBasis basis;
  bool add_intercept = false;
  bool add_x = false;
  bool add_y = false;

  Eigen::MatrixXd rows(std::span<const Point> points) const;
  Eigen::MatrixXd penalty() const;
  std::size_t num_unpenalized() const;
  std::vector<std::string> column_names() const;
};

struct GamModelFit {
  GamDesign design;
  GamFit fit;
  std::optional<SmoothingSelection> selection;
};

GamModelFit fit_gam(const Survey& survey, const CovariateRaster* raster, const GamConfig& config);

/// Coefficients, standard errors, edf, lambda and shape.
void write_gam_summary(std::ostream& out, const GamModelFit& model);

}  // namespace abundance
