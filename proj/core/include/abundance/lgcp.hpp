#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "abundance/gmrf.hpp"
#include "abundance/mesh.hpp"
#include "abundance/survey.hpp"

namespace abundance {

/// Fixed-effect columns available to the log-intensity.
enum class Covariate { Intercept, Ice, X, Y, Radius };

std::string to_string(Covariate c);
Covariate covariate_from_string(const std::string& name);
/// Intercept, ice covariate, s1, s2 and sqrt(s1^2 + s2^2).
std::vector<Covariate> default_covariates();

/// Fixed-effect design evaluated at mesh nodes, with Gaussian prior precisions.
struct DesignInfo {
  std::vector<Covariate> columns;
  Eigen::MatrixXd node_values;      ///< num_nodes x columns
  Eigen::VectorXd prior_precision;  ///< per column, >= 0
  std::optional<CovariateRaster> raster;

  std::size_t size() const { return columns.size(); }
  /// Covariate values at arbitrary points. The ice covariate uses the nearest
  /// raster value outside the raster bounds.
  Eigen::MatrixXd rows(std::span<const Point> points) const;
};

/// Throws InputError if the ice covariate is requested without a raster.
DesignInfo make_design(const Mesh& mesh, std::vector<Covariate> columns,
                       const CovariateRaster* raster, double intercept_variance = 1e6,
                       double beta_variance = 1000.0);

enum class Likelihood { Poisson, Gaussian };

/// Latent Gaussian model at fixed hyperparameters: eta = A z, z ~ N(mu, Q^-1)
/// optionally conditioned on a'z = 0. For Poisson, y_i ~ Po(offset_i exp(eta_i))
/// and rows with zero offset carry no information. For Gaussian,
/// y_i ~ N(eta_i, 1 / offset_i).
struct LaplaceProblem {
  SparseMatrix a;
  Eigen::VectorXd y;
  Eigen::VectorXd offset;
  SparseMatrix q;
  Eigen::VectorXd mu;
  std::optional<LinearConstraint> constraint;
  Likelihood likelihood = Likelihood::Poisson;
  /// log det q and a' q^-1 a when the caller can compute them more cheaply;
  /// otherwise they come from a Cholesky factorisation of q.
  std::optional<double> q_log_det;
  std::optional<double> q_constraint_variance;
  /// Symbolic analysis of q + a' a; the Hessian is analysed afresh when absent.
  std::shared_ptr<const SparseCholesky> symbolic;
};

struct LaplaceOptions {
  int max_iter = 100;
  double gradient_tol = 1e-8;
};

/// Gaussian approximation to p(z | y, theta) at its mode.
struct GaussianApprox {
  Eigen::VectorXd mode;
  SparseMatrix precision;  ///< Q + A' W A at the mode
  /// Laplace approximation of log p(y | theta).
  double log_normalizer = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  /// Negative log posterior (up to a constant) after each accepted iterate,
  /// starting with the initial point.
  std::vector<double> objective_history;
};

/// Newton iterations with step halving (and projection onto the constraint)
/// on the log posterior. `start` may be a warm start. Throws NumericalError on
/// non-convergence or divergence.
GaussianApprox laplace_inner(const LaplaceProblem& problem, const LaplaceOptions& options = {},
                             const Eigen::VectorXd* start = nullptr);

/// Identity observation map: one observation per latent component.
GaussianApprox laplace_inner(const Eigen::VectorXd& counts, const Eigen::VectorXd& offsets,
                             const SparseMatrix& prior_precision, const Eigen::VectorXd& prior_mean,
                             const LaplaceOptions& options = {});

/// Independent Gaussian priors on log tau and log kappa.
struct ThetaPrior {
  double mean_log_tau = 1.328;
  double mean_log_kappa = -2.594;
  double var_log_tau = 10.0;
  double var_log_kappa = 10.0;

  double log_density(const Hyper& h) const;
};

struct GridSpec {
  enum class Kind { Auto, Explicit };
  Kind kind = Kind::Auto;
  /// Used when kind == Explicit.
  std::vector<Hyper> points;
  /// Auto: points per principal axis and their extent in posterior sds.
  int points_per_axis = 5;
  double half_width_sd = 2.5;
  /// Auto: golden-section tolerance of the initial line searches, also the
  /// shortest Newton step taken.
  double search_tol = 1e-2;
  /// Auto: cap on Newton steps after the line searches.
  int max_sweeps = 6;
  /// Auto: starting point of the mode search; defaults to the prior mean.
  std::optional<Hyper> start;

  /// Cartesian product of the two coordinate lists.
  static GridSpec rectangular(std::span<const double> log_tau, std::span<const double> log_kappa);
};

struct LgcpConfig {
  std::string species;
  MeshOptions mesh;
  std::vector<Covariate> covariates = default_covariates();
  double intercept_variance = 1e6;
  double beta_variance = 1000.0;
  ThetaPrior theta_prior;
  GridSpec grid;
  LaplaceOptions laplace;
};

/// Everything about the latent Gaussian model that does not depend on theta.
/// Latent vector z = (f at mesh nodes, fixed effects).
class LgcpModel {
 public:
  LgcpModel(SurveyMesh mesh, DesignInfo design, std::span<const std::size_t> obs_nodes,
            std::span<const std::int64_t> counts, std::span<const double> exposures);

  const SurveyMesh& mesh() const { return mesh_; }
  const DesignInfo& design() const { return design_; }
  std::size_t num_nodes() const { return mesh_.mesh.num_nodes(); }
  std::size_t dim() const { return num_nodes() + design_.size(); }
  const LinearConstraint& constraint() const { return constraint_; }

  /// Block-diagonal prior precision of z.
  SparseMatrix prior_precision(const Hyper& hyper) const;
  LaplaceProblem problem(const Hyper& hyper) const;
  /// Cholesky factor of a Gaussian approximation's precision, reusing the
  /// model's symbolic analysis.
  SparseCholesky factor(const SparseMatrix& precision) const;
  /// Maps z to the log-intensity at the given points.
  SparseMatrix predictor(std::span<const Point> points) const;

 private:
  SurveyMesh mesh_;
  DesignInfo design_;
  SpdeOperator spde_;
  // Prior precision pattern with the C, G, G C^-1 G and fixed-effect parts
  // stored as value arrays aligned with it.
  SparseMatrix q_pattern_;
  Eigen::VectorXd q_c_, q_g_, q_gcg_, q_fixed_;
  std::shared_ptr<const SparseCholesky> h_symbolic_;
  SparseMatrix obs_;
  Eigen::VectorXd y_;
  Eigen::VectorXd exposure_;
  LinearConstraint constraint_;
};

/// Photo observations at their mesh nodes with the photo area as exposure.
std::shared_ptr<const LgcpModel> make_lgcp_model(const Survey& survey, const CovariateRaster* raster,
                                                 const LgcpConfig& config);

struct GridPoint {
  Hyper theta;
  double log_density = 0.0;  ///< unnormalised log p(theta | y); -inf if the fit failed
  double weight = 0.0;
};

struct LgcpFit {
  std::shared_ptr<const LgcpModel> model;
  std::vector<GridPoint> grid;
  /// Empty entries for grid points whose inner fit failed.
  std::vector<std::optional<GaussianApprox>> approx;
  Hyper theta_mode;
  /// Fixed-effect posterior means and sds (mixture over the grid).
  Eigen::VectorXd fixed_mean;
  Eigen::VectorXd fixed_sd;
  /// Posterior mean of theta over the grid.
  Hyper theta_mean;
  double range() const { return theta_mean.range(); }
};

/// Log posterior of theta (up to a constant) with its inner approximation.
struct ThetaEvaluation {
  double log_density;
  std::optional<GaussianApprox> approx;
};
ThetaEvaluation evaluate_theta(const LgcpModel& model, const Hyper& hyper, const ThetaPrior& prior,
                               const LaplaceOptions& options = {},
                               const Eigen::VectorXd* start = nullptr);

/// Normalised weights exp(l_i - max l); -inf entries get weight 0.
std::vector<double> normalize_log_weights(std::span<const double> log_densities);

LgcpFit hyper_posterior(std::shared_ptr<const LgcpModel> model, const GridSpec& grid,
                        const ThetaPrior& prior, const LaplaceOptions& options = {});

LgcpFit fit_lgcp(const Survey& survey, const CovariateRaster* raster, const LgcpConfig& config);

/// Calls fn(k, z) for k in [0, K): grid point drawn by weight, then z from its
/// Gaussian approximation conditioned on the zero-integral constraint. Draw k
/// only depends on (seed, k). fn may be called concurrently for different k.
void for_each_latent_sample(const LgcpFit& fit, std::size_t k,
                            const std::function<void(std::size_t, const Eigen::VectorXd&)>& fn,
                            std::uint64_t seed);

/// K latent vectors as columns.
Eigen::MatrixXd sample_latent(const LgcpFit& fit, std::size_t k, std::uint64_t seed);

/// Per-grid-point table, fixed-effect summaries and range estimate.
void write_fit_summary(std::ostream& out, const LgcpFit& fit);

}  // namespace abundance
