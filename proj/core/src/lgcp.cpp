#include "abundance/lgcp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/random/uniform_01.hpp>

#include "abundance/error.hpp"
#include "abundance/parallel.hpp"

namespace abundance {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

std::string to_string(Covariate c) {
  switch (c) {
    case Covariate::Intercept: return "intercept";
    case Covariate::Ice: return "ice";
    case Covariate::X: return "x";
    case Covariate::Y: return "y";
    case Covariate::Radius: return "radius";
  }
  return "?";
}

Covariate covariate_from_string(const std::string& name) {
  for (Covariate c : {Covariate::Intercept, Covariate::Ice, Covariate::X, Covariate::Y, Covariate::Radius})
    if (to_string(c) == name) return c;
  throw InputError("unknown covariate '" + name + "'");
}

std::vector<Covariate> default_covariates() {
  return {Covariate::Intercept, Covariate::Ice, Covariate::X, Covariate::Y, Covariate::Radius};
}

Eigen::MatrixXd DesignInfo::rows(std::span<const Point> points) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point p = points[i];
    for (std::size_t c = 0; c < columns.size(); ++c) {
      double v = 0.0;
      switch (columns[c]) {
        case Covariate::Intercept: v = 1.0; break;
        case Covariate::Ice:
          if (!raster) throw InputError("ice covariate requested without a raster");
          v = covariate_at_clamped(*raster, p);
          break;
        case Covariate::X: v = p.x; break;
        case Covariate::Y: v = p.y; break;
        case Covariate::Radius: v = std::hypot(p.x, p.y); break;
      }
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return out;
}

DesignInfo make_design(const Mesh& mesh, std::vector<Covariate> columns, const CovariateRaster* raster,
                       double intercept_variance, double beta_variance) {
  if (!(intercept_variance > 0.0) || !(beta_variance > 0.0))
    throw InputError("fixed-effect prior variances must be positive");
  DesignInfo d;
  d.columns = std::move(columns);
  for (std::size_t i = 0; i < d.columns.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (d.columns[i] == d.columns[j]) throw InputError("duplicate covariate " + to_string(d.columns[i]));
  const bool needs_raster = std::find(d.columns.begin(), d.columns.end(), Covariate::Ice) != d.columns.end();
  if (needs_raster) {
    if (!raster) throw InputError("ice covariate requested without a raster");
    d.raster = *raster;
  }
  d.node_values = d.rows(mesh.nodes);
  if (!d.node_values.allFinite()) throw InputError("design matrix has non-finite entries");
  d.prior_precision.resize(static_cast<Eigen::Index>(d.columns.size()));
  for (std::size_t c = 0; c < d.columns.size(); ++c)
    d.prior_precision[static_cast<Eigen::Index>(c)] =
        d.columns[c] == Covariate::Intercept ? 1.0 / intercept_variance : 1.0 / beta_variance;
  return d;
}

// ---------------------------------------------------------------------------
// Inner Laplace approximation

namespace {

struct LikelihoodTerms {
  Eigen::VectorXd grad;  // d loglik / d eta
  Eigen::VectorXd curv;  // -d2 loglik / d eta2
};

class Objective {
 public:
  explicit Objective(const LaplaceProblem& p) : p_(p) {
    const Eigen::Index m = p.a.rows();
    active_.assign(static_cast<std::size_t>(m), false);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double o = p.offset[i];
      const double y = p.y[i];
      if (!std::isfinite(o) || o < 0.0) throw InputError("offsets must be finite and nonnegative");
      if (!std::isfinite(y)) throw InputError("observations must be finite");
      if (p.likelihood == Likelihood::Poisson) {
        if (o > 0.0 && y < 0.0) throw InputError("negative count at an observed location");
        if (o == 0.0 && y > 0.0) throw InputError("positive count at a location with zero exposure");
      }
      active_[static_cast<std::size_t>(i)] = o > 0.0;
    }
  }

  /// Negative log posterior up to a constant; +inf when not finite.
  double value(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd eta = p_.a * z;
    double f = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      if (!active_[static_cast<std::size_t>(i)]) continue;
      const double o = p_.offset[i];
      if (p_.likelihood == Likelihood::Poisson) {
        f -= p_.y[i] * eta[i] - o * std::exp(eta[i]);
      } else {
        const double r = p_.y[i] - eta[i];
        f += 0.5 * o * r * r;
      }
    }
    const Eigen::VectorXd dz = z - p_.mu;
    f += 0.5 * dz.dot(p_.q * dz);
    return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
  }

  LikelihoodTerms terms(const Eigen::VectorXd& eta) const {
    LikelihoodTerms t{Eigen::VectorXd::Zero(eta.size()), Eigen::VectorXd::Zero(eta.size())};
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      if (!active_[static_cast<std::size_t>(i)]) continue;
      const double o = p_.offset[i];
      if (p_.likelihood == Likelihood::Poisson) {
        const double mu = o * std::exp(eta[i]);
        t.grad[i] = p_.y[i] - mu;
        t.curv[i] = mu;
      } else {
        t.grad[i] = o * (p_.y[i] - eta[i]);
        t.curv[i] = o;
      }
    }
    return t;
  }

  /// Full log likelihood including normalising constants.
  double log_likelihood(const Eigen::VectorXd& eta) const {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      if (!active_[static_cast<std::size_t>(i)]) continue;
      const double o = p_.offset[i];
      const double y = p_.y[i];
      if (p_.likelihood == Likelihood::Poisson) {
        ll += y * (std::log(o) + eta[i]) - o * std::exp(eta[i]) - std::lgamma(y + 1.0);
      } else {
        const double r = y - eta[i];
        ll += -0.5 * o * r * r + 0.5 * std::log(o / (2.0 * std::numbers::pi));
      }
    }
    return ll;
  }

 private:
  const LaplaceProblem& p_;
  std::vector<bool> active_;
};

SparseMatrix hessian(const LaplaceProblem& p, const SparseMatrix& at, const Eigen::VectorXd& curv) {
  SparseMatrix h = p.q + SparseMatrix(at * curv.asDiagonal() * p.a);
  return h;
}

}  // namespace

GaussianApprox laplace_inner(const LaplaceProblem& p, const LaplaceOptions& options,
                             const Eigen::VectorXd* start) {
  const Eigen::Index n = p.q.rows();
  if (p.q.cols() != n || p.mu.size() != n || p.a.cols() != n)
    throw InputError("latent dimensions disagree");
  if (p.y.size() != p.a.rows() || p.offset.size() != p.a.rows())
    throw InputError("observation vectors disagree with the observation map");
  if (p.constraint && p.constraint->a.size() != n) throw InputError("constraint has the wrong length");
  if (p.constraint && p.constraint->a.squaredNorm() == 0.0) throw InputError("constraint vector is zero");

  const Objective objective(p);
  const SparseMatrix at = p.a.transpose();

  Eigen::VectorXd z = start ? *start : p.mu;
  if (z.size() != n) throw InputError("warm start has the wrong length");
  if (p.constraint) {
    const Eigen::VectorXd& a = p.constraint->a;
    z -= a * (a.dot(z) / a.squaredNorm());
  }

  GaussianApprox out;
  double f = objective.value(z);
  if (!std::isfinite(f)) {
    z = p.mu;
    if (p.constraint) z -= p.constraint->a * (p.constraint->a.dot(z) / p.constraint->a.squaredNorm());
    f = objective.value(z);
    if (!std::isfinite(f)) throw NumericalError("Laplace objective is not finite at the starting point");
  }
  out.objective_history.push_back(f);

  // Each pass factorises the Hessian at the current z, so on exit `chol` and
  // `h` already describe the mode.
  SparseCholesky chol;
  SparseMatrix h;
  Eigen::VectorXd eta;
  bool converged = false;
  int iter = 0;
  for (;; ++iter) {
    eta = p.a * z;
    const LikelihoodTerms t = objective.terms(eta);
    const Eigen::VectorXd prior_grad = p.q * (z - p.mu);
    const Eigen::VectorXd lik_grad = at * t.grad;
    Eigen::VectorXd g = prior_grad - lik_grad;
    Eigen::VectorXd gp = g;
    if (p.constraint) {
      const Eigen::VectorXd& a = p.constraint->a;
      gp -= a * (a.dot(g) / a.squaredNorm());
    }
    const double scale = std::max({1.0, max_abs(prior_grad), max_abs(lik_grad)});
    out.gradient_norm = max_abs(gp) / scale;

    h = hessian(p, at, t.curv);
    if (iter == 0) {
      if (p.symbolic && p.symbolic->size() == n && p.symbolic->nonzeros() == h.nonZeros())
        chol.analyze_like(*p.symbolic);
      else
        chol.analyze(h);
    }
    chol.factorize(h);
    if (out.gradient_norm <= options.gradient_tol) {
      converged = true;
      break;
    }
    if (iter >= options.max_iter) break;

    Eigen::VectorXd d = chol.solve(Eigen::VectorXd(-g));
    if (p.constraint) {
      const Eigen::VectorXd& a = p.constraint->a;
      const Eigen::VectorXd ha = chol.solve(a);
      d -= ha * (a.dot(z + d) / a.dot(ha));
    }
    if (!d.allFinite()) throw NumericalError("Newton step is not finite");
    // Newton decrement below the rounding level of f: no further progress is representable.
    if (-g.dot(d) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f))) {
      converged = true;
      break;
    }

    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
      const Eigen::VectorXd trial = z + step * d;
      const double ft = objective.value(trial);
      if (ft <= f) {
        z = trial;
        f = ft;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No representable decrease left; accept if already close to stationary.
      if (out.gradient_norm <= 1e3 * options.gradient_tol) {
        converged = true;
        break;
      }
      throw NumericalError("Laplace line search failed (relative gradient " +
                           std::to_string(out.gradient_norm) + ")");
    }
    out.objective_history.push_back(f);
  }
  if (!converged)
    throw NumericalError("Laplace iterations did not converge in " + std::to_string(options.max_iter) +
                         " steps (relative gradient " + std::to_string(out.gradient_norm) + ")");
  out.iterations = iter;
  h.makeCompressed();
  out.precision = std::move(h);

  double q_log_det = 0.0;
  double aqa = 0.0;
  if (p.q_log_det && (!p.constraint || p.q_constraint_variance)) {
    q_log_det = *p.q_log_det;
    if (p.constraint) aqa = *p.q_constraint_variance;
  } else {
    const SparseCholesky qchol(p.q);
    q_log_det = qchol.log_det();
    if (p.constraint) aqa = p.constraint->a.dot(qchol.solve(p.constraint->a));
  }

  const Eigen::VectorXd dz = z - p.mu;
  double ln = objective.log_likelihood(eta) + 0.5 * q_log_det - 0.5 * dz.dot(p.q * dz) - 0.5 * chol.log_det();
  if (p.constraint) {
    const Eigen::VectorXd& a = p.constraint->a;
    const double aha = a.dot(chol.solve(a));
    const double am = a.dot(p.mu);
    ln += 0.5 * std::log(aqa) - 0.5 * std::log(aha) + am * am / (2.0 * aqa);
  }
  if (!std::isfinite(ln)) throw NumericalError("Laplace log normaliser is not finite");
  out.log_normalizer = ln;
  out.mode = std::move(z);
  return out;
}

GaussianApprox laplace_inner(const Eigen::VectorXd& counts, const Eigen::VectorXd& offsets,
                             const SparseMatrix& prior_precision, const Eigen::VectorXd& prior_mean,
                             const LaplaceOptions& options) {
  LaplaceProblem p;
  const Eigen::Index n = prior_precision.rows();
  p.a.resize(n, n);
  p.a.setIdentity();
  p.y = counts;
  p.offset = offsets;
  p.q = prior_precision;
  p.mu = prior_mean;
  return laplace_inner(p, options);
}

// ---------------------------------------------------------------------------
// Model and hyperparameter posterior

double ThetaPrior::log_density(const Hyper& h) const {
  const double d1 = h.log_tau - mean_log_tau;
  const double d2 = h.log_kappa - mean_log_kappa;
  return -0.5 * (d1 * d1 / var_log_tau + d2 * d2 / var_log_kappa) -
         0.5 * std::log(4.0 * std::numbers::pi * std::numbers::pi * var_log_tau * var_log_kappa);
}

GridSpec GridSpec::rectangular(std::span<const double> log_tau, std::span<const double> log_kappa) {
  GridSpec g;
  g.kind = Kind::Explicit;
  for (double t : log_tau)
    for (double k : log_kappa) g.points.push_back(Hyper{t, k});
  return g;
}

LgcpModel::LgcpModel(SurveyMesh mesh, DesignInfo design, std::span<const std::size_t> obs_nodes,
                     std::span<const std::int64_t> counts, std::span<const double> exposures)
    : mesh_(std::move(mesh)), design_(std::move(design)), spde_(mesh_.fem) {
  const std::size_t m = obs_nodes.size();
  if (counts.size() != m || exposures.size() != m) throw InputError("observation arrays disagree in length");
  const std::size_t nn = num_nodes();
  if (static_cast<std::size_t>(design_.node_values.rows()) != nn)
    throw InputError("design does not match the mesh");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(m * (1 + design_.size()));
  y_.resize(static_cast<Eigen::Index>(m));
  exposure_.resize(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t node = obs_nodes[i];
    if (node >= nn) throw InputError("observation node out of range");
    const auto r = static_cast<int>(i);
    trip.emplace_back(r, static_cast<int>(node), 1.0);
    for (std::size_t c = 0; c < design_.size(); ++c)
      trip.emplace_back(r, static_cast<int>(nn + c),
                        design_.node_values(static_cast<Eigen::Index>(node), static_cast<Eigen::Index>(c)));
    y_[static_cast<Eigen::Index>(i)] = static_cast<double>(counts[i]);
    exposure_[static_cast<Eigen::Index>(i)] = exposures[i];
  }
  obs_.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(dim()));
  obs_.setFromTriplets(trip.begin(), trip.end());
  constraint_.a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
  for (std::size_t j = 0; j < nn; ++j) constraint_.a[static_cast<Eigen::Index>(j)] = mesh_.dual.weights[j];

  // Every block embedded on one pattern (field block plus fixed-effect diagonal).
  const auto d = static_cast<Eigen::Index>(dim());
  const auto embed = [&](const SparseMatrix& field, double fixed) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(field.nonZeros()) + design_.size());
    for (Eigen::Index k = 0; k < field.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(field, k); it; ++it)
        t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (std::size_t c = 0; c < design_.size(); ++c) {
      const auto i = static_cast<int>(nn + c);
      t.emplace_back(i, i, fixed * design_.prior_precision[static_cast<Eigen::Index>(c)]);
    }
    SparseMatrix m(d, d);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
  };
  const auto values = [](const SparseMatrix& m) {
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(m.valuePtr(), m.nonZeros()));
  };
  q_pattern_ = embed(spde_.c(), 1.0);
  q_c_ = values(embed(spde_.c(), 0.0));
  q_g_ = values(embed(spde_.g(), 0.0));
  q_gcg_ = values(embed(spde_.gcg(), 0.0));
  q_fixed_ = values(embed(spde_.c() * 0.0, 1.0));

  const SparseMatrix h = prior_precision(Hyper{}) + SparseMatrix(obs_.transpose() * obs_);
  auto symbolic = std::make_shared<SparseCholesky>();
  symbolic->analyze(h);
  h_symbolic_ = std::move(symbolic);
}

SparseMatrix LgcpModel::prior_precision(const Hyper& hyper) const {
  const double t2 = std::exp(2.0 * hyper.log_tau);
  const double k2 = std::exp(2.0 * hyper.log_kappa);
  SparseMatrix q = q_pattern_;
  Eigen::Map<Eigen::VectorXd>(q.valuePtr(), q.nonZeros()) =
      (t2 * k2 * k2) * q_c_ + (2.0 * t2 * k2) * q_g_ + t2 * q_gcg_ + q_fixed_;
  return q;
}

LaplaceProblem LgcpModel::problem(const Hyper& hyper) const {
  LaplaceProblem p;
  p.a = obs_;
  p.y = y_;
  p.offset = exposure_;
  p.q = prior_precision(hyper);
  p.symbolic = h_symbolic_;
  p.mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
  p.constraint = constraint_;
  // Fixed effects are a priori independent of the field, so the prior
  // determinant and constraint variance split over the two blocks.
  const auto nn = static_cast<Eigen::Index>(num_nodes());
  const Eigen::VectorXd& pp = design_.prior_precision;
  if ((pp.array() > 0.0).all()) {
    const SpdeFactor factor(spde_, hyper);
    const Eigen::VectorXd& a = constraint_.a;
    const Eigen::VectorXd af = a.head(nn);
    const Eigen::VectorXd ab = a.tail(pp.size());
    p.q_log_det = factor.log_det() + pp.array().log().sum();
    p.q_constraint_variance = af.dot(factor.solve(af)) + (ab.array().square() / pp.array()).sum();
  }
  return p;
}

SparseCholesky LgcpModel::factor(const SparseMatrix& precision) const {
  SparseCholesky chol;
  if (precision.rows() == h_symbolic_->size() && precision.nonZeros() == h_symbolic_->nonzeros())
    chol.analyze_like(*h_symbolic_);
  else
    chol.analyze(precision);
  chol.factorize(precision);
  return chol;
}

SparseMatrix LgcpModel::predictor(std::span<const Point> points) const {
  const SparseMatrix proj = projector(mesh_.mesh, points);
  const Eigen::MatrixXd x = design_.rows(points);
  const auto nn = static_cast<int>(num_nodes());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(proj.nonZeros()) + points.size() * design_.size());
  for (Eigen::Index k = 0; k < proj.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(proj, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      trip.emplace_back(static_cast<int>(i), nn + static_cast<int>(c), x(i, c));
  SparseMatrix b(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(dim()));
  b.setFromTriplets(trip.begin(), trip.end());
  return b;
}

std::shared_ptr<const LgcpModel> make_lgcp_model(const Survey& survey, const CovariateRaster* raster,
                                                 const LgcpConfig& config) {
  if (survey.size() == 0) throw InputError("survey has no photos");
  const std::string species = resolve_species(survey, config.species);
  const std::vector<std::int64_t> counts = survey.counts(species);
  std::vector<double> exposures;
  exposures.reserve(survey.size());
  for (const Photo& ph : survey.photos()) exposures.push_back(ph.area());
  SurveyMesh mesh = build_survey_mesh(survey, config.mesh);
  DesignInfo design = make_design(mesh.mesh, config.covariates, raster, config.intercept_variance,
                                  config.beta_variance);
  const std::vector<std::size_t> nodes = mesh.photo_nodes;
  return std::make_shared<const LgcpModel>(std::move(mesh), std::move(design), nodes, counts, exposures);
}

ThetaEvaluation evaluate_theta(const LgcpModel& model, const Hyper& hyper, const ThetaPrior& prior,
                               const LaplaceOptions& options, const Eigen::VectorXd* start) {
  try {
    GaussianApprox g = laplace_inner(model.problem(hyper), options, start);
    const double ld = g.log_normalizer + prior.log_density(hyper);
    return {ld, std::move(g)};
  } catch (const NumericalError&) {
    return {kNegInf, std::nullopt};
  }
}

std::vector<double> normalize_log_weights(std::span<const double> log_densities) {
  double mx = kNegInf;
  for (double l : log_densities)
    if (l > mx) mx = l;
  std::vector<double> w(log_densities.size(), 0.0);
  if (!std::isfinite(mx)) return w;
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::isfinite(log_densities[i]) ? std::exp(log_densities[i] - mx) : 0.0;
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

namespace {

/// Serial evaluator that remembers the best mode seen so far for warm starts.
class ThetaSearch {
 public:
  ThetaSearch(const LgcpModel& model, const ThetaPrior& prior, const LaplaceOptions& options)
      : model_(model), prior_(prior), options_(options) {}

  double operator()(const Hyper& h) {
    ThetaEvaluation e = evaluate_theta(model_, h, prior_, options_, warm_ ? &*warm_ : nullptr);
    if (e.approx && e.log_density > best_) {
      best_ = e.log_density;
      warm_ = e.approx->mode;
    }
    return e.log_density;
  }

  const Eigen::VectorXd* warm() const { return warm_ ? &*warm_ : nullptr; }

 private:
  const LgcpModel& model_;
  const ThetaPrior& prior_;
  const LaplaceOptions& options_;
  double best_ = kNegInf;
  std::optional<Eigen::VectorXd> warm_;
};

/// Maximises f on [lo, hi] by golden-section search.
template <class F>
std::pair<double, double> golden_max(F&& f, double lo, double hi, double tol) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? std::pair{c, fc} : std::pair{d, fd};
}

}  // namespace

LgcpFit hyper_posterior(std::shared_ptr<const LgcpModel> model, const GridSpec& spec,
                        const ThetaPrior& prior, const LaplaceOptions& options) {
  if (!model) throw InputError("no model");
  LgcpFit fit;
  fit.model = model;
  std::vector<Hyper> points;
  std::optional<Eigen::VectorXd> warm;

  if (spec.kind == GridSpec::Kind::Explicit) {
    if (spec.points.empty()) throw InputError("explicit theta grid is empty");
    points = spec.points;
  } else {
    if (spec.points_per_axis < 1) throw InputError("points_per_axis must be positive");
    ThetaSearch search(*model, prior, options);
    const Hyper start = spec.start.value_or(Hyper{prior.mean_log_tau, prior.mean_log_kappa});
    Eigen::Vector2d cur(start.log_tau, start.log_kappa);
    auto at = [](const Eigen::Vector2d& v) { return Hyper{v[0], v[1]}; };
    double fcur = search(at(cur));

    // Golden-section along cur + t d (d a unit vector) on [-half, half],
    // shifting the bracket while the optimum sits on an edge. Returns |t|.
    const double tol = spec.search_tol;
    auto line_search = [&](const Eigen::Vector2d& d, double half) {
      double centre = 0.0;
      double best_t = 0.0;
      for (int shift = 0; shift < 8; ++shift) {
        const auto [arg, val] = golden_max([&](double t) { return search(at(cur + t * d)); }, centre - half,
                                           centre + half, tol);
        if (val >= fcur) {
          best_t = arg;
          fcur = val;
        }
        const bool at_edge = std::abs(arg - (centre - half)) < 2.0 * tol || std::abs(arg - (centre + half)) < 2.0 * tol;
        if (!at_edge) break;
        centre = arg;
        half = std::min(3.0, 2.0 * half);
      }
      cur += best_t * d;
      return std::abs(best_t);
    };

    // Gradient and Hessian by central differences at cur (8 evaluations).
    auto derivatives = [&](double step) {
      auto f = [&](double d1, double d2) { return search(Hyper{cur[0] + d1, cur[1] + d2}); };
      const double f0 = fcur;
      const double xp = f(step, 0), xm = f(-step, 0), yp = f(0, step), ym = f(0, -step);
      Eigen::Vector2d g((xp - xm) / (2.0 * step), (yp - ym) / (2.0 * step));
      Eigen::Matrix2d hm;
      hm(0, 0) = (xp - 2.0 * f0 + xm) / (step * step);
      hm(1, 1) = (yp - 2.0 * f0 + ym) / (step * step);
      hm(0, 1) = hm(1, 0) =
          (f(step, step) - f(step, -step) - f(-step, step) + f(-step, -step)) / (4.0 * step * step);
      return std::pair{g, hm};
    };
    const double min_precision = 1.0 / std::max(prior.var_log_tau, prior.var_log_kappa);
    // Eigenvectors of the negative Hessian and the matching sds, with the
    // precision floored at the prior's so flat or convex directions stay finite.
    auto decompose = [&](const Eigen::Matrix2d& hm) {
      Eigen::Matrix2d neg = -hm;
      if (!neg.allFinite()) neg = Eigen::Matrix2d::Identity() * min_precision;
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(neg);
      Eigen::Vector2d ev = es.eigenvalues().cwiseMax(min_precision);
      return std::pair{Eigen::Matrix2d(es.eigenvectors()), Eigen::Vector2d(ev.cwiseInverse().cwiseSqrt())};
    };

    // One sweep of golden-section searches along theta1 and along
    // theta2 - theta1 (log marginal sd roughly fixed) reaches the basin of the
    // mode from the prior mean.
    const Eigen::Vector2d axes[2] = {Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 1.0).normalized()};
    for (const Eigen::Vector2d& d : axes) line_search(d, 3.0);
    if (!std::isfinite(fcur)) throw NumericalError("theta mode search failed: every evaluation diverged");

    // Newton steps on the central-difference derivatives follow the curved
    // ridge of p(theta | y) in a few steps. Steps are capped at length 1 and
    // halved until the log density does not drop.
    const double fd_step = 0.1;
    Eigen::Vector2d grad;
    Eigen::Matrix2d hess;
    std::tie(grad, hess) = derivatives(fd_step);
    for (int it = 0; it < spec.max_sweeps; ++it) {
      const auto [vecs, sds] = decompose(hess);
      Eigen::Vector2d step = vecs * sds.cwiseAbs2().asDiagonal() * vecs.transpose() * grad;
      if (step.norm() > 1.0) step /= step.norm();
      if (step.norm() < tol || 0.5 * grad.dot(step) < 1e-3) break;
      bool moved = false;
      for (int halving = 0; halving < 6 && !moved; ++halving, step *= 0.5) {
        const double f = search(at(cur + step));
        if (f >= fcur) {
          cur += step;
          fcur = f;
          moved = true;
        }
      }
      if (!moved) break;
      std::tie(grad, hess) = derivatives(fd_step);
    }
    fit.theta_mode = at(cur);

    // Curvature for the grid; a smaller difference step when the posterior is narrow.
    auto vs = decompose(hess);
    if (vs.second.minCoeff() < 0.2) {
      const double small = std::clamp(0.5 * vs.second.minCoeff(), 0.01, fd_step);
      vs = decompose(derivatives(small).second);
    }
    const auto& [vecs, sds] = vs;

    // Grid along the principal axes at the mode.
    const int np = spec.points_per_axis;
    for (int i = 0; i < np; ++i) {
      for (int j = 0; j < np; ++j) {
        const double u = np == 1 ? 0.0 : -spec.half_width_sd + 2.0 * spec.half_width_sd * i / (np - 1);
        const double v = np == 1 ? 0.0 : -spec.half_width_sd + 2.0 * spec.half_width_sd * j / (np - 1);
        const Eigen::Vector2d off = vecs.col(0) * (u * sds[0]) + vecs.col(1) * (v * sds[1]);
        points.push_back(Hyper{cur[0] + off[0], cur[1] + off[1]});
      }
    }
    if (search.warm()) warm = *search.warm();
  }

  std::vector<ThetaEvaluation> evals(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    evals[i] = evaluate_theta(*model, points[i], prior, options, warm ? &*warm : nullptr);
  });
  std::vector<double> logd(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) logd[i] = evals[i].log_density;
  const std::vector<double> w = normalize_log_weights(logd);
  if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; }))
    throw NumericalError("all theta grid points diverged");

  fit.grid.resize(points.size());
  fit.approx.resize(points.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    fit.grid[i] = GridPoint{points[i], logd[i], w[i]};
    fit.approx[i] = std::move(evals[i].approx);
    if (logd[i] > logd[best]) best = i;
  }
  if (spec.kind == GridSpec::Kind::Explicit) fit.theta_mode = points[best];

  // Fixed-effect and theta summaries.
  const std::size_t p = model->design().size();
  const auto nn = static_cast<Eigen::Index>(model->num_nodes());
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  std::vector<Eigen::VectorXd> means(points.size()), vars(points.size());
  parallel_for(points.size(), [&](std::size_t g) {
    if (!fit.approx[g] || fit.grid[g].weight == 0.0) return;
    const GaussianApprox& ap = *fit.approx[g];
    const SparseCholesky chol = model->factor(ap.precision);
    const Eigen::VectorXd& a = model->constraint().a;
    const Eigen::VectorXd ha = chol.solve(a);
    const double aha = a.dot(ha);
    means[g] = ap.mode.tail(static_cast<Eigen::Index>(p));
    vars[g].resize(static_cast<Eigen::Index>(p));
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(ap.mode.size(), static_cast<Eigen::Index>(p));
    for (std::size_t c = 0; c < p; ++c) e(nn + static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) = 1.0;
    const Eigen::MatrixXd he = chol.solve(e);
    for (std::size_t c = 0; c < p; ++c) {
      const Eigen::Index j = nn + static_cast<Eigen::Index>(c);
      const double hjj = he(j, static_cast<Eigen::Index>(c));
      vars[g][static_cast<Eigen::Index>(c)] = std::max(0.0, hjj - ha[j] * ha[j] / aha);
    }
  });
  double t1 = 0.0, t2 = 0.0;
  for (std::size_t g = 0; g < points.size(); ++g) {
    const double wg = fit.grid[g].weight;
    t1 += wg * points[g].log_tau;
    t2 += wg * points[g].log_kappa;
    if (wg == 0.0 || means[g].size() == 0) continue;
    m1 += wg * means[g];
    m2 += wg * (vars[g] + means[g].cwiseAbs2());
  }
  fit.fixed_mean = m1;
  fit.fixed_sd = (m2 - m1.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  fit.theta_mean = Hyper{t1, t2};
  return fit;
}

LgcpFit fit_lgcp(const Survey& survey, const CovariateRaster* raster, const LgcpConfig& config) {
  return hyper_posterior(make_lgcp_model(survey, raster, config), config.grid, config.theta_prior,
                         config.laplace);
}

// ---------------------------------------------------------------------------
// Posterior sampling

namespace {

std::size_t draw_grid_point(Engine& engine, const std::vector<double>& cumulative) {
  boost::random::uniform_01<double> unif;
  const double u = unif(engine) * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  std::size_t g = static_cast<std::size_t>(it - cumulative.begin());
  if (g >= cumulative.size()) g = cumulative.size() - 1;
  // Skip zero-weight points that share a cumulative value with the previous one.
  while (g > 0 && cumulative[g] == cumulative[g - 1]) --g;
  return g;
}

}  // namespace

void for_each_latent_sample(const LgcpFit& fit, std::size_t k,
                            const std::function<void(std::size_t, const Eigen::VectorXd&)>& fn,
                            std::uint64_t seed) {
  if (fit.grid.empty()) throw InputError("fit has an empty theta grid");
  std::vector<double> cumulative(fit.grid.size());
  double acc = 0.0;
  for (std::size_t g = 0; g < fit.grid.size(); ++g) {
    acc += fit.approx[g] ? fit.grid[g].weight : 0.0;
    cumulative[g] = acc;
  }
  if (!(acc > 0.0)) throw InputError("fit has no usable grid points");

  std::vector<std::vector<std::size_t>> groups(fit.grid.size());
  for (std::size_t i = 0; i < k; ++i) {
    Engine engine = make_engine(seed, i);
    groups[draw_grid_point(engine, cumulative)].push_back(i);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) continue;
    const GaussianApprox& ap = *fit.approx[g];
    const SparseCholesky chol = fit.model->factor(ap.precision);
    const ConstraintCorrector corrector(chol, fit.model->constraint());
    const auto& members = groups[g];
    parallel_for(members.size(), [&](std::size_t m) {
      const std::size_t i = members[m];
      Engine engine = make_engine(seed, i);
      draw_grid_point(engine, cumulative);
      Eigen::VectorXd z = ap.mode + chol.apply_inverse_sqrt_t(standard_normal(ap.mode.size(), engine));
      corrector.apply(z);
      fn(i, z);
    });
  }
}

Eigen::MatrixXd sample_latent(const LgcpFit& fit, std::size_t k, std::uint64_t seed) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(fit.model->dim()), static_cast<Eigen::Index>(k));
  for_each_latent_sample(
      fit, k, [&](std::size_t i, const Eigen::VectorXd& z) { out.col(static_cast<Eigen::Index>(i)) = z; },
      seed);
  return out;
}

void write_fit_summary(std::ostream& out, const LgcpFit& fit) {
  out << std::setprecision(10);
  out << "model lgcp\n";
  out << "nodes " << fit.model->num_nodes() << "\n";
  out << "theta_mode " << fit.theta_mode.log_tau << " " << fit.theta_mode.log_kappa << "\n";
  out << "theta_mean " << fit.theta_mean.log_tau << " " << fit.theta_mean.log_kappa << "\n";
  out << "kappa " << fit.theta_mean.kappa() << "\n";
  out << "sigma2 " << fit.theta_mean.sigma2() << "\n";
  out << "range_km " << fit.range() << "\n";
  out << "GRID theta1 theta2 weight log_density\n";
  for (const GridPoint& g : fit.grid)
    out << g.theta.log_tau << " " << g.theta.log_kappa << " " << g.weight << " " << g.log_density << "\n";
  out << "FIXED name mean sd\n";
  const auto& cols = fit.model->design().columns;
  for (std::size_t c = 0; c < cols.size(); ++c)
    out << to_string(cols[c]) << " " << fit.fixed_mean[static_cast<Eigen::Index>(c)] << " "
        << fit.fixed_sd[static_cast<Eigen::Index>(c)] << "\n";
}

}  // namespace abundance
