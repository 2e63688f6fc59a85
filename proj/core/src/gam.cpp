#include "abundance/gam.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "abundance/error.hpp"
#include "abundance/gmrf.hpp"
#include "abundance/parallel.hpp"
#include "abundance/random.hpp"

namespace abundance {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double tps_kernel(double r) { return r <= 0.0 ? 0.0 : r * r * std::log(r); }

ThinPlateBasis::ThinPlateBasis(std::vector<Point> knots) : knots_(std::move(knots)) {
  const auto nk = static_cast<Eigen::Index>(knots_.size());
  if (nk < 3) throw InputError("thin-plate basis needs at least 3 knots");
  for (std::size_t i = 0; i < knots_.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (distance(knots_[i], knots_[j]) < 1e-12) throw InputError("thin-plate knots must be distinct");
  Point c{0.0, 0.0};
  for (const Point& k : knots_) c = c + k;
  centre_ = (1.0 / static_cast<double>(nk)) * c;
  scale_ = 0.0;
  for (const Point& k : knots_) scale_ = std::max(scale_, distance(k, centre_));

  Eigen::MatrixXd t(nk, 3);
  for (Eigen::Index i = 0; i < nk; ++i) {
    const Point& k = knots_[static_cast<std::size_t>(i)];
    t(i, 0) = 1.0;
    t(i, 1) = (k.x - centre_.x) / scale_;
    t(i, 2) = (k.y - centre_.y) / scale_;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(t);
  rank_check.setThreshold(1e-9);
  if (rank_check.rank() < 3) throw InputError("thin-plate knots are collinear");

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(t);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(nk, nk);
  null_space_ = q.rightCols(nk - 3);

  Eigen::MatrixXd e(nk, nk);
  for (Eigen::Index i = 0; i < nk; ++i)
    for (Eigen::Index j = 0; j < nk; ++j)
      e(i, j) = tps_kernel(distance(knots_[static_cast<std::size_t>(i)], knots_[static_cast<std::size_t>(j)]) / scale_);
  penalty_ = null_space_.transpose() * e * null_space_;
  penalty_ = 0.5 * (penalty_ + penalty_.transpose()).eval();
}

Eigen::MatrixXd ThinPlateBasis::radial(std::span<const Point> points) const {
  Eigen::MatrixXd r(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(knots_.size()));
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < knots_.size(); ++j)
      r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          tps_kernel(distance(points[i], knots_[j]) / scale_);
  return r;
}

Eigen::MatrixXd ThinPlateBasis::evaluate(std::span<const Point> points) const {
  return radial(points) * null_space_;
}

BasisMatrices build_basis(std::span<const Point> knots, std::span<const Point> points) {
  const ThinPlateBasis basis(std::vector<Point>(knots.begin(), knots.end()));
  BasisMatrices out;
  out.radial = basis.radial(points);
  const Eigen::MatrixXd s = basis.evaluate(points);
  const auto n = static_cast<Eigen::Index>(points.size());
  out.x.resize(n, 3 + s.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.x(i, 0) = 1.0;
    out.x(i, 1) = points[static_cast<std::size_t>(i)].x;
    out.x(i, 2) = points[static_cast<std::size_t>(i)].y;
  }
  out.x.rightCols(s.cols()) = s;
  out.penalty = Eigen::MatrixXd::Zero(out.x.cols(), out.x.cols());
  out.penalty.bottomRightCorner(s.cols(), s.cols()) = basis.penalty();
  return out;
}

std::vector<Point> farthest_point_knots(std::span<const Point> points, std::size_t n) {
  std::vector<Point> unique;
  for (const Point& p : points) {
    bool dup = false;
    for (const Point& u : unique)
      if (distance(p, u) < 1e-12) {
        dup = true;
        break;
      }
    if (!dup) unique.push_back(p);
  }
  if (unique.size() <= n) return unique;
  Point c{0.0, 0.0};
  for (const Point& p : unique) c = c + p;
  c = (1.0 / static_cast<double>(unique.size())) * c;
  std::size_t first = 0;
  for (std::size_t i = 1; i < unique.size(); ++i)
    if (distance(unique[i], c) < distance(unique[first], c)) first = i;
  std::vector<Point> knots{unique[first]};
  std::vector<double> dmin(unique.size());
  for (std::size_t i = 0; i < unique.size(); ++i) dmin[i] = distance(unique[i], unique[first]);
  while (knots.size() < n) {
    const std::size_t next = static_cast<std::size_t>(std::max_element(dmin.begin(), dmin.end()) - dmin.begin());
    knots.push_back(unique[next]);
    for (std::size_t i = 0; i < unique.size(); ++i) dmin[i] = std::min(dmin[i], distance(unique[i], unique[next]));
  }
  return knots;
}

std::string to_string(GamFamily f) { return f == GamFamily::Poisson ? "poisson" : "negbin"; }

double deviance(std::span<const double> y, std::span<const double> mu, GamFamily family, double tau) {
  double d = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double yi = y[i], mi = mu[i];
    const double ylog = yi > 0.0 ? yi * std::log(yi / mi) : 0.0;
    if (family == GamFamily::Poisson) {
      d += 2.0 * (ylog - (yi - mi));
    } else {
      d += 2.0 * (ylog - (yi + tau) * std::log((yi + tau) / (mi + tau)));
    }
  }
  return d;
}

namespace {

/// Solves a symmetric system after Jacobi equilibration.
class ScaledSolver {
 public:
  explicit ScaledSolver(const Eigen::MatrixXd& a) {
    d_ = a.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd s = d_.asDiagonal() * a * d_.asDiagonal();
    ldlt_.compute(s);
  }
  bool ok() const { return ldlt_.info() == Eigen::Success; }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    return d_.asDiagonal() * ldlt_.solve(d_.asDiagonal() * b);
  }
  Eigen::MatrixXd inverse() const {
    const auto n = d_.size();
    return d_.asDiagonal() * ldlt_.solve(Eigen::MatrixXd::Identity(n, n)) * d_.asDiagonal();
  }

 private:
  Eigen::VectorXd d_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

void weights(const Eigen::VectorXd& mu, GamFamily family, double tau, Eigen::VectorXd& w) {
  w.resize(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    w[i] = family == GamFamily::Poisson ? mu[i] : mu[i] / (1.0 + mu[i] / tau);
}

double penalized_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, GamFamily family,
                          double tau, double lambda, const Eigen::MatrixXd& p, const Eigen::VectorXd& coef) {
  const double d = deviance({y.data(), static_cast<std::size_t>(y.size())},
                            {mu.data(), static_cast<std::size_t>(mu.size())}, family, tau);
  const double v = d + (lambda > 0.0 ? lambda * coef.dot(p * coef) : 0.0);
  return std::isfinite(v) ? v : kInf;
}

}  // namespace

GamFit fit_pirls(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::VectorXd& offset,
                 GamFamily family, double lambda, const Eigen::MatrixXd& penalty, double tau,
                 const PirlsOptions& options) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (y.size() != n || offset.size() != n) throw InputError("PIRLS inputs disagree in length");
  if (penalty.rows() != p || penalty.cols() != p) throw InputError("penalty has the wrong size");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("smoothing parameter must be finite and >= 0");
  if (family == GamFamily::NegBin && !(tau > 0.0)) throw InputError("negative binomial shape must be positive");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(y[i]) || y[i] < 0.0) throw InputError("counts must be finite and nonnegative");
    if (!std::isfinite(offset[i])) throw InputError("offsets must be finite");
  }

  GamFit fit;
  fit.family = family;
  fit.lambda = lambda;
  fit.tau = family == GamFamily::NegBin ? tau : 0.0;

  Eigen::VectorXd mu = (y.array() + 0.1).matrix();
  Eigen::VectorXd eta = mu.array().log().matrix();
  Eigen::VectorXd coef;
  Eigen::VectorXd w;
  double pdev = kInf;
  int settled = 0;
  int it = 0;
  for (; it < options.max_iter; ++it) {
    weights(mu, family, tau, w);
    const Eigen::VectorXd z = (eta - offset).array() + ((y - mu).array() / mu.array());
    const Eigen::MatrixXd a = x.transpose() * w.asDiagonal() * x + lambda * penalty;
    const ScaledSolver solver(a);
    const Eigen::VectorXd target = solver.solve(x.transpose() * (w.asDiagonal() * z));
    if (!target.allFinite()) throw NumericalError("PIRLS update is not finite");

    Eigen::VectorXd next = target;
    Eigen::VectorXd next_mu;
    double next_pdev = kInf;
    double step = 1.0;
    for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
      next = coef.size() == 0 ? target : Eigen::VectorXd(coef + step * (target - coef));
      next_mu = ((x * next + offset).array().exp()).matrix();
      next_pdev = penalized_deviance(y, next_mu, family, tau, lambda, penalty, next);
      if (next_pdev <= pdev || coef.size() == 0) break;
    }
    if (coef.size() != 0 && !(next_pdev <= pdev)) {
      // No decrease possible: converged to rounding.
      ++settled;
      break;
    }
    if (next.cwiseAbs().maxCoeff() > 1e10 || !std::isfinite(next_pdev))
      throw NumericalError("PIRLS coefficients diverged (separation?)");
    const double change = std::abs(pdev - next_pdev);
    const bool first = coef.size() == 0;
    coef = next;
    mu = next_mu;
    eta = x * coef + offset;
    pdev = next_pdev;
    fit.deviance_history.push_back(pdev);
    if (!first && change <= options.tol * (std::abs(pdev) + 0.1)) {
      if (++settled >= 2) break;
    } else {
      settled = 0;
    }
  }
  if (settled == 0) throw NumericalError("PIRLS did not converge in " + std::to_string(options.max_iter) + " iterations");

  weights(mu, family, tau, w);
  const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
  const ScaledSolver solver(xtwx + lambda * penalty);
  fit.cov = solver.inverse();
  fit.cov = 0.5 * (fit.cov + fit.cov.transpose()).eval();
  fit.edf = (fit.cov * xtwx).trace();
  fit.coef = coef;
  fit.fitted = mu;
  fit.iterations = it + 1;
  fit.deviance = deviance({y.data(), static_cast<std::size_t>(n)}, {mu.data(), static_cast<std::size_t>(n)},
                          family, tau);
  return fit;
}

double gcv_score(const GamFit& fit, std::size_t n) {
  const double dn = static_cast<double>(n);
  const double denom = dn - fit.edf;
  if (!(denom > 1e-8)) return kInf;
  return dn * fit.deviance / (denom * denom);
}

SmoothingSelection select_smoothing(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& offset, GamFamily family,
                                    const Eigen::MatrixXd& penalty, double tau) {
  const double trp = penalty.trace();
  if (!(trp > 0.0)) throw InputError("penalty matrix is zero; nothing to select");
  Eigen::VectorXd mu = (y.array() + 0.1).matrix();
  Eigen::VectorXd w;
  weights(mu, family, tau, w);
  const double base = (x.transpose() * w.asDiagonal() * x).trace() / trp;
  const std::size_t n = static_cast<std::size_t>(y.size());

  auto score = [&](double log10_lambda) {
    try {
      const GamFit f = fit_pirls(y, x, offset, family, base * std::pow(10.0, log10_lambda), penalty, tau);
      return gcv_score(f, n);
    } catch (const NumericalError&) {
      return kInf;
    }
  };

  SmoothingSelection sel;
  std::vector<double> exps;
  for (double e = -8.0; e <= 8.0 + 1e-12; e += 0.5) exps.push_back(e);
  sel.grid_lambda.resize(exps.size());
  sel.grid_gcv.resize(exps.size());
  parallel_for(exps.size(), [&](std::size_t i) {
    sel.grid_lambda[i] = base * std::pow(10.0, exps[i]);
    sel.grid_gcv[i] = score(exps[i]);
  });
  const std::size_t best =
      static_cast<std::size_t>(std::min_element(sel.grid_gcv.begin(), sel.grid_gcv.end()) - sel.grid_gcv.begin());
  if (!std::isfinite(sel.grid_gcv[best])) throw NumericalError("GCV failed for every smoothing parameter");

  double lo = exps[best > 0 ? best - 1 : best];
  double hi = exps[best + 1 < exps.size() ? best + 1 : best];
  double best_e = exps[best], best_g = sel.grid_gcv[best];
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - r * (hi - lo), d = lo + r * (hi - lo);
  double fc = score(c), fd = score(d);
  while (hi - lo > 1e-3) {
    if (fc <= fd) {
      hi = d; d = c; fd = fc;
      c = hi - r * (hi - lo);
      fc = score(c);
    } else {
      lo = c; c = d; fc = fd;
      d = lo + r * (hi - lo);
      fd = score(d);
    }
  }
  if (fc < best_g) { best_g = fc; best_e = c; }
  if (fd < best_g) { best_g = fd; best_e = d; }
  sel.lambda = base * std::pow(10.0, best_e);
  sel.gcv = best_g;
  return sel;
}

namespace {

/// tau * dl/dtau and its derivative with respect to log tau.
std::pair<double, double> shape_score(std::span<const double> y, std::span<const double> mu, double tau) {
  double d1 = 0.0, d2 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double yi = y[i], mi = mu[i];
    double psi = 0.0, tri = 0.0;
    if (yi == std::floor(yi) && yi < 1e5) {
      for (int j = 0; j < static_cast<int>(yi); ++j) {
        const double t = 1.0 / (tau + j);
        psi += t;
        tri -= t * t;
      }
    } else {
      psi = boost::math::digamma(yi + tau) - boost::math::digamma(tau);
      tri = boost::math::trigamma(yi + tau) - boost::math::trigamma(tau);
    }
    d1 += psi - std::log1p(mi / tau) + (mi - yi) / (tau + mi);
    d2 += tri + 1.0 / tau - 1.0 / (tau + mi) - (mi - yi) / ((tau + mi) * (tau + mi));
  }
  return {tau * d1, tau * d1 + tau * tau * d2};
}

}  // namespace

double estimate_nb_shape(std::span<const double> y, std::span<const double> mu) {
  if (y.size() != mu.size() || y.empty()) throw InputError("shape estimation needs matching nonempty inputs");
  for (double m : mu)
    if (!(m > 0.0)) throw InputError("fitted means must be positive");
  // Near the Poisson limit the score is -S / (2 tau) with S = sum((y - mu)^2 - y).
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - mu[i]) * (y[i] - mu[i]) - y[i];
  if (s <= 0.0) return kShapeCap;
  const double t_lo = std::log(1e-6), t_hi = std::log(1e6);
  if (shape_score(y, mu, std::exp(t_lo)).first <= 0.0) return std::exp(t_lo);
  if (shape_score(y, mu, std::exp(t_hi)).first >= 0.0) {
    // Root lies where the direct score is unreliable; use the asymptotic form.
    return std::min(kShapeCap, std::exp(t_hi));
  }
  double mean_y = 0.0, mean_mu = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mean_y += y[i];
    mean_mu += mu[i];
  }
  mean_y /= static_cast<double>(y.size());
  mean_mu /= static_cast<double>(y.size());
  const double excess = s / static_cast<double>(y.size());
  const double guess = std::clamp(std::log(mean_mu * mean_mu / std::max(excess, 1e-12)), t_lo, t_hi);
  std::uintmax_t iters = 200;
  const double t = boost::math::tools::newton_raphson_iterate(
      [&](double lt) { return shape_score(y, mu, std::exp(lt)); }, guess, t_lo, t_hi, 45, iters);
  return std::min(kShapeCap, std::exp(t));
}

Eigen::MatrixXd sample_params(const GamFit& fit, std::size_t k, std::uint64_t seed) {
  const Eigen::Index p = fit.coef.size();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.cov);
  const Eigen::MatrixXd root =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Eigen::MatrixXd out(p, static_cast<Eigen::Index>(k));
  parallel_for(k, [&](std::size_t i) {
    Engine engine = make_engine(seed, i);
    out.col(static_cast<Eigen::Index>(i)) = fit.coef + root * standard_normal(p, engine);
  });
  return out;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd GamDesign::rows(std::span<const Point> points) const {
  const auto n = static_cast<Eigen::Index>(points.size());
  DesignInfo fixed;
  fixed.columns = covariates;
  fixed.raster = raster;
  const Eigen::MatrixXd f = fixed.rows(points);
  const Eigen::MatrixXd s = basis.evaluate(points);
  const Eigen::Index extra = (add_intercept ? 1 : 0) + (add_x ? 1 : 0) + (add_y ? 1 : 0);
  Eigen::MatrixXd out(n, f.cols() + extra + s.cols());
  out.leftCols(f.cols()) = f;
  Eigen::Index c = f.cols();
  if (add_intercept) out.col(c++).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index cc = c;
    if (add_x) out(i, cc++) = points[static_cast<std::size_t>(i)].x;
    if (add_y) out(i, cc++) = points[static_cast<std::size_t>(i)].y;
  }
  c += (add_x ? 1 : 0) + (add_y ? 1 : 0);
  out.rightCols(s.cols()) = s;
  return out;
}

std::size_t GamDesign::num_unpenalized() const {
  return covariates.size() + (add_intercept ? 1 : 0) + (add_x ? 1 : 0) + (add_y ? 1 : 0);
}

Eigen::MatrixXd GamDesign::penalty() const {
  const auto u = static_cast<Eigen::Index>(num_unpenalized());
  const Eigen::Index m = basis.size();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(u + m, u + m);
  p.bottomRightCorner(m, m) = basis.penalty();
  return p;
}

std::vector<std::string> GamDesign::column_names() const {
  std::vector<std::string> names;
  for (Covariate c : covariates) names.push_back(to_string(c));
  if (add_intercept) names.push_back("intercept");
  if (add_x) names.push_back("x");
  if (add_y) names.push_back("y");
  for (Eigen::Index j = 0; j < basis.size(); ++j) names.push_back("s" + std::to_string(j + 1));
  return names;
}

GamModelFit fit_gam(const Survey& survey, const CovariateRaster* raster, const GamConfig& config) {
  if (survey.size() == 0) throw InputError("survey has no photos");
  const std::string species = resolve_species(survey, config.species);
  const auto counts = survey.counts(species);
  std::vector<Point> centres;
  for (const Photo& p : survey.photos()) centres.push_back(p.center);

  GamModelFit model;
  GamDesign& design = model.design;
  design.covariates = config.covariates;
  const auto has = [&](Covariate c) {
    return std::find(design.covariates.begin(), design.covariates.end(), c) != design.covariates.end();
  };
  if (has(Covariate::Ice)) {
    if (!raster) throw InputError("ice covariate requested without a raster");
    design.raster = *raster;
  }
  design.add_intercept = !has(Covariate::Intercept);
  design.add_x = !has(Covariate::X);
  design.add_y = !has(Covariate::Y);
  design.basis = ThinPlateBasis(farthest_point_knots(centres, std::max<std::size_t>(config.knots, 4)));

  const Eigen::MatrixXd x = design.rows(centres);
  const Eigen::MatrixXd pen = design.penalty();
  const auto n = static_cast<Eigen::Index>(survey.size());
  Eigen::VectorXd y(n), off(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = static_cast<double>(counts[static_cast<std::size_t>(i)]);
    off[i] = std::log(survey.photo(static_cast<std::size_t>(i)).area());
  }

  auto fit_family = [&](GamFamily family, double tau) {
    double lambda;
    if (config.lambda) {
      lambda = *config.lambda;
    } else {
      model.selection = select_smoothing(y, x, off, family, pen, tau);
      lambda = model.selection->lambda;
    }
    return fit_pirls(y, x, off, family, lambda, pen, tau);
  };

  GamFit fit = fit_family(GamFamily::Poisson, 0.0);
  if (config.family == GamFamily::NegBin) {
    auto shape = [&](const GamFit& f) {
      return estimate_nb_shape({y.data(), static_cast<std::size_t>(n)},
                               {f.fitted.data(), static_cast<std::size_t>(n)});
    };
    double tau = shape(fit);
    for (int round = 0; round < config.max_shape_rounds; ++round) {
      fit = fit_family(GamFamily::NegBin, tau);
      const double next = shape(fit);
      const bool done = std::abs(std::log(next) - std::log(tau)) < 1e-6;
      tau = next;
      if (done) break;
    }
    fit = fit_family(GamFamily::NegBin, tau);
  }
  model.fit = std::move(fit);
  return model;
}

void write_gam_summary(std::ostream& out, const GamModelFit& model) {
  const GamFit& f = model.fit;
  out << std::setprecision(10);
  out << "model gam-" << (f.family == GamFamily::Poisson ? "po" : "nb") << "\n";
  out << "edf " << f.edf << "\n";
  out << "lambda " << f.lambda << "\n";
  if (f.family == GamFamily::NegBin) out << "tau " << f.tau << "\n";
  out << "deviance " << f.deviance << "\n";
  out << "knots " << model.design.basis.knots().size() << "\n";
  out << "COEF name estimate se\n";
  const auto names = model.design.column_names();
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out << names[j] << " " << f.coef[jj] << " " << std::sqrt(std::max(0.0, f.cov(jj, jj))) << "\n";
  }
}

}  // namespace abundance
