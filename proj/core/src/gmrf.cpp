#include "abundance/gmrf.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/CholmodSupport>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/random/normal_distribution.hpp>

#include "abundance/error.hpp"
#include "abundance/parallel.hpp"

namespace abundance {

double Hyper::tau() const { return std::exp(log_tau); }
double Hyper::kappa() const { return std::exp(log_kappa); }

double Hyper::sigma2() const {
  return 1.0 / (4.0 * std::numbers::pi * std::exp(2.0 * log_kappa + 2.0 * log_tau));
}

double Hyper::range() const { return std::sqrt(8.0) / kappa(); }

Hyper Hyper::from_kappa_sigma2(double kappa, double sigma2) {
  if (!(kappa > 0.0) || !(sigma2 > 0.0)) throw InputError("kappa and sigma2 must be positive");
  Hyper h;
  h.log_kappa = std::log(kappa);
  h.log_tau = -0.5 * std::log(4.0 * std::numbers::pi * sigma2) - h.log_kappa;
  return h;
}

double matern_cov(double r, double sigma2, double kappa, double nu) {
  if (r < 0.0) r = -r;
  if (r == 0.0) return sigma2;
  const double x = kappa * r;
  if (x > 700.0) return 0.0;
  const double scale = sigma2 / (std::pow(2.0, nu - 1.0) * boost::math::tgamma(nu));
  return scale * std::pow(x, nu) * boost::math::cyl_bessel_k(nu, x);
}

SpdeOperator::SpdeOperator(const FemMatrices& fem) {
  const Eigen::Index n = fem.c.size();
  if (fem.g.rows() != n || fem.g.cols() != n) throw InputError("FEM matrices have inconsistent sizes");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(fem.c[i] > 0.0)) throw InputError("mass matrix has a non-positive entry at node " + std::to_string(i));
  c_.resize(n, n);
  c_.reserve(Eigen::VectorXi::Ones(n));
  for (Eigen::Index i = 0; i < n; ++i) c_.insert(i, i) = fem.c[i];
  c_.makeCompressed();
  mass_ = fem.c;
  stiff_ = fem.g;
  for (Eigen::Index i = 0; i < n; ++i) stiff_.coeffRef(i, i) += 0.0;  // diagonal present for kappa^2 C
  stiff_.makeCompressed();
  {
    auto symbolic = std::make_shared<SparseCholesky>();
    symbolic->analyze(stiff_);
    k_symbolic_ = std::move(symbolic);
  }
  g_ = fem.g;
  const Eigen::VectorXd cinv = fem.c.cwiseInverse();
  gcg_ = g_ * cinv.asDiagonal() * g_;
  // Put all three on the union pattern so the sum below keeps a stable layout.
  SparseMatrix zero = (c_ + g_ + gcg_) * 0.0;
  c_ = c_ + zero;
  g_ = g_ + zero;
  gcg_ = gcg_ + zero;
}

SparseMatrix SpdeOperator::precision(const Hyper& hyper) const {
  const double t2 = std::exp(2.0 * hyper.log_tau);
  const double k2 = std::exp(2.0 * hyper.log_kappa);
  SparseMatrix q = (t2 * k2 * k2) * c_ + (2.0 * t2 * k2) * g_ + t2 * gcg_;
  return q;
}

SpdeFactor::SpdeFactor(const SpdeOperator& op, const Hyper& hyper) : mass_(op.mass()) {
  const double k2 = std::exp(2.0 * hyper.log_kappa);
  tau2_ = std::exp(2.0 * hyper.log_tau);
  SparseMatrix k = op.stiffness();
  for (Eigen::Index i = 0; i < k.outerSize(); ++i) k.coeffRef(i, i) += k2 * mass_[i];
  k_.analyze_like(op.k_symbolic());
  k_.factorize(k);
  const auto n = static_cast<double>(mass_.size());
  log_det_ = n * std::log(tau2_) + 2.0 * k_.log_det() - mass_.array().log().sum();
}

Eigen::VectorXd SpdeFactor::solve(const Eigen::VectorXd& b) const {
  const Eigen::VectorXd u = k_.solve(b);
  return k_.solve(Eigen::VectorXd(mass_.cwiseProduct(u))) / tau2_;
}

SparseMatrix assemble_precision(const FemMatrices& fem, const Hyper& hyper) {
  return SpdeOperator(fem).precision(hyper);
}

struct SparseCholesky::Impl {
  // Exposes the CHOLMOD factor for the triangular solves used in sampling.
  class Solver : public Eigen::CholmodSupernodalLLT<SparseMatrix, Eigen::Lower> {
   public:
    Solver() { cholmod().print = 0; }

    Eigen::VectorXd solve_system(int system, const Eigen::VectorXd& b) const {
      Eigen::VectorXd in = b;
      cholmod_dense view = Eigen::viewAsCholmod(in);
      cholmod_common& common = const_cast<Solver*>(this)->cholmod();
      cholmod_dense* x = cholmod_solve(system, m_cholmodFactor, &view, &common);
      if (!x) throw NumericalError("triangular solve failed");
      Eigen::VectorXd out = Eigen::Map<Eigen::VectorXd>(static_cast<double*>(x->x), b.size());
      cholmod_free_dense(&x, &common);
      return out;
    }

    void adopt_analysis(const Solver& other) {
      cholmod_common& common = cholmod();
      if (m_cholmodFactor) cholmod_free_factor(&m_cholmodFactor, &common);
      m_cholmodFactor = cholmod_copy_factor(other.m_cholmodFactor, &common);
      if (!m_cholmodFactor) throw NumericalError("could not copy the symbolic factorisation");
      m_isInitialized = true;
      m_info = Eigen::Success;
      m_analysisIsOk = true;
      m_factorizationIsOk = false;
    }

    double log_det_factor() const {
      // Sum of log diagonal entries of the supernodal L.
      const cholmod_factor* f = m_cholmodFactor;
      const auto* x = static_cast<const double*>(f->x);
      const auto* super = static_cast<const int*>(f->super);
      const auto* pi = static_cast<const int*>(f->pi);
      const auto* px = static_cast<const int*>(f->px);
      double ld = 0.0;
      for (std::size_t s = 0; s < f->nsuper; ++s) {
        const int ncols = super[s + 1] - super[s];
        const int nrows = pi[s + 1] - pi[s];
        for (int j = 0; j < ncols; ++j) {
          const double d = x[px[s] + j * (nrows + 1)];
          if (!(d > 0.0) || !std::isfinite(d)) throw NumericalError("Cholesky factor has a non-positive pivot");
          ld += std::log(d);
        }
      }
      return 2.0 * ld;
    }
  };
  Solver solver;
};

SparseCholesky::SparseCholesky() : impl_(std::make_unique<Impl>()) {}
SparseCholesky::SparseCholesky(const SparseMatrix& q) : impl_(std::make_unique<Impl>()) { compute(q); }
SparseCholesky::~SparseCholesky() = default;
SparseCholesky::SparseCholesky(SparseCholesky&&) noexcept = default;
SparseCholesky& SparseCholesky::operator=(SparseCholesky&&) noexcept = default;

void SparseCholesky::compute(const SparseMatrix& q) {
  analyze(q);
  factorize(q);
}

void SparseCholesky::analyze(const SparseMatrix& q) {
  if (q.rows() != q.cols()) throw InputError("Cholesky needs a square matrix");
  n_ = q.rows();
  nnz_ = q.nonZeros();
  impl_->solver.analyzePattern(q);
  analyzed_ = true;
}

void SparseCholesky::analyze_like(const SparseCholesky& other) {
  if (!other.analyzed_) throw InputError("symbolic template has not been analysed");
  n_ = other.n_;
  nnz_ = other.nnz_;
  impl_->solver.adopt_analysis(other.impl_->solver);
  analyzed_ = true;
}

void SparseCholesky::factorize(const SparseMatrix& q) {
  if (!analyzed_ || q.rows() != n_ || q.cols() != n_) analyze(q);
  double max_diag = 0.0;
  for (Eigen::Index i = 0; i < n_; ++i) max_diag = std::max(max_diag, std::abs(q.coeff(i, i)));
  if (!std::isfinite(max_diag)) throw NumericalError("precision matrix has non-finite diagonal");
  if (max_diag == 0.0) max_diag = 1.0;

  auto& solver = impl_->solver;
  jitter_ = 0.0;
  solver.setShift(0.0);
  solver.factorize(q);
  double jitter = 1e-12 * max_diag;
  while (solver.info() != Eigen::Success) {
    if (jitter > 1e-6 * max_diag)
      throw NumericalError("Cholesky factorisation failed even with diagonal jitter " +
                           std::to_string(jitter / 2.0));
    jitter_ = jitter;
    solver.setShift(jitter_);
    solver.factorize(q);
    jitter *= 2.0;
  }
  log_det_ = solver.log_det_factor();
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = impl_->solver.solve(b);
  return x;
}

Eigen::MatrixXd SparseCholesky::solve(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd x = impl_->solver.solve(b);
  return x;
}

Eigen::VectorXd SparseCholesky::apply_inverse_sqrt_t(const Eigen::VectorXd& z) const {
  // P Q P' = L L'  =>  x = P' L^-T z has covariance P' (L L')^-1 P = Q^-1.
  return impl_->solver.solve_system(CHOLMOD_Pt, impl_->solver.solve_system(CHOLMOD_Lt, z));
}

ConstraintCorrector::ConstraintCorrector(const SparseCholesky& chol, const LinearConstraint& constraint)
    : a_(constraint.a) {
  if (a_.size() != chol.size()) throw InputError("constraint vector has the wrong length");
  qinv_a_ = chol.solve(a_);
  aqa_ = a_.dot(qinv_a_);
  if (!(aqa_ > 0.0)) throw NumericalError("degenerate linear constraint");
}

void ConstraintCorrector::apply(Eigen::VectorXd& x) const {
  x -= qinv_a_ * (a_.dot(x) / aqa_);
}

Eigen::VectorXd standard_normal(Eigen::Index n, Engine& engine) {
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(engine);
  return z;
}

Eigen::MatrixXd sample_gmrf(const SparseMatrix& q, const Eigen::VectorXd& mean, std::size_t n,
                            const std::optional<LinearConstraint>& constraint, std::uint64_t seed) {
  if (mean.size() != q.rows()) throw InputError("mean has the wrong length");
  const SparseCholesky chol(q);
  std::optional<ConstraintCorrector> corrector;
  if (constraint) corrector.emplace(chol, *constraint);
  Eigen::MatrixXd out(q.rows(), static_cast<Eigen::Index>(n));
  parallel_for(n, [&](std::size_t k) {
    Engine engine = make_engine(seed, k);
    Eigen::VectorXd x = mean + chol.apply_inverse_sqrt_t(standard_normal(q.rows(), engine));
    if (corrector) corrector->apply(x);
    out.col(static_cast<Eigen::Index>(k)) = x;
  });
  return out;
}

}  // namespace abundance
