#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "abundance/mesh.hpp"
#include "abundance/random.hpp"

namespace abundance {

/// SPDE hyperparameters on the log scale: theta1 = log(tau), theta2 = log(kappa).
struct Hyper {
  double log_tau = 0.0;
  double log_kappa = 0.0;

  double tau() const;
  double kappa() const;
  /// Marginal variance 1 / (4 pi kappa^2 tau^2) of the alpha = 2 field.
  double sigma2() const;
  /// Distance at which the nu = 1 Matern correlation is about 0.13.
  double range() const;

  static Hyper from_kappa_sigma2(double kappa, double sigma2);
};

/// Matern covariance sigma2 / (2^(nu-1) Gamma(nu)) (kappa r)^nu K_nu(kappa r).
double matern_cov(double r, double sigma2, double kappa, double nu);

/// Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^-1 G) with lumped (diagonal) C.
SparseMatrix assemble_precision(const FemMatrices& fem, const Hyper& hyper);

class SparseCholesky;

/// Precomputes the three SPDE building blocks so precision assembly for a new
/// hyperparameter is a linear combination on a shared sparsity pattern.
class SpdeOperator {
 public:
  explicit SpdeOperator(const FemMatrices& fem);
  SparseMatrix precision(const Hyper& hyper) const;
  Eigen::Index size() const { return c_.rows(); }
  /// Lumped mass diagonal and stiffness matrix on its own pattern.
  const Eigen::VectorXd& mass() const { return mass_; }
  const SparseMatrix& stiffness() const { return stiff_; }
  /// C, G and G C^-1 G on their shared (union) pattern.
  const SparseMatrix& c() const { return c_; }
  const SparseMatrix& g() const { return g_; }
  const SparseMatrix& gcg() const { return gcg_; }
  /// Symbolic analysis of kappa^2 C + G, shared by every SpdeFactor.
  const SparseCholesky& k_symbolic() const { return *k_symbolic_; }

 private:
  Eigen::VectorXd mass_;
  SparseMatrix stiff_;
  std::shared_ptr<const SparseCholesky> k_symbolic_;
  SparseMatrix c_;    // diagonal
  SparseMatrix g_;
  SparseMatrix gcg_;  // G C^-1 G
};

/// Linear constraint a' x = 0.
struct LinearConstraint {
  Eigen::VectorXd a;
};

/// Sparse Cholesky factorisation P Q P' = L L' (CHOLMOD, supernodal).
/// If Q is numerically semidefinite, a diagonal jitter of 1e-12 * max|diag|
/// is added and doubled until the factorisation succeeds or the jitter
/// exceeds 1e-6 * max|diag|, at which point NumericalError is thrown.
class SparseCholesky {
 public:
  SparseCholesky();
  explicit SparseCholesky(const SparseMatrix& q);
  ~SparseCholesky();
  SparseCholesky(SparseCholesky&&) noexcept;
  SparseCholesky& operator=(SparseCholesky&&) noexcept;
  SparseCholesky(const SparseCholesky&) = delete;
  SparseCholesky& operator=(const SparseCholesky&) = delete;

  /// Symbolic analysis (fill-reducing ordering) followed by factorize().
  void compute(const SparseMatrix& q);
  /// Symbolic analysis only. Later factorize() calls must use the same pattern.
  void analyze(const SparseMatrix& q);
  /// Numeric factorisation reusing the last analysis.
  void factorize(const SparseMatrix& q);
  /// Adopts the symbolic analysis of `other`; the matrices passed to
  /// factorize() must then have the pattern `other` was analysed with.
  void analyze_like(const SparseCholesky& other);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  /// log det of the factorised matrix (including any jitter).
  double log_det() const { return log_det_; }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return n_; }
  /// Stored entries of the analysed matrix.
  Eigen::Index nonzeros() const { return nnz_; }
  /// x = P' L^-T z; Cov(x) = Q^-1 when z ~ N(0, I).
  Eigen::VectorXd apply_inverse_sqrt_t(const Eigen::VectorXd& z) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double log_det_ = 0.0;
  double jitter_ = 0.0;
  Eigen::Index n_ = 0;
  Eigen::Index nnz_ = 0;
  bool analyzed_ = false;
};

/// Q(hyper) = tau^2 K C^-1 K with K = kappa^2 C + G, so log det Q and Q^-1 b
/// follow from a Cholesky factor of the much sparser K.
class SpdeFactor {
 public:
  SpdeFactor(const SpdeOperator& op, const Hyper& hyper);
  double log_det() const { return log_det_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

 private:
  SparseCholesky k_;
  Eigen::VectorXd mass_;
  double tau2_ = 1.0;
  double log_det_ = 0.0;
};

/// Corrects x so that a'x = 0 by conditioning on the constraint
/// (kriging): x <- x - Q^-1 a (a' Q^-1 a)^-1 a' x.
class ConstraintCorrector {
 public:
  ConstraintCorrector(const SparseCholesky& chol, const LinearConstraint& constraint);
  void apply(Eigen::VectorXd& x) const;
  /// a' Q^-1 a.
  double variance() const { return aqa_; }

 private:
  Eigen::VectorXd a_;
  Eigen::VectorXd qinv_a_;
  double aqa_ = 0.0;
};

/// Standard normal vector from the given engine.
Eigen::VectorXd standard_normal(Eigen::Index n, Engine& engine);

/// n exact draws from N(mean, Q^-1) (columns of the result), conditioned on
/// the constraint when supplied. Draw k uses its own stream derived from
/// (seed, k).
Eigen::MatrixXd sample_gmrf(const SparseMatrix& q, const Eigen::VectorXd& mean, std::size_t n,
                            const std::optional<LinearConstraint>& constraint, std::uint64_t seed);

}  // namespace abundance
