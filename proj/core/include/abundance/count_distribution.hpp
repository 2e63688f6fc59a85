#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace abundance {

/// Default truncation: the pmf is stored up to the 1 - 1e-9 quantile.
inline constexpr double kDefaultTail = 1e-9;
/// Largest count a distribution may materialise; beyond it construction
/// throws NumericalError.
inline constexpr std::int64_t kMaxSupport = 50'000'000;

/// Predictive law of a nonnegative count. The pmf is materialised on
/// 0..max_support(); mass beyond the truncation point is folded into the last
/// bin so that cdf(max_support()) == 1. mean() is exact (not truncated).
class CountDistribution {
 public:
  enum class Kind { PoissonMixture, NegBin, NegBinMixture, Empirical, PointMass, Tabulated };

  static CountDistribution poisson(double mu, double tail = kDefaultTail);
  /// Equal-weight mixture of Poisson(mu_k).
  static CountDistribution poisson_mixture(std::span<const double> mu, double tail = kDefaultTail);
  /// Mean mu, shape tau: variance mu + mu^2 / tau.
  static CountDistribution negbin(double mu, double tau, double tail = kDefaultTail);
  /// Equal-weight mixture of NegBin(mu_k, tau).
  static CountDistribution negbin_mixture(std::span<const double> mu, double tau,
                                          double tail = kDefaultTail);
  static CountDistribution empirical(std::span<const std::int64_t> samples);
  static CountDistribution point_mass(std::int64_t k);
  /// pmf on 0..n-1; must sum to 1 within 1e-6 and is renormalised.
  static CountDistribution tabulated(std::vector<double> pmf);

  Kind kind() const { return kind_; }
  double mean() const { return mean_; }
  /// Variance of the materialised pmf.
  double variance() const;
  double pmf(std::int64_t k) const;
  double cdf(std::int64_t k) const;
  /// Smallest k with cdf(k) >= p.
  std::int64_t quantile(double p) const;
  /// Smallest argmax of the pmf.
  std::int64_t mode() const;
  std::int64_t max_support() const { return static_cast<std::int64_t>(pmf_.size()) - 1; }
  std::span<const double> pmf_values() const { return pmf_; }
  std::span<const double> cdf_values() const { return cdf_; }

  /// Parameters: component means (mixtures, NegBin, Poisson) and shape.
  std::span<const double> component_means() const { return means_; }
  double shape() const { return shape_; }

 private:
  CountDistribution() = default;
  void finish(std::vector<double> pmf, double tail);

  Kind kind_ = Kind::PointMass;
  double mean_ = 0.0;
  double shape_ = 0.0;
  std::vector<double> means_;
  std::vector<double> pmf_;
  std::vector<double> cdf_;
};

/// Adds w * Poisson(mu) to acc (growing it as needed); terms below 1e-20 of
/// the component are dropped.
void accumulate_poisson(std::vector<double>& acc, double mu, double w);
/// Adds w * NegBin(mu, tau) to acc.
void accumulate_negbin(std::vector<double>& acc, double mu, double tau, double w);

/// log pmf of NegBin(mu, tau) at y, stable for large tau.
double negbin_log_pmf(double y, double mu, double tau);
double poisson_log_pmf(double y, double mu);

}  // namespace abundance
