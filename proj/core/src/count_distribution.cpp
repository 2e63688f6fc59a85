#include "abundance/count_distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "abundance/error.hpp"

namespace abundance {

namespace {

constexpr double kDrop = 1e-20;

void check_mu(double mu) {
  if (std::isnan(mu) || mu < 0.0) throw InputError("count mean must be nonnegative");
  if (!std::isfinite(mu)) throw NumericalError("count mean is not finite");
}

void check_support(std::int64_t k) {
  if (k > kMaxSupport)
    throw NumericalError("count distribution would need support beyond " + std::to_string(kMaxSupport));
}

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InputError("negative binomial shape must be positive");
}

/// log Gamma(y + tau) - log Gamma(tau), accurate when tau >> y.
double lgamma_ratio(double y, double tau) {
  if (y < 64.0 && y == std::floor(y)) {
    double s = 0.0;
    for (int j = 0; j < static_cast<int>(y); ++j) s += std::log(tau + j);
    return s;
  }
  return std::lgamma(y + tau) - std::lgamma(tau);
}

/// Fills w * p_k outward from the mode using p_{k+1} = p_k * up(k) and
/// p_{k-1} = p_k / up(k-1).
template <class Up>
void accumulate_outward(std::vector<double>& acc, std::int64_t m, double log_pm, double w, Up&& up) {
  check_support(m);
  const double pm = std::exp(log_pm);
  if (static_cast<std::int64_t>(acc.size()) <= m) acc.resize(static_cast<std::size_t>(m) + 1, 0.0);
  acc[static_cast<std::size_t>(m)] += w * pm;
  double p = pm;
  for (std::int64_t k = m; k > 0;) {
    p /= up(k - 1);
    --k;
    if (p < kDrop) break;
    acc[static_cast<std::size_t>(k)] += w * p;
  }
  p = pm;
  for (std::int64_t k = m;;) {
    p *= up(k);
    ++k;
    if (p < kDrop && p < pm) break;
    check_support(k);
    if (static_cast<std::int64_t>(acc.size()) <= k) acc.resize(static_cast<std::size_t>(k) + 1 + acc.size() / 2, 0.0);
    acc[static_cast<std::size_t>(k)] += w * p;
  }
}

}  // namespace

double poisson_log_pmf(double y, double mu) {
  if (mu == 0.0) return y == 0.0 ? 0.0 : -INFINITY;
  return y * std::log(mu) - mu - std::lgamma(y + 1.0);
}

double negbin_log_pmf(double y, double mu, double tau) {
  if (mu == 0.0) return y == 0.0 ? 0.0 : -INFINITY;
  // tau log(tau / (tau + mu)) + y log(mu / (tau + mu)) + log Gamma(y+tau) - log Gamma(tau) - log y!
  return -tau * std::log1p(mu / tau) + y * (std::log(mu) - std::log(tau + mu)) + lgamma_ratio(y, tau) -
         std::lgamma(y + 1.0);
}

void accumulate_poisson(std::vector<double>& acc, double mu, double w) {
  check_mu(mu);
  if (mu == 0.0) {
    if (acc.empty()) acc.resize(1, 0.0);
    acc[0] += w;
    return;
  }
  const auto m = static_cast<std::int64_t>(std::floor(mu));
  accumulate_outward(acc, m, poisson_log_pmf(static_cast<double>(m), mu), w,
                     [mu](std::int64_t k) { return mu / static_cast<double>(k + 1); });
}

void accumulate_negbin(std::vector<double>& acc, double mu, double tau, double w) {
  check_mu(mu);
  check_tau(tau);
  if (mu == 0.0) {
    if (acc.empty()) acc.resize(1, 0.0);
    acc[0] += w;
    return;
  }
  const double r = mu / (tau + mu);
  const auto m = tau > 1.0 ? static_cast<std::int64_t>(std::floor((tau - 1.0) * mu / tau)) : std::int64_t{0};
  accumulate_outward(acc, m, negbin_log_pmf(static_cast<double>(m), mu, tau), w,
                     [tau, r](std::int64_t k) {
                       return (static_cast<double>(k) + tau) / static_cast<double>(k + 1) * r;
                     });
}

void CountDistribution::finish(std::vector<double> pmf, double tail) {
  if (!(tail >= 0.0) || tail >= 1.0) throw InputError("tail tolerance must lie in [0, 1)");
  if (pmf.empty()) pmf.push_back(1.0);
  const double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("pmf has no mass");
  // Cut at the 1 - tail quantile; everything beyond goes to the last bin.
  double c = 0.0;
  std::size_t cut = pmf.size() - 1;
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    c += pmf[k] / total;
    if (c >= 1.0 - tail) {
      cut = k;
      break;
    }
  }
  pmf.resize(cut + 1);
  double s = 0.0;
  for (std::size_t k = 0; k < cut; ++k) {
    pmf[k] /= total;
    s += pmf[k];
  }
  pmf[cut] = std::max(0.0, 1.0 - s);
  cdf_.resize(pmf.size());
  double run = 0.0;
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    run += pmf[k];
    cdf_[k] = std::min(1.0, run);
  }
  cdf_.back() = 1.0;
  pmf_ = std::move(pmf);
}

CountDistribution CountDistribution::poisson(double mu, double tail) {
  const double m[1] = {mu};
  return poisson_mixture(m, tail);
}

CountDistribution CountDistribution::poisson_mixture(std::span<const double> mu, double tail) {
  if (mu.empty()) throw InputError("Poisson mixture needs at least one component");
  CountDistribution d;
  d.kind_ = Kind::PoissonMixture;
  d.means_.assign(mu.begin(), mu.end());
  const double w = 1.0 / static_cast<double>(mu.size());
  std::vector<double> acc;
  double mean = 0.0;
  for (double m : mu) {
    accumulate_poisson(acc, m, w);
    mean += m;
  }
  d.mean_ = mean / static_cast<double>(mu.size());
  d.finish(std::move(acc), tail);
  return d;
}

CountDistribution CountDistribution::negbin(double mu, double tau, double tail) {
  const double m[1] = {mu};
  CountDistribution d = negbin_mixture(m, tau, tail);
  d.kind_ = Kind::NegBin;
  return d;
}

CountDistribution CountDistribution::negbin_mixture(std::span<const double> mu, double tau, double tail) {
  if (mu.empty()) throw InputError("negative binomial mixture needs at least one component");
  check_tau(tau);
  CountDistribution d;
  d.kind_ = Kind::NegBinMixture;
  d.shape_ = tau;
  d.means_.assign(mu.begin(), mu.end());
  const double w = 1.0 / static_cast<double>(mu.size());
  std::vector<double> acc;
  double mean = 0.0;
  for (double m : mu) {
    accumulate_negbin(acc, m, tau, w);
    mean += m;
  }
  d.mean_ = mean / static_cast<double>(mu.size());
  d.finish(std::move(acc), tail);
  return d;
}

CountDistribution CountDistribution::empirical(std::span<const std::int64_t> samples) {
  if (samples.empty()) throw InputError("empirical distribution needs at least one sample");
  const std::int64_t mx = *std::max_element(samples.begin(), samples.end());
  if (*std::min_element(samples.begin(), samples.end()) < 0) throw InputError("negative count sample");
  check_support(mx);
  std::vector<double> pmf(static_cast<std::size_t>(mx) + 1, 0.0);
  double sum = 0.0;
  for (std::int64_t s : samples) {
    pmf[static_cast<std::size_t>(s)] += 1.0;
    sum += static_cast<double>(s);
  }
  for (double& p : pmf) p /= static_cast<double>(samples.size());
  CountDistribution d;
  d.kind_ = Kind::Empirical;
  d.mean_ = sum / static_cast<double>(samples.size());
  d.finish(std::move(pmf), 0.0);
  return d;
}

CountDistribution CountDistribution::point_mass(std::int64_t k) {
  if (k < 0) throw InputError("point mass at a negative count");
  std::vector<double> pmf(static_cast<std::size_t>(k) + 1, 0.0);
  pmf.back() = 1.0;
  CountDistribution d;
  d.kind_ = Kind::PointMass;
  d.mean_ = static_cast<double>(k);
  d.finish(std::move(pmf), 0.0);
  return d;
}

CountDistribution CountDistribution::tabulated(std::vector<double> pmf) {
  if (pmf.empty()) throw InputError("empty pmf");
  double total = 0.0;
  for (double p : pmf) {
    if (!std::isfinite(p) || p < 0.0) throw InputError("pmf entries must be finite and nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw InputError("pmf sums to " + std::to_string(total) + ", not 1");
  CountDistribution d;
  d.kind_ = Kind::Tabulated;
  double mean = 0.0;
  for (std::size_t k = 0; k < pmf.size(); ++k) mean += static_cast<double>(k) * pmf[k] / total;
  d.mean_ = mean;
  d.finish(std::move(pmf), 0.0);
  return d;
}

double CountDistribution::variance() const {
  double m = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < pmf_.size(); ++k) {
    const double x = static_cast<double>(k);
    m += x * pmf_[k];
    m2 += x * x * pmf_[k];
  }
  return std::max(0.0, m2 - m * m);
}

double CountDistribution::pmf(std::int64_t k) const {
  if (k < 0 || k > max_support()) return 0.0;
  return pmf_[static_cast<std::size_t>(k)];
}

double CountDistribution::cdf(std::int64_t k) const {
  if (k < 0) return 0.0;
  if (k >= max_support()) return 1.0;
  return cdf_[static_cast<std::size_t>(k)];
}

std::int64_t CountDistribution::quantile(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile level must lie in [0, 1]");
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), p);
  if (it == cdf_.end()) return max_support();
  return static_cast<std::int64_t>(it - cdf_.begin());
}

std::int64_t CountDistribution::mode() const {
  return static_cast<std::int64_t>(std::max_element(pmf_.begin(), pmf_.end()) - pmf_.begin());
}

}  // namespace abundance
