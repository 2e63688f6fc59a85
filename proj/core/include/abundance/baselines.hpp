#pragma once

#include <iosfwd>
#include <string>

#include "abundance/count_distribution.hpp"
#include "abundance/survey.hpp"

namespace abundance {

/// Gamma(a, b) posterior of a homogeneous intensity (rate b in km^2).
struct GammaPosterior {
  double a = 0.0;
  double b = 0.0;
};

/// Conjugate update a = a0 + sum N(A_i), b = b0 + sum |A_i|.
GammaPosterior fit_hom_pois(const Survey& survey, const std::string& species, double a0 = 10.0,
                            double b0 = 10.0);

/// Predictive count over an area: NegBin(mu = area a / b, tau = a).
CountDistribution predictive_hom_pois(const GammaPosterior& post, double area,
                                      double tail = kDefaultTail);

enum class KingsleyVariance {
  /// |A|^2 / (2 m (m - 1)) * sum_k (d_{k+1} - d_k)^2 over transects in survey order.
  SerialDifference,
  /// |A|^2 * s_d^2 / m with s_d^2 the sample variance of transect densities.
  BetweenTransect,
};

struct KingsleyEstimate {
  double point = 0.0;
  double variance = 0.0;
  double sd() const;
};

/// Ratio estimator (|A| / sum |A_T|) * sum N_T. Needs at least 2 transects.
KingsleyEstimate kingsley(const Survey& survey, const std::string& species, double region_area,
                          KingsleyVariance strategy = KingsleyVariance::SerialDifference);

/// Point, sd and the point +/- 2 sd interval.
void write_kingsley_summary(std::ostream& out, const KingsleyEstimate& est);

}  // namespace abundance
