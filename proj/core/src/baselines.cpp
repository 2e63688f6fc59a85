#include "abundance/baselines.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <vector>

#include "abundance/error.hpp"

namespace abundance {

GammaPosterior fit_hom_pois(const Survey& survey, const std::string& species, double a0, double b0) {
  if (!(a0 > 0.0) || !(b0 > 0.0)) throw InputError("gamma prior parameters must be positive");
  GammaPosterior post{a0, b0};
  if (survey.size() == 0) return post;
  const auto counts = survey.counts(resolve_species(survey, species));
  for (std::size_t i = 0; i < survey.size(); ++i) {
    post.a += static_cast<double>(counts[i]);
    post.b += survey.photo(i).area();
  }
  return post;
}

CountDistribution predictive_hom_pois(const GammaPosterior& post, double area, double tail) {
  if (!(area > 0.0)) throw InputError("region area must be positive");
  if (!(post.a > 0.0) || !(post.b > 0.0)) throw InputError("gamma posterior parameters must be positive");
  return CountDistribution::negbin(area * post.a / post.b, post.a, tail);
}

double KingsleyEstimate::sd() const { return std::sqrt(variance); }

KingsleyEstimate kingsley(const Survey& survey, const std::string& species, double region_area,
                          KingsleyVariance strategy) {
  const auto transects = survey.transects();
  const std::size_t m = transects.size();
  if (m < 2) throw InputError("Kingsley's estimator needs at least 2 transects");
  if (!(region_area > 0.0)) throw InputError("region area must be positive");
  const auto counts = survey.counts(resolve_species(survey, species));
  std::vector<double> density(m);
  double total_area = 0.0, total_count = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    double area = 0.0, count = 0.0;
    for (std::size_t i : transects[k].members) {
      area += survey.photo(i).area();
      count += static_cast<double>(counts[i]);
    }
    density[k] = count / area;
    total_area += area;
    total_count += count;
  }
  KingsleyEstimate est;
  est.point = region_area / total_area * total_count;
  const double md = static_cast<double>(m);
  if (strategy == KingsleyVariance::SerialDifference) {
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < m; ++k) s += (density[k + 1] - density[k]) * (density[k + 1] - density[k]);
    est.variance = region_area * region_area * s / (2.0 * md * (md - 1.0));
  } else {
    double mean = 0.0;
    for (double d : density) mean += d;
    mean /= md;
    double ss = 0.0;
    for (double d : density) ss += (d - mean) * (d - mean);
    est.variance = region_area * region_area * ss / (md - 1.0) / md;
  }
  return est;
}

void write_kingsley_summary(std::ostream& out, const KingsleyEstimate& est) {
  out << std::setprecision(10);
  out << "model kingsley\n";
  out << "point " << est.point << "\n";
  out << "sd " << est.sd() << "\n";
  out << "interval " << est.point - 2.0 * est.sd() << " " << est.point + 2.0 * est.sd() << "\n";
}

}  // namespace abundance
