#include "abundance/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "abundance/error.hpp"
#include "abundance/parallel.hpp"
#include "abundance/random.hpp"

namespace abundance {

double PredictionGrid::total_area() const {
  double s = 0.0;
  for (double a : areas) s += a;
  return s;
}

PredictionGrid build_grid(const Region& region, double cell_w, double cell_h) {
  if (!(cell_w > 0.0) || !(cell_h > 0.0)) throw InputError("cell dimensions must be positive");
  const Rect box = region.bounding_box();
  const auto nx = static_cast<std::size_t>(std::ceil(box.width() / cell_w - 1e-9));
  const auto ny = static_cast<std::size_t>(std::ceil(box.height() / cell_h - 1e-9));
  PredictionGrid g;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const Rect cell{box.xmin + i * cell_w, box.ymin + j * cell_h, box.xmin + (i + 1) * cell_w,
                      box.ymin + (j + 1) * cell_h};
      const Point c = cell.center();
      if (!region.contains(c)) continue;
      g.cells.push_back(cell);
      g.centers.push_back(c);
      g.areas.push_back(cell.area());
    }
  }
  if (g.cells.empty()) throw InputError("prediction grid has no cell centre inside the region");
  return g;
}

double integrate_intensity(const Eigen::VectorXd& eta, std::span<const double> areas) {
  if (static_cast<std::size_t>(eta.size()) != areas.size()) throw InputError("eta and areas disagree in length");
  double mu = 0.0;
  for (std::size_t j = 0; j < areas.size(); ++j) mu += std::exp(eta[static_cast<Eigen::Index>(j)]) * areas[j];
  return mu;
}

CountDistribution predictive_mixture(std::span<const double> mu, double tail) {
  return CountDistribution::poisson_mixture(mu, tail);
}

CountDistribution predictive_negbin_sum(const Eigen::MatrixXd& x, const Eigen::MatrixXd& params,
                                        std::span<const double> areas, double tau, std::uint64_t seed) {
  if (!(tau > 0.0)) throw InputError("negative binomial shape must be positive");
  if (x.cols() != params.rows()) throw InputError("design and parameter draws disagree");
  if (static_cast<std::size_t>(x.rows()) != areas.size()) throw InputError("design and areas disagree");
  const auto k = static_cast<std::size_t>(params.cols());
  std::vector<std::int64_t> totals(k);
  parallel_for(k, [&](std::size_t d) {
    Engine engine = make_engine(seed, d);
    const Eigen::VectorXd eta = x * params.col(static_cast<Eigen::Index>(d));
    boost::random::gamma_distribution<double> gamma(tau, 1.0 / tau);
    double lambda = 0.0;
    for (std::size_t j = 0; j < areas.size(); ++j) {
      const double mu = areas[j] * std::exp(eta[static_cast<Eigen::Index>(j)]);
      if (mu > 0.0) lambda += mu * gamma(engine);
    }
    if (!std::isfinite(lambda) || lambda > static_cast<double>(kMaxSupport))
      throw NumericalError("negative binomial sum has a mean too large to represent");
    if (lambda <= 0.0) {
      totals[d] = 0;
    } else {
      boost::random::poisson_distribution<std::int64_t, double> pois(lambda);
      totals[d] = pois(engine);
    }
  });
  return CountDistribution::empirical(totals);
}

PredictiveSummary summarize(const CountDistribution& d) {
  PredictiveSummary s;
  s.mean = d.mean();
  s.median = d.quantile(0.5);
  s.mode = d.mode();
  s.q025 = d.quantile(0.025);
  s.q25 = d.quantile(0.25);
  s.q75 = d.quantile(0.75);
  s.q975 = d.quantile(0.975);
  s.iqr = s.q75 - s.q25;
  return s;
}

void write_summary_line(std::ostream& out, const PredictiveSummary& s) {
  out << std::setprecision(10) << "# summary mean " << s.mean << " median " << s.median << " mode " << s.mode
      << " iqr " << s.iqr << " q0.025 " << s.q025 << " q0.975 " << s.q975 << "\n";
}

void write_predictive(std::ostream& out, const CountDistribution& dist) {
  out << "# count probability\n";
  out << std::setprecision(17);
  const auto pmf = dist.pmf_values();
  for (std::size_t k = 0; k < pmf.size(); ++k) out << k << " " << pmf[k] << "\n";
  write_summary_line(out, summarize(dist));
}

CountDistribution read_predictive(std::istream& in, const std::string& source) {
  std::vector<double> pmf;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    long long k = 0;
    double p = 0.0;
    if (!(ss >> k >> p) || k < 0)
      throw InputError(source + ": row " + std::to_string(row) + ": expected `count probability`");
    if (static_cast<std::size_t>(k) >= pmf.size()) pmf.resize(static_cast<std::size_t>(k) + 1, 0.0);
    pmf[static_cast<std::size_t>(k)] += p;
  }
  if (pmf.empty()) throw InputError(source + ": no pmf rows");
  return CountDistribution::tabulated(std::move(pmf));
}

namespace {

void check_targets(const Targets& t) {
  if (t.centers.size() != t.areas.size()) throw InputError("target centres and areas disagree in length");
}

}  // namespace

DrawMeans lgcp_draw_means(const LgcpFit& fit, Targets total, Targets points, std::size_t k,
                          std::uint64_t seed) {
  check_targets(total);
  check_targets(points);
  const LgcpModel& model = *fit.model;
  const SparseMatrix bt = total.centers.empty() ? SparseMatrix() : model.predictor(total.centers);
  const SparseMatrix bp = points.centers.empty() ? SparseMatrix() : model.predictor(points.centers);
  DrawMeans out;
  if (!total.centers.empty()) out.total.assign(k, 0.0);
  out.points.resize(static_cast<Eigen::Index>(points.centers.size()), static_cast<Eigen::Index>(k));
  for_each_latent_sample(
      fit, k,
      [&](std::size_t i, const Eigen::VectorXd& z) {
        if (!total.centers.empty()) out.total[i] = integrate_intensity(bt * z, total.areas);
        if (!points.centers.empty()) {
          const Eigen::VectorXd eta = bp * z;
          for (Eigen::Index j = 0; j < eta.size(); ++j)
            out.points(j, static_cast<Eigen::Index>(i)) = points.areas[static_cast<std::size_t>(j)] * std::exp(eta[j]);
        }
      },
      seed);
  return out;
}

DrawMeans gam_draw_means(const GamDesign& design, const Eigen::MatrixXd& params, Targets total,
                         Targets points) {
  check_targets(total);
  check_targets(points);
  const auto k = static_cast<std::size_t>(params.cols());
  const Eigen::MatrixXd xt = total.centers.empty() ? Eigen::MatrixXd() : design.rows(total.centers);
  const Eigen::MatrixXd xp = points.centers.empty() ? Eigen::MatrixXd() : design.rows(points.centers);
  DrawMeans out;
  if (!total.centers.empty()) out.total.assign(k, 0.0);
  out.points.resize(static_cast<Eigen::Index>(points.centers.size()), static_cast<Eigen::Index>(k));
  parallel_for(k, [&](std::size_t i) {
    const auto col = params.col(static_cast<Eigen::Index>(i));
    if (!total.centers.empty()) out.total[i] = integrate_intensity(xt * col, total.areas);
    if (!points.centers.empty()) {
      const Eigen::VectorXd eta = xp * col;
      for (Eigen::Index j = 0; j < eta.size(); ++j)
        out.points(j, static_cast<Eigen::Index>(i)) = points.areas[static_cast<std::size_t>(j)] * std::exp(eta[j]);
    }
  });
  return out;
}

Eigen::VectorXd lgcp_median_intensity(const LgcpFit& fit, std::span<const Point> centers, std::size_t k,
                                      std::uint64_t seed) {
  if (k == 0) throw InputError("need at least one draw");
  const SparseMatrix b = fit.model->predictor(centers);
  Eigen::MatrixXd eta(static_cast<Eigen::Index>(centers.size()), static_cast<Eigen::Index>(k));
  for_each_latent_sample(
      fit, k, [&](std::size_t i, const Eigen::VectorXd& z) { eta.col(static_cast<Eigen::Index>(i)) = b * z; },
      seed);
  Eigen::VectorXd med(eta.rows());
  std::vector<double> row(k);
  for (Eigen::Index j = 0; j < eta.rows(); ++j) {
    for (std::size_t i = 0; i < k; ++i) row[i] = eta(j, static_cast<Eigen::Index>(i));
    const std::size_t mid = (k - 1) / 2;
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(mid), row.end());
    med[j] = std::exp(row[mid]);
  }
  return med;
}

}  // namespace abundance
