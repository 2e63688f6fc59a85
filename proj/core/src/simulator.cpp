#include "abundance/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "abundance/error.hpp"
#include "abundance/gmrf.hpp"
#include "abundance/mesh.hpp"
#include "abundance/parallel.hpp"
#include "abundance/random.hpp"

namespace abundance {

namespace {

std::int64_t draw_poisson(double mean, Engine& engine) {
  if (!(mean > 0.0)) return 0;
  boost::random::poisson_distribution<std::int64_t, double> pois(mean);
  return pois(engine);
}

// Number of simulation cells between photo centres; photo edges must fall on cell edges.
std::size_t step_cells(const SimConfig& c) {
  const double cells = c.photo_step / (c.photo_width / static_cast<double>(c.subdivision));
  const double rounded = std::round(cells);
  if (std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells))
    throw InputError("photo step must be a multiple of photo width / subdivision");
  return static_cast<std::size_t>(rounded);
}

}  // namespace

void SimConfig::validate() const {
  if (num_transects == 0 || photos_per_transect == 0) throw InputError("simulation needs photos");
  if (!(photo_width > 0.0) || !(photo_height > 0.0)) throw InputError("photo dimensions must be positive");
  if (!(transect_spacing > photo_width)) throw InputError("transect spacing must exceed the photo width");
  if (!(transect_spacing > photo_height)) throw InputError("transect spacing must exceed the photo height");
  if (!(photo_step >= photo_width)) throw InputError("photos on a transect must not overlap");
  if (!(half_width >= 0.5 * photo_height)) throw InputError("band half-width must cover the photos");
  if (!(sigma2 >= 0.0)) throw InputError("field variance must be non-negative");
  if (sigma2 > 0.0 && !(kappa > 0.0)) throw InputError("kappa must be positive");
  if (subdivision == 0) throw InputError("subdivision must be positive");
  if (!std::isfinite(alpha)) throw InputError("alpha must be finite");
  for (const auto& [cov, b] : beta) {
    if (cov == Covariate::Intercept) throw InputError("the intercept is alpha, not a beta entry");
    if (cov == Covariate::Ice && raster.kind == RasterKind::None)
      throw InputError("an ice effect needs a raster");
    if (!std::isfinite(b)) throw InputError("beta must be finite");
  }
  step_cells(*this);
}

SimConfig sim_preset_paper_like() { return SimConfig{}; }

SimConfig sim_preset_small() {
  SimConfig c;
  c.num_transects = 3;
  c.photos_per_transect = 8;
  c.kappa = 0.5;
  c.sigma2 = 0.5;
  return c;
}

SimConfig sim_preset(const std::string& name) {
  if (name == "paper-like") return sim_preset_paper_like();
  if (name == "small") return sim_preset_small();
  throw InputError("unknown simulation preset '" + name + "' (expected paper-like or small)");
}

CovariateRaster make_sim_raster(const RasterSpec& spec, const Rect& box, std::uint64_t seed) {
  if (spec.kind == RasterKind::None) throw InputError("no raster requested");
  if (!(spec.spacing > 0.0)) throw InputError("raster spacing must be positive");
  const Rect r{box.xmin - spec.margin, box.ymin - spec.margin, box.xmax + spec.margin, box.ymax + spec.margin};
  const auto nx = static_cast<std::size_t>(std::ceil(r.width() / spec.spacing)) + 1;
  const auto ny = static_cast<std::size_t>(std::ceil(r.height() / spec.spacing)) + 1;
  std::vector<double> values(nx * ny);
  double phase[3] = {0.0, 0.0, 0.0};
  Engine engine = make_engine(seed, 0x1ce);
  boost::random::uniform_01<double> u01;
  for (double& p : phase) p = 2.0 * std::numbers::pi * u01(engine);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const double sx = static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(nx - 1, 1));
      const double sy = static_cast<double>(j) / static_cast<double>(std::max<std::size_t>(ny - 1, 1));
      double v = sy;
      if (spec.kind == RasterKind::Smooth) {
        const double w = 2.0 * std::numbers::pi;
        v = 0.5 + (std::cos(w * sx + phase[0]) + std::cos(2 * w * sy + phase[1]) +
                   std::cos(w * (sx + 3 * sy) + phase[2])) /
                      6.0;
      }
      values[j * nx + i] = v;
    }
  }
  return CovariateRaster({r.xmin, r.ymin}, spec.spacing, spec.spacing, nx, ny, std::move(values));
}

double SimResult::field_at(Point p) const {
  if (field.size() == 0) return 0.0;
  const double hx = lattice.width() / static_cast<double>(lattice_nx);
  const double hy = lattice.height() / static_cast<double>(lattice_ny);
  const double fx = std::clamp((p.x - lattice.xmin) / hx, 0.0, static_cast<double>(lattice_nx));
  const double fy = std::clamp((p.y - lattice.ymin) / hy, 0.0, static_cast<double>(lattice_ny));
  const auto i = std::min(static_cast<std::size_t>(fx), lattice_nx - 1);
  const auto j = std::min(static_cast<std::size_t>(fy), lattice_ny - 1);
  const double tx = fx - static_cast<double>(i);
  const double ty = fy - static_cast<double>(j);
  const auto at = [&](std::size_t a, std::size_t b) { return field[static_cast<Eigen::Index>(b * (lattice_nx + 1) + a)]; };
  return (1 - tx) * (1 - ty) * at(i, j) + tx * (1 - ty) * at(i + 1, j) + (1 - tx) * ty * at(i, j + 1) +
         tx * ty * at(i + 1, j + 1);
}

SimResult simulate_lgcp_survey(const SimConfig& config) {
  config.validate();
  const std::size_t stride = step_cells(config);
  const std::size_t sub = config.subdivision;
  const double dw = config.photo_width / static_cast<double>(sub);
  const double dh = config.photo_height / static_cast<double>(sub);

  SimResult out;
  out.config = config;

  std::vector<Photo> photos;
  std::vector<double> centre_y(config.num_transects);
  for (std::size_t t = 0; t < config.num_transects; ++t) {
    centre_y[t] = config.origin.y + static_cast<double>(t) * config.transect_spacing;
    for (std::size_t m = 0; m < config.photos_per_transect; ++m) {
      Photo p;
      p.id = "t" + std::to_string(t + 1) + "p" + std::to_string(m + 1);
      p.transect_id = "T" + std::to_string(t + 1);
      p.center = {config.origin.x + 0.5 * config.photo_width + static_cast<double>(m) * config.photo_step,
                  centre_y[t]};
      p.width = config.photo_width;
      p.height = config.photo_height;
      p.counts[config.species] = 0;
      photos.push_back(std::move(p));
    }
  }
  out.region = build_region(Survey(photos), config.half_width);
  const Rect box = out.region.bounding_box();

  DesignInfo covs;
  for (const auto& [cov, b] : config.beta) covs.columns.push_back(cov);
  if (config.raster.kind != RasterKind::None) {
    out.raster = make_sim_raster(config.raster, box, config.seed);
    covs.raster = out.raster;
  }
  Eigen::VectorXd beta(static_cast<Eigen::Index>(config.beta.size()));
  for (std::size_t k = 0; k < config.beta.size(); ++k) beta[static_cast<Eigen::Index>(k)] = config.beta[k].second;

  if (config.sigma2 > 0.0) {
    const double range = std::sqrt(8.0) / config.kappa;
    const double h = config.lattice_spacing > 0.0 ? config.lattice_spacing : range / 10.0;
    const double margin = config.lattice_margin > 0.0 ? config.lattice_margin : range;
    const Rect lat{box.xmin - margin, box.ymin - margin, box.xmax + margin, box.ymax + margin};
    out.lattice_nx = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(lat.width() / h)));
    out.lattice_ny = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(lat.height() / h)));
    out.lattice = lat;
    const Mesh mesh = regular_mesh(lat, out.lattice_nx, out.lattice_ny);
    const SparseMatrix q =
        assemble_precision(fem_matrices(mesh), Hyper::from_kappa_sigma2(config.kappa, config.sigma2));
    out.field = sample_gmrf(q, Eigen::VectorXd::Zero(q.rows()), 1, std::nullopt, stream_seed(config.seed, 0)).col(0);
  }

  // Per band: simulation cells aligned with the photos, clipped to the band.
  const double hw = config.half_width;
  const auto extra_rows = static_cast<std::size_t>(std::ceil((hw - 0.5 * config.photo_height) / dh - 1e-9));
  const std::size_t ncols = (config.photos_per_transect - 1) * stride + sub;
  std::vector<std::int64_t> band_total(config.num_transects, 0);
  std::vector<double> band_expected(config.num_transects, 0.0);
  std::vector<std::vector<std::int64_t>> photo_counts(config.num_transects,
                                                      std::vector<std::int64_t>(config.photos_per_transect, 0));
  parallel_for(config.num_transects, [&](std::size_t t) {
    Engine engine = make_engine(config.seed, t + 1);
    const Rect band = out.region.bands[t];
    const double y_first = centre_y[t] - 0.5 * config.photo_height - static_cast<double>(extra_rows) * dh;
    std::vector<Point> centres;
    std::vector<double> areas;
    std::vector<std::ptrdiff_t> photo_of;
    for (std::size_t r = 0; r < sub + 2 * extra_rows; ++r) {
      const double y0 = std::max(band.ymin, y_first + static_cast<double>(r) * dh);
      const double y1 = std::min(band.ymax, y_first + static_cast<double>(r + 1) * dh);
      if (!(y1 > y0)) continue;
      const bool photo_row = r >= extra_rows && r < extra_rows + sub;
      for (std::size_t c = 0; c < ncols; ++c) {
        const double x0 = band.xmin + static_cast<double>(c) * dw;
        const Point centre{x0 + 0.5 * dw, 0.5 * (y0 + y1)};
        bool earlier = false;
        for (std::size_t b = 0; b < t && !earlier; ++b) earlier = out.region.bands[b].contains(centre);
        if (earlier) continue;
        std::ptrdiff_t ph = -1;
        if (photo_row && c % stride < sub) ph = static_cast<std::ptrdiff_t>(c / stride);
        centres.push_back(centre);
        areas.push_back(dw * (y1 - y0));
        photo_of.push_back(ph);
      }
    }
    const Eigen::MatrixXd x = covs.columns.empty() ? Eigen::MatrixXd(centres.size(), 0) : covs.rows(centres);
    for (std::size_t k = 0; k < centres.size(); ++k) {
      double eta = config.alpha + out.field_at(centres[k]);
      if (beta.size() > 0) eta += x.row(static_cast<Eigen::Index>(k)).dot(beta);
      const double mean = std::exp(eta) * areas[k];
      if (!std::isfinite(mean)) throw NumericalError("simulated intensity overflowed");
      const std::int64_t n = draw_poisson(mean, engine);
      band_expected[t] += mean;
      band_total[t] += n;
      if (photo_of[k] >= 0) photo_counts[t][static_cast<std::size_t>(photo_of[k])] += n;
    }
  });

  for (std::size_t t = 0; t < config.num_transects; ++t) {
    out.true_total += band_total[t];
    out.expected_total += band_expected[t];
    for (std::size_t m = 0; m < config.photos_per_transect; ++m)
      photos[t * config.photos_per_transect + m].counts[config.species] = photo_counts[t][m];
  }
  out.survey = Survey(std::move(photos));
  return out;
}

void write_truth(std::ostream& out, const SimResult& r) {
  const SimConfig& c = r.config;
  out << std::setprecision(17);
  out << "true_total " << r.true_total << "\n";
  out << "expected_total " << r.expected_total << "\n";
  out << "region_area " << r.region.area << "\n";
  out << "photos " << r.survey.size() << "\n";
  out << "alpha " << c.alpha << "\n";
  for (const auto& [cov, b] : c.beta) out << "beta_" << to_string(cov) << " " << b << "\n";
  out << "kappa " << c.kappa << "\n";
  out << "sigma2 " << c.sigma2 << "\n";
  if (c.kappa > 0.0) out << "range " << std::sqrt(8.0) / c.kappa << "\n";
  out << "seed " << c.seed << "\n";
}

}  // namespace abundance
