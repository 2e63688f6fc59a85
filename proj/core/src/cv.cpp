#include "abundance/cv.hpp"

#include <algorithm>
#include <ostream>

#include <boost/random/uniform_int_distribution.hpp>

#include "abundance/error.hpp"
#include "abundance/parallel.hpp"
#include "abundance/prediction.hpp"
#include "abundance/random.hpp"

namespace abundance {

std::string to_string(FoldKind k) { return k == FoldKind::Random ? "random" : "transect"; }

std::vector<std::string> FoldSpec::ids(const Survey& survey, std::size_t fold) const {
  std::vector<std::string> out;
  for (std::size_t i : folds.at(fold)) out.push_back(survey.photo(i).id);
  return out;
}

FoldSpec folds_random(const Survey& survey, std::size_t k, std::uint64_t seed) {
  const std::size_t n = survey.size();
  if (k < 2) throw InputError("random cross-validation needs k >= 2");
  if (k > n) throw InputError("more folds than photos");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Engine engine = make_engine(seed, 0);
  for (std::size_t i = n - 1; i > 0; --i) {
    boost::random::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(engine)]);
  }
  FoldSpec spec;
  spec.kind = FoldKind::Random;
  spec.folds.resize(k);
  for (std::size_t pos = 0; pos < n; ++pos) spec.folds[pos % k].push_back(order[pos]);
  for (auto& f : spec.folds) std::sort(f.begin(), f.end());
  return spec;
}

FoldSpec folds_transect(const Survey& survey) {
  if (survey.transects().size() < 2) throw InputError("transect cross-validation needs at least 2 transects");
  FoldSpec spec;
  spec.kind = FoldKind::Transect;
  for (const Transect& t : survey.transects()) {
    std::vector<std::size_t> f = t.members;
    std::sort(f.begin(), f.end());
    spec.folds.push_back(std::move(f));
  }
  return spec;
}

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::Lgcp: return "lgcp";
    case ModelKind::GamPo: return "gam-po";
    case ModelKind::GamNb: return "gam-nb";
    case ModelKind::HomPo: return "hom-po";
  }
  return "?";
}

ModelKind model_from_string(const std::string& name) {
  for (ModelKind m : {ModelKind::Lgcp, ModelKind::GamPo, ModelKind::GamNb, ModelKind::HomPo})
    if (to_string(m) == name) return m;
  throw InputError("unknown model '" + name + "' (expected lgcp, gam-po, gam-nb or hom-po)");
}

std::vector<double> FoldModel::fingerprint() const {
  std::vector<double> v;
  if (lgcp) {
    for (const GridPoint& g : lgcp->grid) {
      v.push_back(g.theta.log_tau);
      v.push_back(g.theta.log_kappa);
      v.push_back(g.log_density);
      v.push_back(g.weight);
    }
    for (const auto& a : lgcp->approx)
      if (a) v.insert(v.end(), a->mode.data(), a->mode.data() + a->mode.size());
    v.insert(v.end(), lgcp->fixed_mean.data(), lgcp->fixed_mean.data() + lgcp->fixed_mean.size());
  }
  if (gam) {
    const GamFit& f = gam->fit;
    v.insert(v.end(), f.coef.data(), f.coef.data() + f.coef.size());
    v.insert(v.end(), f.cov.data(), f.cov.data() + f.cov.size());
    v.push_back(f.lambda);
    v.push_back(f.tau);
    v.push_back(f.edf);
  }
  if (hom) {
    v.push_back(hom->a);
    v.push_back(hom->b);
  }
  return v;
}

namespace {

std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> held_out) {
  std::vector<bool> drop(n, false);
  for (std::size_t i : held_out) {
    if (i >= n) throw InputError("held-out photo index out of range");
    drop[i] = true;
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (!drop[i]) keep.push_back(i);
  return keep;
}

}  // namespace

FoldModel fit_fold(const Survey& survey, const CovariateRaster* raster, const CvConfig& config,
                   std::span<const std::size_t> held_out) {
  const std::vector<std::size_t> keep = complement(survey.size(), held_out);
  if (keep.empty()) throw InputError("fold leaves no photos to fit");
  const Survey train = survey.subset(keep);
  const std::string species = resolve_species(survey, config.species);
  FoldModel m;
  m.kind = config.model;
  switch (config.model) {
    case ModelKind::Lgcp: {
      LgcpConfig c = config.lgcp;
      c.species = species;
      m.lgcp = fit_lgcp(train, raster, c);
      break;
    }
    case ModelKind::GamPo:
    case ModelKind::GamNb: {
      GamConfig c = config.gam;
      c.species = species;
      c.family = config.model == ModelKind::GamPo ? GamFamily::Poisson : GamFamily::NegBin;
      m.gam = fit_gam(train, raster, c);
      break;
    }
    case ModelKind::HomPo:
      m.hom = fit_hom_pois(train, species, config.a0, config.b0);
      break;
  }
  return m;
}

FoldPredictions predict_fold(const FoldModel& model, const Survey& survey, std::span<const std::size_t> held_out,
                             const CvConfig& config, std::uint64_t seed) {
  std::vector<Point> centres;
  std::vector<double> areas;
  for (std::size_t i : held_out) {
    centres.push_back(survey.photo(i).center);
    areas.push_back(survey.photo(i).area());
  }
  FoldPredictions out;
  if (held_out.empty()) return out;
  const Targets none{};
  const Targets pts{centres, areas};

  auto mixtures = [&](const DrawMeans& dm, std::optional<double> tau) {
    const auto k = static_cast<std::size_t>(dm.points.cols());
    std::vector<double> row(k), sum(k, 0.0);
    for (Eigen::Index j = 0; j < dm.points.rows(); ++j) {
      for (std::size_t d = 0; d < k; ++d) {
        row[d] = dm.points(j, static_cast<Eigen::Index>(d));
        sum[d] += row[d];
      }
      out.photos.push_back(tau ? CountDistribution::negbin_mixture(row, *tau, config.tail)
                               : CountDistribution::poisson_mixture(row, config.tail));
    }
    return sum;
  };

  switch (model.kind) {
    case ModelKind::Lgcp: {
      const DrawMeans dm = lgcp_draw_means(*model.lgcp, none, pts, config.draws, seed);
      out.aggregate = CountDistribution::poisson_mixture(mixtures(dm, std::nullopt), config.tail);
      break;
    }
    case ModelKind::GamPo:
    case ModelKind::GamNb: {
      const GamModelFit& g = *model.gam;
      const Eigen::MatrixXd params = sample_params(g.fit, config.draws, stream_seed(seed, 1));
      const DrawMeans dm = gam_draw_means(g.design, params, none, pts);
      if (model.kind == ModelKind::GamPo) {
        out.aggregate = CountDistribution::poisson_mixture(mixtures(dm, std::nullopt), config.tail);
      } else {
        mixtures(dm, g.fit.tau);
        out.aggregate = predictive_negbin_sum(g.design.rows(centres), params, areas, g.fit.tau, stream_seed(seed, 2));
      }
      break;
    }
    case ModelKind::HomPo: {
      double total = 0.0;
      for (double a : areas) {
        out.photos.push_back(predictive_hom_pois(*model.hom, a, config.tail));
        total += a;
      }
      out.aggregate = predictive_hom_pois(*model.hom, total, config.tail);
      break;
    }
  }
  return out;
}

CvReport run_cv(const Survey& survey, const CovariateRaster* raster, const CvConfig& config,
                const FoldSpec& folds, std::uint64_t seed) {
  if (folds.size() == 0) throw InputError("no folds");
  const std::string species = resolve_species(survey, config.species);
  const auto counts = survey.counts(species);
  CvReport report;
  report.model = config.model;
  report.scheme = folds.kind;
  report.num_folds = folds.size();
  report.status.resize(folds.size());

  std::vector<std::vector<UnitScore>> photo_units(folds.size());
  std::vector<std::optional<UnitScore>> agg_units(folds.size());
  parallel_for(folds.size(), [&](std::size_t f) {
    const auto& held = folds.folds[f];
    try {
      if (held.empty()) throw InputError("empty fold");
      const FoldModel model = fit_fold(survey, raster, config, held);
      const FoldPredictions pred = predict_fold(model, survey, held, config, stream_seed(seed, f));
      std::int64_t total = 0;
      for (std::size_t j = 0; j < held.size(); ++j) {
        UnitScore u = score_unit(pred.photos[j], counts[held[j]], config.levels);
        u.fold = f;
        u.unit = survey.photo(held[j]).id;
        photo_units[f].push_back(std::move(u));
        total += counts[held[j]];
      }
      UnitScore a = score_unit(*pred.aggregate, total, config.levels);
      a.fold = f;
      a.unit = "fold" + std::to_string(f);
      agg_units[f] = std::move(a);
    } catch (const std::exception& e) {
      report.status[f] = FoldStatus{false, e.what()};
      photo_units[f].clear();
    }
  });

  std::vector<UnitScore> photos, aggs;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (!report.status[f].ok) {
      report.complete = false;
      continue;
    }
    for (auto& u : photo_units[f]) photos.push_back(std::move(u));
    aggs.push_back(std::move(*agg_units[f]));
  }
  if (!photos.empty()) {
    report.photo = make_score_table(std::move(photos), folds.size(), config.levels, config.bootstrap,
                                    stream_seed(seed, folds.size()));
    report.aggregate = make_score_table(std::move(aggs), folds.size(), config.levels, config.bootstrap,
                                        stream_seed(seed, folds.size() + 1));
  }
  return report;
}

void write_cv_report(std::ostream& out, std::span<const CvReport> reports) {
  if (reports.empty()) return;
  const std::string scheme = to_string(reports.front().scheme);
  out << "# cross-validation scheme " << scheme << ", folds " << reports.front().num_folds << "\n";
  for (const CvReport& r : reports) {
    for (std::size_t f = 0; f < r.status.size(); ++f)
      if (!r.status[f].ok) out << "# " << to_string(r.model) << " fold " << f << " failed: " << r.status[f].error << "\n";
  }
  for (int level = 0; level < 2; ++level) {
    std::vector<std::pair<std::string, const ScoreTable*>> rows;
    for (const CvReport& r : reports) {
      const auto& t = level == 0 ? r.photo : r.aggregate;
      rows.emplace_back(to_string(r.model) + (r.complete ? "" : "*"), t ? &*t : nullptr);
    }
    write_score_table(out, (level == 0 ? "photo level, " : "aggregate level, ") + scheme, rows);
  }
}

}  // namespace abundance
