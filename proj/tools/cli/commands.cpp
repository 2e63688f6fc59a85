#include "commands.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "abundance/baselines.hpp"
#include "abundance/cv.hpp"
#include "abundance/error.hpp"
#include "abundance/gam.hpp"
#include "abundance/lgcp.hpp"
#include "abundance/mesh.hpp"
#include "abundance/parallel.hpp"
#include "abundance/prediction.hpp"
#include "abundance/random.hpp"
#include "abundance/scoring.hpp"
#include "abundance/simulator.hpp"
#include "abundance/survey.hpp"

namespace abundance::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kModelNames{"lgcp", "gam-po", "gam-nb", "hom-po"};

struct Global {
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

// Inputs and model settings shared by fit, predict and cv.
struct ModelArgs {
  std::string model = "lgcp";
  std::string survey;
  std::string raster;
  std::string species;
  std::vector<std::string> covariates;
  double a0 = 10.0;
  double b0 = 10.0;
  std::size_t knots = 30;
  std::optional<double> lambda;
  double max_edge_inner = 0.0;
  int grid_points = 5;
  double intercept_variance = 1e6;
  double beta_variance = 1000.0;
};

struct FitArgs {
  ModelArgs m;
  std::string out;
  std::size_t median_draws = 1000;
  double cell_width = kDefaultCellWidthKm;
  double cell_height = kDefaultCellHeightKm;
};

struct PredictArgs {
  std::string fit;
  std::string out;
  std::size_t draws = 10000;
  double cell_width = kDefaultCellWidthKm;
  double cell_height = kDefaultCellHeightKm;
  std::optional<double> area;
};

struct CvArgs {
  ModelArgs m;
  std::vector<std::string> models{"hom-po"};
  std::string scheme = "random";
  std::size_t folds = 10;
  std::size_t draws = 2000;
  std::size_t resamples = 10000;
  std::string out;
};

struct SimArgs {
  std::string preset = "paper-like";
  std::string out;
  std::optional<std::size_t> transects;
  std::optional<std::size_t> photos;
  std::optional<double> alpha;
  std::optional<double> kappa;
  std::optional<double> sigma2;
};

struct ScoreArgs {
  std::string pmf;
  std::optional<std::int64_t> obs;
  std::vector<double> levels{0.5, 0.9};
  std::string out;
};

struct MeshArgs {
  std::string survey;
  double max_edge_inner = 0.0;
  std::string out;
};

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw InputError(flag + " is required");
  if (!fs::is_regular_file(path)) throw InputError(flag + ": no such file '" + path + "'");
}

void require_draws(std::size_t k, const std::string& flag) {
  if (k < 1) throw InputError(flag + " must be at least 1");
}

std::vector<Covariate> covariates_of(const ModelArgs& m) {
  if (m.covariates.empty()) return default_covariates();
  std::vector<Covariate> out;
  for (const auto& name : m.covariates) {
    try {
      out.push_back(covariate_from_string(name));
    } catch (const InputError& e) {
      throw InputError(std::string("--covariates: ") + e.what());
    }
  }
  return out;
}

bool needs_raster(ModelKind kind, const std::vector<Covariate>& covs) {
  return kind != ModelKind::HomPo && std::find(covs.begin(), covs.end(), Covariate::Ice) != covs.end();
}

struct Inputs {
  Survey survey;
  std::optional<CovariateRaster> raster;
  std::string species;

  const CovariateRaster* raster_ptr() const { return raster ? &*raster : nullptr; }
};

Inputs load_inputs(const ModelArgs& m, const std::vector<ModelKind>& kinds) {
  require_file(m.survey, "--survey");
  const auto covs = covariates_of(m);
  for (ModelKind k : kinds)
    if (needs_raster(k, covs) && m.raster.empty())
      throw InputError("--raster is required for --model " + to_string(k) + " with the ice covariate");
  Inputs in;
  if (!m.raster.empty()) {
    require_file(m.raster, "--raster");
    in.raster = load_raster(m.raster);
  }
  in.survey = load_survey(m.survey);
  in.species = resolve_species(in.survey, m.species);
  return in;
}

LgcpConfig lgcp_config(const ModelArgs& m, const std::string& species) {
  LgcpConfig c;
  c.species = species;
  c.covariates = covariates_of(m);
  c.mesh.max_edge_inner = m.max_edge_inner;
  c.grid.points_per_axis = m.grid_points;
  c.intercept_variance = m.intercept_variance;
  c.beta_variance = m.beta_variance;
  return c;
}

GamConfig gam_config(const ModelArgs& m, const std::string& species, ModelKind kind) {
  GamConfig c;
  c.species = species;
  c.covariates = covariates_of(m);
  c.knots = m.knots;
  c.lambda = m.lambda;
  c.family = kind == ModelKind::GamNb ? GamFamily::NegBin : GamFamily::Poisson;
  return c;
}

fs::path prepare_dir(const std::string& dir) {
  if (dir.empty()) throw InputError("--out is required");
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw InputError("failed writing '" + path.string() + "'");
}

json model_json(const ModelArgs& m) {
  json j;
  j["model"] = m.model;
  j["survey"] = fs::absolute(m.survey).lexically_normal().string();
  j["raster"] = m.raster.empty() ? json(nullptr) : json(fs::absolute(m.raster).lexically_normal().string());
  j["species"] = m.species;
  std::vector<std::string> covs;
  for (Covariate c : covariates_of(m)) covs.push_back(to_string(c));
  j["covariates"] = covs;
  j["a0"] = m.a0;
  j["b0"] = m.b0;
  j["knots"] = m.knots;
  j["lambda"] = m.lambda ? json(*m.lambda) : json(nullptr);
  j["max_edge_inner"] = m.max_edge_inner;
  j["grid_points"] = m.grid_points;
  j["intercept_variance"] = m.intercept_variance;
  j["beta_variance"] = m.beta_variance;
  return j;
}

ModelArgs model_from_json(const json& j) {
  ModelArgs m;
  m.model = j.at("model").get<std::string>();
  m.survey = j.at("survey").get<std::string>();
  if (!j.at("raster").is_null()) m.raster = j.at("raster").get<std::string>();
  m.species = j.at("species").get<std::string>();
  m.covariates = j.at("covariates").get<std::vector<std::string>>();
  m.a0 = j.at("a0").get<double>();
  m.b0 = j.at("b0").get<double>();
  m.knots = j.at("knots").get<std::size_t>();
  if (!j.at("lambda").is_null()) m.lambda = j.at("lambda").get<double>();
  m.max_edge_inner = j.at("max_edge_inner").get<double>();
  m.grid_points = j.at("grid_points").get<int>();
  m.intercept_variance = j.at("intercept_variance").get<double>();
  m.beta_variance = j.at("beta_variance").get<double>();
  return m;
}

int cmd_fit(const FitArgs& a, const Global& g, std::ostream& out) {
  const ModelKind kind = model_from_string(a.m.model);
  require_draws(a.median_draws, "--median-draws");
  const Inputs in = load_inputs(a.m, {kind});
  const fs::path dir = prepare_dir(a.out);
  const Region region = build_region(in.survey);

  json j = model_json(a.m);
  j["species"] = in.species;
  j["seed"] = g.seed;
  j["region_area"] = region.area;

  std::ostringstream summary;
  summary << std::setprecision(10);
  summary << "species " << in.species << "\n";
  summary << "photos " << in.survey.size() << "\n";
  summary << "transects " << in.survey.transects().size() << "\n";
  summary << "region_area_km2 " << region.area << "\n";

  switch (kind) {
    case ModelKind::Lgcp: {
      const LgcpFit fit = fit_lgcp(in.survey, in.raster_ptr(), lgcp_config(a.m, in.species));
      write_fit_summary(summary, fit);
      json grid = json::array();
      for (const GridPoint& p : fit.grid)
        grid.push_back({p.theta.log_tau, p.theta.log_kappa, p.weight, p.log_density});
      j["theta_grid"] = grid;

      const PredictionGrid cells = build_grid(region, a.cell_width, a.cell_height);
      const Eigen::VectorXd med = lgcp_median_intensity(fit, cells.centers, a.median_draws, g.seed);
      std::ostringstream m;
      m << std::setprecision(10) << "# x_km y_km median_intensity_per_km2\n";
      for (std::size_t i = 0; i < cells.size(); ++i)
        m << cells.centers[i].x << " " << cells.centers[i].y << " " << med[static_cast<Eigen::Index>(i)] << "\n";
      write_file(dir / "median_intensity.txt", m.str());
      break;
    }
    case ModelKind::GamPo:
    case ModelKind::GamNb: {
      const GamModelFit fit = fit_gam(in.survey, in.raster_ptr(), gam_config(a.m, in.species, kind));
      write_gam_summary(summary, fit);
      j["lambda_fitted"] = fit.fit.lambda;
      j["tau"] = fit.fit.tau;
      break;
    }
    case ModelKind::HomPo: {
      const GammaPosterior post = fit_hom_pois(in.survey, in.species, a.m.a0, a.m.b0);
      summary << "model hom-po\n";
      summary << "gamma_a " << post.a << "\n";
      summary << "gamma_b " << post.b << "\n";
      summary << "negbin_mu " << region.area * post.a / post.b << "\n";
      summary << "negbin_tau " << post.a << "\n";
      j["a"] = post.a;
      j["b"] = post.b;
      break;
    }
  }
  write_file(dir / "summary.txt", summary.str());
  write_file(dir / "fit.json", j.dump(2) + "\n");
  out << "wrote " << (dir / "summary.txt").string() << "\n";
  return kExitOk;
}

int cmd_predict(const PredictArgs& a, const Global& g, std::ostream& out) {
  if (a.fit.empty()) throw InputError("--fit is required");
  const fs::path fit_json = fs::path(a.fit) / "fit.json";
  if (!fs::is_regular_file(fit_json)) throw InputError("--fit: no fit.json in '" + a.fit + "'");
  require_draws(a.draws, "--draws");
  json j;
  ModelArgs m;
  try {
    std::ifstream f(fit_json);
    j = json::parse(f);
    m = model_from_json(j);
  } catch (const json::exception& e) {
    throw InputError("--fit: malformed fit.json: " + std::string(e.what()));
  }
  const ModelKind kind = model_from_string(m.model);
  if (a.area && kind != ModelKind::HomPo) throw InputError("--area only applies to --model hom-po");
  const Inputs in = load_inputs(m, {kind});
  const Region region = build_region(in.survey);

  std::optional<CountDistribution> dist;
  if (kind == ModelKind::HomPo) {
    const double area = a.area.value_or(region.area);
    if (!(area > 0.0)) throw InputError("--area must be positive");
    dist = predictive_hom_pois(GammaPosterior{j.at("a").get<double>(), j.at("b").get<double>()}, area);
  } else {
    const PredictionGrid cells = build_grid(region, a.cell_width, a.cell_height);
    const Targets total{cells.centers, cells.areas};
    if (kind == ModelKind::Lgcp) {
      GridSpec spec;
      spec.kind = GridSpec::Kind::Explicit;
      for (const auto& p : j.at("theta_grid")) spec.points.push_back(Hyper{p.at(0).get<double>(), p.at(1).get<double>()});
      const LgcpConfig config = lgcp_config(m, in.species);
      const LgcpFit fit = hyper_posterior(make_lgcp_model(in.survey, in.raster_ptr(), config), spec,
                                          config.theta_prior, config.laplace);
      const DrawMeans dm = lgcp_draw_means(fit, total, Targets{}, a.draws, g.seed);
      dist = CountDistribution::poisson_mixture(dm.total);
    } else {
      GamConfig config = gam_config(m, in.species, kind);
      config.lambda = j.at("lambda_fitted").get<double>();
      const GamModelFit fit = fit_gam(in.survey, in.raster_ptr(), config);
      const Eigen::MatrixXd params = sample_params(fit.fit, a.draws, stream_seed(g.seed, 1));
      if (kind == ModelKind::GamPo) {
        const DrawMeans dm = gam_draw_means(fit.design, params, total, Targets{});
        dist = CountDistribution::poisson_mixture(dm.total);
      } else {
        dist = predictive_negbin_sum(fit.design.rows(cells.centers), params, cells.areas, fit.fit.tau,
                                     stream_seed(g.seed, 2));
      }
    }
  }
  const fs::path dir = prepare_dir(a.out.empty() ? a.fit : a.out);
  std::ostringstream text;
  write_predictive(text, *dist);
  write_file(dir / "predictive.txt", text.str());
  write_summary_line(out, summarize(*dist));
  return kExitOk;
}

int cmd_cv(const CvArgs& a, const Global& g, std::ostream& out) {
  std::vector<ModelKind> kinds;
  for (const auto& name : a.models) kinds.push_back(model_from_string(name));
  if (kinds.empty()) throw InputError("--model needs at least one model");
  require_draws(a.draws, "--draws");
  const Inputs in = load_inputs(a.m, kinds);
  FoldSpec folds;
  if (a.scheme == "random")
    folds = folds_random(in.survey, a.folds, stream_seed(g.seed, 0));
  else if (a.scheme == "transect")
    folds = folds_transect(in.survey);
  else
    throw InputError("--scheme must be random or transect");

  std::vector<CvReport> reports;
  for (ModelKind kind : kinds) {
    CvConfig c;
    c.model = kind;
    c.species = in.species;
    c.lgcp = lgcp_config(a.m, in.species);
    c.gam = gam_config(a.m, in.species, kind);
    c.a0 = a.m.a0;
    c.b0 = a.m.b0;
    c.draws = a.draws;
    c.bootstrap.resamples = a.resamples;
    reports.push_back(run_cv(in.survey, in.raster_ptr(), c, folds, stream_seed(g.seed, 1)));
  }
  std::ostringstream text;
  write_cv_report(text, reports);
  if (a.out.empty()) {
    out << text.str();
  } else {
    const fs::path dir = prepare_dir(a.out);
    write_file(dir / ("cv_" + a.scheme + ".txt"), text.str());
    std::ostringstream f;
    f << "# fold photo_id\n";
    for (std::size_t k = 0; k < folds.size(); ++k)
      for (const auto& id : folds.ids(in.survey, k)) f << k << " " << id << "\n";
    write_file(dir / ("folds_" + a.scheme + ".txt"), f.str());
    out << "wrote " << (dir / ("cv_" + a.scheme + ".txt")).string() << "\n";
  }
  return kExitOk;
}

int cmd_simulate(const SimArgs& a, const Global& g, std::ostream& out) {
  SimConfig c = sim_preset(a.preset);
  if (a.transects) c.num_transects = *a.transects;
  if (a.photos) c.photos_per_transect = *a.photos;
  if (a.alpha) c.alpha = *a.alpha;
  if (a.kappa) c.kappa = *a.kappa;
  if (a.sigma2) c.sigma2 = *a.sigma2;
  c.seed = g.seed;
  const SimResult r = simulate_lgcp_survey(c);
  const fs::path dir = prepare_dir(a.out);
  std::ostringstream survey, truth;
  write_survey(survey, r.survey);
  write_file(dir / "survey.csv", survey.str());
  if (r.raster) {
    std::ostringstream raster;
    write_raster(raster, *r.raster);
    write_file(dir / "raster.grd", raster.str());
  }
  write_truth(truth, r);
  write_file(dir / "truth.txt", truth.str());
  out << "true_total " << r.true_total << "\n";
  return kExitOk;
}

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  require_file(a.pmf, "--pmf");
  if (!a.obs) throw InputError("--obs is required");
  if (*a.obs < 0) throw InputError("--obs must be a nonnegative count");
  for (double l : a.levels)
    if (!(l > 0.0 && l < 1.0)) throw InputError("--levels must lie in (0, 1)");
  std::ifstream f(a.pmf);
  const CountDistribution dist = read_predictive(f, a.pmf);
  const LogScore ls = log_score(dist, *a.obs);
  std::ostringstream text;
  text << std::setprecision(10);
  text << "observed " << *a.obs << "\n";
  text << "logScore " << ls.value << (ls.clamped ? " clamped" : "") << "\n";
  text << "CRPS " << crps(dist, *a.obs) << "\n";
  for (double l : a.levels) text << "covered_" << l << " " << (covers(dist, *a.obs, l) ? 1 : 0) << "\n";
  if (a.out.empty())
    out << text.str();
  else
    write_file(a.out, text.str());
  return kExitOk;
}

int cmd_mesh_dump(const MeshArgs& a, std::ostream& out) {
  require_file(a.survey, "--survey");
  MeshOptions options;
  options.max_edge_inner = a.max_edge_inner;
  const SurveyMesh sm = build_survey_mesh(load_survey(a.survey), options);
  std::ostringstream text;
  write_mesh_dump(text, sm.mesh, sm.dual);
  if (a.out.empty())
    out << text.str();
  else
    write_file(a.out, text.str());
  return kExitOk;
}

void add_model_options(CLI::App* cmd, ModelArgs& m) {
  cmd->add_option("--survey", m.survey, "Photo table (csv)");
  cmd->add_option("--raster", m.raster, "Ice covariate raster");
  cmd->add_option("--species", m.species, "Count column; may be omitted when there is only one");
  cmd->add_option("--covariates", m.covariates, "Comma-separated subset of intercept,ice,x,y,radius")
      ->delimiter(',');
  cmd->add_option("--a0", m.a0, "Gamma prior shape for hom-po")->capture_default_str();
  cmd->add_option("--b0", m.b0, "Gamma prior rate for hom-po")->capture_default_str();
  cmd->add_option("--knots", m.knots, "Thin-plate knots for the GAMs")->capture_default_str();
  cmd->add_option("--lambda", m.lambda, "Fixed GAM smoothing parameter (default: GCV)");
  cmd->add_option("--max-edge", m.max_edge_inner, "Inner mesh edge length in km (0: automatic)");
  cmd->add_option("--grid-points", m.grid_points, "LGCP hyperparameter grid points per axis")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--intercept-variance", m.intercept_variance, "LGCP prior variance of the intercept")
      ->capture_default_str();
  cmd->add_option("--beta-variance", m.beta_variance, "LGCP prior variance of the other fixed effects")
      ->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Abundance estimation from aerial photo surveys", "abundance"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML or INI file with option values; command-line flags take precedence");
  Global g;
  app.add_option("--seed", g.seed, "Master seed for all randomness")->capture_default_str();
  app.add_option("--threads", g.threads, "Cap on worker threads (0: all cores)")->capture_default_str();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model and write its summary and artifacts");
  add_model_options(fit_cmd, fit.m);
  fit_cmd->add_option("--model", fit.m.model, "lgcp, gam-po, gam-nb or hom-po")
      ->capture_default_str()
      ->check(CLI::IsMember(kModelNames));
  fit_cmd->add_option("--out", fit.out, "Output directory");
  fit_cmd->add_option("--median-draws", fit.median_draws, "Draws for the LGCP median intensity map")
      ->capture_default_str();
  fit_cmd->add_option("--cell-width", fit.cell_width, "Map cell width in km")->capture_default_str();
  fit_cmd->add_option("--cell-height", fit.cell_height, "Map cell height in km")->capture_default_str();

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Posterior predictive distribution of the regional total");
  pred_cmd->add_option("--fit", pred.fit, "Directory written by fit");
  pred_cmd->add_option("--out", pred.out, "Output directory (default: the fit directory)");
  pred_cmd->add_option("--draws", pred.draws, "Posterior draws K")->capture_default_str();
  pred_cmd->add_option("--cell-width", pred.cell_width, "Prediction cell width in km")->capture_default_str();
  pred_cmd->add_option("--cell-height", pred.cell_height, "Prediction cell height in km")->capture_default_str();
  pred_cmd->add_option("--area", pred.area, "Target area in km^2 for hom-po (default: the survey region)");

  CvArgs cv;
  auto* cv_cmd = app.add_subcommand("cv", "Cross-validated scores for one or more models");
  add_model_options(cv_cmd, cv.m);
  cv_cmd->add_option("--model", cv.models, "Models to compare (comma-separated)")
      ->delimiter(',')
      ->capture_default_str()
      ->check(CLI::IsMember(kModelNames));
  cv_cmd->add_option("--scheme", cv.scheme, "random or transect")
      ->capture_default_str()
      ->check(CLI::IsMember({"random", "transect"}));
  cv_cmd->add_option("--folds", cv.folds, "Folds for the random scheme")->capture_default_str();
  cv_cmd->add_option("--draws", cv.draws, "Posterior draws K per fold")->capture_default_str();
  cv_cmd->add_option("--resamples", cv.resamples, "Bootstrap resamples")->capture_default_str();
  cv_cmd->add_option("--out", cv.out, "Output directory (default: print the report)");

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a survey from a log-Gaussian Cox process");
  sim_cmd->add_option("--preset", sim.preset, "paper-like or small")
      ->capture_default_str()
      ->check(CLI::IsMember({"paper-like", "small"}));
  sim_cmd->add_option("--out", sim.out, "Output directory");
  sim_cmd->add_option("--transects", sim.transects, "Override the number of transects");
  sim_cmd->add_option("--photos-per-transect", sim.photos, "Override photos per transect");
  sim_cmd->add_option("--alpha", sim.alpha, "Override the intercept");
  sim_cmd->add_option("--kappa", sim.kappa, "Override the Matern scale (1/km)");
  sim_cmd->add_option("--sigma2", sim.sigma2, "Override the field variance");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score a predictive pmf against an observed count");
  score_cmd->add_option("--pmf", score.pmf, "File of `count probability` rows");
  score_cmd->add_option("--obs", score.obs, "Observed count");
  score_cmd->add_option("--levels", score.levels, "Interval levels for coverage")->delimiter(',');
  score_cmd->add_option("--out", score.out, "Output file (default: print)");

  MeshArgs mesh;
  auto* mesh_cmd = app.add_subcommand("mesh-dump", "Write the survey mesh and its dual weights");
  mesh_cmd->add_option("--survey", mesh.survey, "Photo table (csv)");
  mesh_cmd->add_option("--max-edge", mesh.max_edge_inner, "Inner mesh edge length in km (0: automatic)");
  mesh_cmd->add_option("--out", mesh.out, "Output file (default: print)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    set_max_threads(g.threads);
    if (*fit_cmd) return cmd_fit(fit, g, out);
    if (*pred_cmd) return cmd_predict(pred, g, out);
    if (*cv_cmd) return cmd_cv(cv, g, out);
    if (*sim_cmd) return cmd_simulate(sim, g, out);
    if (*score_cmd) return cmd_score(score, out);
    if (*mesh_cmd) return cmd_mesh_dump(mesh, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}

}  // namespace abundance::cli
