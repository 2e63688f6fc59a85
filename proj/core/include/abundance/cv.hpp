#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abundance/baselines.hpp"
#include "abundance/gam.hpp"
#include "abundance/lgcp.hpp"
#include "abundance/scoring.hpp"
#include "abundance/survey.hpp"

namespace abundance {

enum class FoldKind { Random, Transect };
std::string to_string(FoldKind k);

/// Partition of the survey's photos (indices into Survey::photos()).
struct FoldSpec {
  FoldKind kind = FoldKind::Random;
  std::vector<std::vector<std::size_t>> folds;

  std::size_t size() const { return folds.size(); }
  std::vector<std::string> ids(const Survey& survey, std::size_t fold) const;
};

/// Random partition into k folds whose sizes differ by at most one.
FoldSpec folds_random(const Survey& survey, std::size_t k, std::uint64_t seed);
/// One fold per transect.
FoldSpec folds_transect(const Survey& survey);

enum class ModelKind { Lgcp, GamPo, GamNb, HomPo };
std::string to_string(ModelKind m);
ModelKind model_from_string(const std::string& name);

struct CvConfig {
  ModelKind model = ModelKind::HomPo;
  std::string species;
  LgcpConfig lgcp;
  GamConfig gam;
  double a0 = 10.0;
  double b0 = 10.0;
  std::size_t draws = 2000;
  std::vector<double> levels{0.5, 0.9};
  BootstrapOptions bootstrap;
  double tail = kDefaultTail;
};

/// A model fitted to the retained photos of one fold.
struct FoldModel {
  ModelKind kind = ModelKind::HomPo;
  std::optional<LgcpFit> lgcp;
  std::optional<GamModelFit> gam;
  std::optional<GammaPosterior> hom;

  /// Every number that defines the fit, for identity checks.
  std::vector<double> fingerprint() const;
};

/// Fits the configured model on all photos except `held_out`.
FoldModel fit_fold(const Survey& survey, const CovariateRaster* raster, const CvConfig& config,
                   std::span<const std::size_t> held_out);

/// Photo-level predictives for the held-out photos and the predictive of their sum.
struct FoldPredictions {
  std::vector<CountDistribution> photos;
  std::optional<CountDistribution> aggregate;
};

FoldPredictions predict_fold(const FoldModel& model, const Survey& survey, std::span<const std::size_t> held_out,
                             const CvConfig& config, std::uint64_t seed);

struct FoldStatus {
  bool ok = true;
  std::string error;
};

struct CvReport {
  ModelKind model = ModelKind::HomPo;
  FoldKind scheme = FoldKind::Random;
  std::size_t num_folds = 0;
  std::vector<FoldStatus> status;
  bool complete = true;
  std::optional<ScoreTable> photo;
  std::optional<ScoreTable> aggregate;
};

/// Fold seeds are stream_seed(seed, fold index). Failed folds are flagged and
/// left out of the tables.
CvReport run_cv(const Survey& survey, const CovariateRaster* raster, const CvConfig& config,
                const FoldSpec& folds, std::uint64_t seed);

/// Photo-level and aggregate-level blocks for one scheme.
void write_cv_report(std::ostream& out, std::span<const CvReport> reports);

}  // namespace abundance
