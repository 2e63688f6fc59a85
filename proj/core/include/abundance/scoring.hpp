#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "abundance/count_distribution.hpp"

namespace abundance {

/// Floor applied to g(y) before taking the log.
inline constexpr double kLogScoreFloor = 1e-300;

struct LogScore {
  double value = 0.0;
  bool clamped = false;  ///< g(y) was below the floor
};

/// -log g(y).
LogScore log_score(const CountDistribution& dist, std::int64_t y);

/// sum_k (G(k) - 1{k >= y})^2 over the materialised support (and up to y).
double crps(const CountDistribution& dist, std::int64_t y);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct BootstrapOptions {
  std::size_t resamples = 10000;
  double level = 0.90;
};

/// Percentile interval of the means of `resamples` resamples (with
/// replacement) of the scores.
Interval bootstrap_ci(std::span<const double> scores, const BootstrapOptions& options, std::uint64_t seed);
/// As above, but each resample mean is weighted (e.g. by fold size).
Interval bootstrap_ci(std::span<const double> scores, std::span<const double> weights,
                      const BootstrapOptions& options, std::uint64_t seed);

/// y within [q_{(1-L)/2}, q_{(1+L)/2}].
bool covers(const CountDistribution& dist, std::int64_t y, double level);

/// Fraction of units covered at each level.
std::vector<double> coverage(std::span<const CountDistribution> dists, std::span<const std::int64_t> ys,
                             std::span<const double> levels);

/// Scores of one predicted unit (a photo or an aggregate).
struct UnitScore {
  std::size_t fold = 0;
  std::string unit;
  std::int64_t observed = 0;
  double predictive_mean = 0.0;
  double log_score = 0.0;
  bool clamped = false;
  double crps = 0.0;
  std::vector<bool> covered;  ///< per level
};

UnitScore score_unit(const CountDistribution& dist, std::int64_t y, std::span<const double> levels);

/// Per-unit scores with fold means, bootstrap intervals and coverage.
struct ScoreTable {
  std::vector<UnitScore> units;
  std::vector<double> levels;
  std::vector<double> fold_log;   ///< mean per fold (NaN for empty folds)
  std::vector<double> fold_crps;
  std::vector<std::size_t> fold_sizes;
  double mean_log = 0.0;   ///< mean over units
  double mean_crps = 0.0;
  Interval ci_log;
  Interval ci_crps;
  std::vector<std::size_t> covered;  ///< per level
  std::size_t clamped = 0;
};

/// Bootstrap resamples folds (weighted by their unit counts), which reduces to
/// plain resampling when every fold holds one unit.
ScoreTable make_score_table(std::vector<UnitScore> units, std::size_t num_folds,
                            std::span<const double> levels, const BootstrapOptions& options,
                            std::uint64_t seed);

/// Rows are models; columns CRPS and logScore with interval bounds, then
/// coverage per level.
void write_score_table(std::ostream& out, const std::string& title,
                       std::span<const std::pair<std::string, const ScoreTable*>> rows);

}  // namespace abundance
