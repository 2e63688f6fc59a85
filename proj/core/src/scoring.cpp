#include "abundance/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include <boost/random/uniform_int_distribution.hpp>

#include "abundance/error.hpp"
#include "abundance/random.hpp"

namespace abundance {

LogScore log_score(const CountDistribution& dist, std::int64_t y) {
  if (y < 0) throw InputError("observed count must be nonnegative");
  const double g = dist.pmf(y);
  if (g < kLogScoreFloor) return {-std::log(kLogScoreFloor), true};
  return {-std::log(g), false};
}

double crps(const CountDistribution& dist, std::int64_t y) {
  if (y < 0) throw InputError("observed count must be nonnegative");
  const auto cdf = dist.cdf_values();
  const std::int64_t top = std::max<std::int64_t>(dist.max_support(), y);
  double s = 0.0;
  for (std::int64_t k = 0; k <= top; ++k) {
    const double g = k <= dist.max_support() ? cdf[static_cast<std::size_t>(k)] : 1.0;
    const double d = g - (k >= y ? 1.0 : 0.0);
    s += d * d;
  }
  return s;
}

namespace {

double percentile(std::vector<double>& v, double p) {
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

Interval bootstrap_ci(std::span<const double> scores, const BootstrapOptions& options, std::uint64_t seed) {
  const std::vector<double> w(scores.size(), 1.0);
  return bootstrap_ci(scores, w, options, seed);
}

Interval bootstrap_ci(std::span<const double> scores, std::span<const double> weights,
                      const BootstrapOptions& options, std::uint64_t seed) {
  if (scores.empty()) throw InputError("bootstrap needs at least one score");
  if (weights.size() != scores.size()) throw InputError("bootstrap weights disagree with scores");
  if (options.resamples < 1) throw InputError("bootstrap needs at least one resample");
  if (!(options.level > 0.0 && options.level < 1.0)) throw InputError("bootstrap level must lie in (0, 1)");
  Engine engine = make_engine(seed, 0);
  boost::random::uniform_int_distribution<std::size_t> pick(0, scores.size() - 1);
  std::vector<double> means(options.resamples);
  for (std::size_t b = 0; b < options.resamples; ++b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const std::size_t j = pick(engine);
      num += weights[j] * scores[j];
      den += weights[j];
    }
    means[b] = den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
  }
  std::erase_if(means, [](double m) { return std::isnan(m); });
  if (means.empty()) throw InputError("bootstrap weights are all zero");
  const double alpha = 1.0 - options.level;
  Interval ci{percentile(means, alpha / 2.0), percentile(means, 1.0 - alpha / 2.0)};
  // Guard against interpolation rounding outside the data range.
  const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
  ci.lo = std::clamp(ci.lo, *mn, *mx);
  ci.hi = std::clamp(ci.hi, *mn, *mx);
  return ci;
}

bool covers(const CountDistribution& dist, std::int64_t y, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("coverage level must lie in (0, 1)");
  return y >= dist.quantile((1.0 - level) / 2.0) && y <= dist.quantile((1.0 + level) / 2.0);
}

std::vector<double> coverage(std::span<const CountDistribution> dists, std::span<const std::int64_t> ys,
                             std::span<const double> levels) {
  if (dists.size() != ys.size()) throw InputError("coverage needs one observation per distribution");
  if (dists.empty()) throw InputError("coverage needs at least one unit");
  std::vector<double> out;
  for (double level : levels) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < dists.size(); ++i) hit += covers(dists[i], ys[i], level) ? 1 : 0;
    out.push_back(static_cast<double>(hit) / static_cast<double>(dists.size()));
  }
  return out;
}

UnitScore score_unit(const CountDistribution& dist, std::int64_t y, std::span<const double> levels) {
  UnitScore u;
  u.observed = y;
  u.predictive_mean = dist.mean();
  const LogScore ls = log_score(dist, y);
  u.log_score = ls.value;
  u.clamped = ls.clamped;
  u.crps = crps(dist, y);
  for (double l : levels) u.covered.push_back(covers(dist, y, l));
  return u;
}

ScoreTable make_score_table(std::vector<UnitScore> units, std::size_t num_folds,
                            std::span<const double> levels, const BootstrapOptions& options,
                            std::uint64_t seed) {
  if (units.empty()) throw InputError("score table needs at least one unit");
  ScoreTable t;
  t.levels.assign(levels.begin(), levels.end());
  t.fold_log.assign(num_folds, 0.0);
  t.fold_crps.assign(num_folds, 0.0);
  t.fold_sizes.assign(num_folds, 0);
  t.covered.assign(levels.size(), 0);
  double sl = 0.0, sc = 0.0;
  for (const UnitScore& u : units) {
    if (u.fold >= num_folds) throw InputError("unit fold index out of range");
    if (u.covered.size() != levels.size()) throw InputError("unit coverage flags disagree with levels");
    t.fold_log[u.fold] += u.log_score;
    t.fold_crps[u.fold] += u.crps;
    ++t.fold_sizes[u.fold];
    sl += u.log_score;
    sc += u.crps;
    for (std::size_t l = 0; l < levels.size(); ++l) t.covered[l] += u.covered[l] ? 1 : 0;
    t.clamped += u.clamped ? 1 : 0;
  }
  const double n = static_cast<double>(units.size());
  t.mean_log = sl / n;
  t.mean_crps = sc / n;
  std::vector<double> fl, fc, fw;
  for (std::size_t f = 0; f < num_folds; ++f) {
    if (t.fold_sizes[f] == 0) {
      t.fold_log[f] = t.fold_crps[f] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    t.fold_log[f] /= static_cast<double>(t.fold_sizes[f]);
    t.fold_crps[f] /= static_cast<double>(t.fold_sizes[f]);
    fl.push_back(t.fold_log[f]);
    fc.push_back(t.fold_crps[f]);
    fw.push_back(static_cast<double>(t.fold_sizes[f]));
  }
  t.ci_log = bootstrap_ci(fl, fw, options, stream_seed(seed, 0));
  t.ci_crps = bootstrap_ci(fc, fw, options, stream_seed(seed, 1));
  t.units = std::move(units);
  return t;
}

void write_score_table(std::ostream& out, const std::string& title,
                       std::span<const std::pair<std::string, const ScoreTable*>> rows) {
  out << "## " << title << "\n";
  out << "model units CRPS (lo, hi) logScore (lo, hi)";
  if (!rows.empty() && rows.front().second)
    for (double l : rows.front().second->levels) out << " cover" << l;
  out << " clamped\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& [name, t] : rows) {
    if (!t) {
      out << name << " incomplete\n";
      continue;
    }
    out << name << " " << t->units.size() << " " << t->mean_crps << " (" << t->ci_crps.lo << ", " << t->ci_crps.hi
        << ") " << t->mean_log << " (" << t->ci_log.lo << ", " << t->ci_log.hi << ")";
    for (std::size_t c : t->covered) out << " " << static_cast<double>(c) / static_cast<double>(t->units.size());
    out << " " << t->clamped << "\n";
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace abundance
