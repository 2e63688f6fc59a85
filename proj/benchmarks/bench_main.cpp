#include <vector>

#include <benchmark/benchmark.h>

#include "abundance/count_distribution.hpp"
#include "abundance/lgcp.hpp"
#include "abundance/mesh.hpp"
#include "abundance/prediction.hpp"
#include "abundance/random.hpp"
#include "abundance/simulator.hpp"

namespace {

using namespace abundance;

SimResult survey_with(std::size_t transects, std::size_t photos) {
  SimConfig c = sim_preset_small();
  c.num_transects = transects;
  c.photos_per_transect = photos;
  c.seed = 11;
  return simulate_lgcp_survey(c);
}

void BM_SurveyMesh(benchmark::State& state) {
  const SimResult sim = survey_with(static_cast<std::size_t>(state.range(0)), 11);
  for (auto _ : state) {
    SurveyMesh m = build_survey_mesh(sim.survey);
    benchmark::DoNotOptimize(m.mesh.num_nodes());
  }
  state.SetLabel(std::to_string(sim.survey.size()) + " photos");
}
BENCHMARK(BM_SurveyMesh)->Arg(3)->Arg(9)->Arg(27)->Unit(benchmark::kMillisecond);

void BM_LaplaceInner(benchmark::State& state) {
  const SimResult sim = survey_with(static_cast<std::size_t>(state.range(0)), 11);
  LgcpConfig config;
  config.covariates = {Covariate::Intercept, Covariate::Ice};
  const auto model = make_lgcp_model(sim.survey, &*sim.raster, config);
  const LaplaceProblem problem = model->problem(Hyper::from_kappa_sigma2(0.5, 0.5));
  for (auto _ : state) {
    GaussianApprox g = laplace_inner(problem);
    benchmark::DoNotOptimize(g.log_normalizer);
  }
  state.SetLabel(std::to_string(model->num_nodes()) + " nodes");
}
BENCHMARK(BM_LaplaceInner)->Arg(3)->Arg(9)->Arg(27)->Unit(benchmark::kMillisecond);

void BM_PoissonMixture(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::vector<double> mu(k);
  Engine engine = make_engine(5, 0);
  for (std::size_t i = 0; i < k; ++i) mu[i] = 140000.0 + 3000.0 * static_cast<double>(engine() % 1000) / 1000.0;
  for (auto _ : state) {
    CountDistribution d = CountDistribution::poisson_mixture(mu);
    benchmark::DoNotOptimize(d.mean());
  }
}
BENCHMARK(BM_PoissonMixture)->Arg(100)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_NegBinMixture(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::vector<double> mu(k);
  for (std::size_t i = 0; i < k; ++i) mu[i] = 5.0 + 0.001 * static_cast<double>(i);
  for (auto _ : state) {
    CountDistribution d = CountDistribution::negbin_mixture(mu, 2.0);
    benchmark::DoNotOptimize(d.mean());
  }
}
BENCHMARK(BM_NegBinMixture)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
