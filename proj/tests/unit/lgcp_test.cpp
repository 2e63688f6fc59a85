#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/special_functions/lambert_w.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <gtest/gtest.h>

#include "abundance/error.hpp"
#include "abundance/lgcp.hpp"
#include "fixtures.hpp"

namespace abundance {
namespace {

SparseMatrix scalar(double v) {
  SparseMatrix m(1, 1);
  m.insert(0, 0) = v;
  return m;
}

GaussianApprox one_node(double count, double offset, double q, double mean) {
  return laplace_inner(Eigen::VectorXd::Constant(1, count), Eigen::VectorXd::Constant(1, offset), scalar(q),
                       Eigen::VectorXd::Constant(1, mean));
}

TEST(LaplaceInner, OneNodeCountOne) {
  const GaussianApprox g = one_node(1, 1, 1, 0);
  EXPECT_NEAR(g.mode[0], 0.0, 1e-6);
  EXPECT_NEAR(Eigen::MatrixXd(g.precision)(0, 0), 2.0, 1e-6);
}

TEST(LaplaceInner, OneNodeCountZeroIsLambertW) {
  const GaussianApprox g = one_node(0, 1, 1, 0);
  const double w = boost::math::lambert_w0(1.0);
  EXPECT_NEAR(g.mode[0], -w, 1e-6);
  EXPECT_NEAR(g.mode[0], -0.5671, 1e-4);
  EXPECT_NEAR(Eigen::MatrixXd(g.precision)(0, 0), 1.0 + w, 1e-6);
}

TEST(LaplaceInner, RandomOneDimensionalCasesMatchOracles) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> um(-1.0, 1.0), uq(0.5, 4.0), ue(0.2, 5.0);
  std::uniform_int_distribution<int> uy(0, 6);
  for (int c = 0; c < 5; ++c) {
    const double m = um(rng), q = uq(rng), e = ue(rng), y = uy(rng);
    // Exact log posterior and its derivative.
    auto logpost = [&](double z) { return y * z - e * std::exp(z) - 0.5 * q * (z - m) * (z - m); };
    auto score = [&](double z) { return y - e * std::exp(z) - q * (z - m); };
    std::uintmax_t iters = 200;
    const auto [lo, hi] = boost::math::tools::toms748_solve(
        score, -20.0, 20.0, boost::math::tools::eps_tolerance<double>(50), iters);
    const double root = 0.5 * (lo + hi);
    const auto brent = boost::math::tools::brent_find_minima([&](double z) { return -logpost(z); }, -20.0, 20.0,
                                                             std::numeric_limits<double>::digits / 2);
    ASSERT_NEAR(root, brent.first, 1e-6);

    const GaussianApprox g = one_node(y, e, q, m);
    EXPECT_NEAR(g.mode[0], root, 1e-6) << "case " << c;
    // Curvature: second difference of the exact log posterior.
    const double h = 1e-4;
    const double curv = -(logpost(root + h) - 2 * logpost(root) + logpost(root - h)) / (h * h);
    EXPECT_NEAR(Eigen::MatrixXd(g.precision)(0, 0), curv, 1e-6 * std::max(1.0, curv) + 1e-5);
    EXPECT_NEAR(Eigen::MatrixXd(g.precision)(0, 0), q + e * std::exp(root), 1e-6);
    const double laplace = y * std::log(e) + logpost(root) - std::lgamma(y + 1) + 0.5 * std::log(q) -
                           0.5 * std::log(q + e * std::exp(root));
    EXPECT_NEAR(g.log_normalizer, laplace, 1e-8);
  }
}

TEST(LaplaceInner, ZeroOffsetNodesCarryNoInformation) {
  Eigen::MatrixXd q(2, 2);
  q << 2, -1, -1, 2;
  const GaussianApprox g = laplace_inner(Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0), q.sparseView(),
                                         Eigen::Vector2d(0.3, -0.2));
  EXPECT_NEAR(g.mode[0], 0.3, 1e-12);
  EXPECT_NEAR(g.mode[1], -0.2, 1e-12);
  // A positive count where nothing was exposed is impossible under the model.
  EXPECT_THROW(laplace_inner(Eigen::Vector2d(0, 5), Eigen::Vector2d(1, 0), q.sparseView(), Eigen::Vector2d::Zero()),
               InputError);
}

TEST(LaplaceInner, GaussianLikelihoodIsExactGls) {
  const int n = 6, m = 9;
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z;
  Eigen::MatrixXd b(n, n), a(m, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = z(rng);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = (i + j) % 3 == 0 ? z(rng) : 0.0;
  const Eigen::MatrixXd q = b * b.transpose() + Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd mu(n), y(m), o(m);
  for (int i = 0; i < n; ++i) mu[i] = z(rng);
  for (int i = 0; i < m; ++i) {
    y[i] = z(rng);
    o[i] = 0.5 + std::abs(z(rng));
  }
  LaplaceProblem p;
  p.a = a.sparseView();
  p.y = y;
  p.offset = o;
  p.q = q.sparseView();
  p.mu = mu;
  p.likelihood = Likelihood::Gaussian;
  const GaussianApprox g = laplace_inner(p);

  const Eigen::MatrixXd w = o.asDiagonal();
  const Eigen::MatrixXd h = q + a.transpose() * w * a;
  const Eigen::VectorXd gls = h.ldlt().solve(q * mu + a.transpose() * w * y);
  EXPECT_LT((g.mode - gls).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((Eigen::MatrixXd(g.precision) - h).cwiseAbs().maxCoeff(), 1e-10);

  // Marginal likelihood: y ~ N(A mu, W^-1 + A Q^-1 A').
  const Eigen::MatrixXd s = Eigen::MatrixXd(o.cwiseInverse().asDiagonal()) + a * q.ldlt().solve(a.transpose());
  const Eigen::LLT<Eigen::MatrixXd> ls(s);
  const Eigen::VectorXd r = y - a * mu;
  const double logdet = 2.0 * ls.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double exact = -0.5 * r.dot(ls.solve(r)) - 0.5 * logdet - 0.5 * m * std::log(2 * M_PI);
  EXPECT_NEAR(g.log_normalizer, exact, 1e-8);
}

TEST(LaplaceInner, ConstrainedGaussianMatchesConditionedGls) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(3, 3) * 2.0;
  q(0, 1) = q(1, 0) = -0.5;
  LaplaceProblem p;
  p.a = Eigen::MatrixXd::Identity(3, 3).sparseView();
  p.y = Eigen::Vector3d(1.0, -2.0, 4.0);
  p.offset = Eigen::Vector3d(1.0, 1.0, 1.0);
  p.q = q.sparseView();
  p.mu = Eigen::Vector3d::Zero();
  p.likelihood = Likelihood::Gaussian;
  p.constraint = LinearConstraint{Eigen::Vector3d(1.0, 2.0, 1.0)};
  const GaussianApprox g = laplace_inner(p);
  const Eigen::Vector3d a(1.0, 2.0, 1.0);
  EXPECT_NEAR(a.dot(g.mode), 0.0, 1e-10);
  // Conditioning the unconstrained posterior N(x, H^-1) on a'z = 0.
  const Eigen::MatrixXd h = q + Eigen::MatrixXd::Identity(3, 3);
  const Eigen::Vector3d x = h.ldlt().solve(p.y);
  const Eigen::Vector3d ha = h.ldlt().solve(a);
  const Eigen::Vector3d cond = x - ha * (a.dot(x) / a.dot(ha));
  EXPECT_LT((g.mode - cond).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LaplaceInner, ObjectiveDecreasesMonotonically) {
  LgcpConfig cfg;
  cfg.covariates = {Covariate::Intercept, Covariate::X};
  const auto model = make_lgcp_model(testing::toy_survey(3, 4), nullptr, cfg);
  for (const Hyper h : {Hyper{1.3, -2.6}, Hyper{-1.0, 0.5}, Hyper{3.0, -4.0}}) {
    const GaussianApprox g = laplace_inner(model->problem(h));
    ASSERT_GE(g.objective_history.size(), 2u);
    for (std::size_t k = 1; k < g.objective_history.size(); ++k)
      EXPECT_LE(g.objective_history[k], g.objective_history[k - 1]);
    EXPECT_LE(g.gradient_norm, 1e-6);
  }
}

TEST(LaplaceInner, NonFiniteInputsThrow) {
  EXPECT_THROW(one_node(1, 1, 1, std::numeric_limits<double>::quiet_NaN()), NumericalError);
}

TEST(NormalizeLogWeights, SingleEqualAndShifted) {
  const std::vector<double> one{-123.0};
  EXPECT_EQ(normalize_log_weights(one), std::vector<double>{1.0});
  const std::vector<double> two{4.2, 4.2};
  EXPECT_EQ(normalize_log_weights(two), (std::vector<double>{0.5, 0.5}));
  const std::vector<double> l{-1.0, 0.5, 2.0, -std::numeric_limits<double>::infinity()};
  std::vector<double> shifted = l;
  for (double& x : shifted) x += 750.0;
  const auto w1 = normalize_log_weights(l), w2 = normalize_log_weights(shifted);
  for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(w1[i], w2[i], 1e-15);
  EXPECT_EQ(w1[3], 0.0);
  double sum = 0.0;
  for (double w : w1) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(LgcpConfig, DefaultPriors) {
  const LgcpConfig cfg;
  EXPECT_EQ(cfg.theta_prior.mean_log_tau, 1.328);
  EXPECT_EQ(cfg.theta_prior.mean_log_kappa, -2.594);
  EXPECT_EQ(cfg.theta_prior.var_log_tau, 10.0);
  EXPECT_EQ(cfg.theta_prior.var_log_kappa, 10.0);
  EXPECT_EQ(cfg.covariates.size(), 5u);
  EXPECT_EQ(cfg.intercept_variance, 1e6);
  const CovariateRaster raster({-10.0, -10.0}, 1.0, 1.0, 40, 40, std::vector<double>(1600, 0.5));
  const auto model = make_lgcp_model(testing::toy_survey(), &raster, cfg);
  const Eigen::VectorXd& pp = model->design().prior_precision;
  ASSERT_EQ(pp.size(), 5);
  EXPECT_DOUBLE_EQ(pp[0], 1e-6);
  for (int c = 1; c < 5; ++c) EXPECT_DOUBLE_EQ(1.0 / pp[c], 1000.0);
}

TEST(MakeDesign, IceWithoutRasterIsInputError) {
  const Mesh m = regular_mesh(Rect{0, 0, 1, 1}, 1, 1);
  EXPECT_THROW(make_design(m, default_covariates(), nullptr), InputError);
  EXPECT_THROW(make_design(m, {Covariate::X, Covariate::X}, nullptr), InputError);
}

TEST(HyperPosterior, SingleGridPointHasWeightOne) {
  LgcpConfig cfg;
  cfg.covariates = {Covariate::Intercept};
  const auto model = make_lgcp_model(testing::toy_survey(), nullptr, cfg);
  GridSpec grid;
  grid.kind = GridSpec::Kind::Explicit;
  grid.points = {Hyper{1.0, -2.0}};
  const LgcpFit fit = hyper_posterior(model, grid, cfg.theta_prior);
  ASSERT_EQ(fit.grid.size(), 1u);
  EXPECT_EQ(fit.grid[0].weight, 1.0);
}

TEST(HyperPosterior, AutoGridWeightsSumToOne) {
  LgcpConfig cfg;
  cfg.covariates = {Covariate::Intercept, Covariate::Y};
  const auto model = make_lgcp_model(testing::toy_survey(3, 4), nullptr, cfg);
  const LgcpFit fit = hyper_posterior(model, cfg.grid, cfg.theta_prior);
  EXPECT_EQ(fit.grid.size(), 25u);
  double sum = 0.0, best = -std::numeric_limits<double>::infinity();
  for (const GridPoint& g : fit.grid) {
    EXPECT_GE(g.weight, 0.0);
    sum += g.weight;
    best = std::max(best, g.log_density);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  // The mode found by the search is on the grid and no grid point beats it by much.
  const ThetaEvaluation at_mode = evaluate_theta(*model, fit.theta_mode, cfg.theta_prior);
  EXPECT_GE(at_mode.log_density, best - 0.05);
}

TEST(FitLgcp, AllZeroCountsPullIntensityDown) {
  const Survey s = testing::grid_survey(3, 4, 0.226, 0.346, 0.5, 5.6, [](std::size_t, std::size_t) { return 0; });
  LgcpConfig cfg;
  cfg.covariates = {Covariate::Intercept, Covariate::X, Covariate::Y};
  cfg.grid.kind = GridSpec::Kind::Explicit;
  cfg.grid.points = {Hyper{1.328, -2.594}};
  const LgcpFit fit = fit_lgcp(s, nullptr, cfg);
  const Eigen::VectorXd eta = fit.model->predictor(fit.model->mesh().mesh.nodes) * fit.approx[0]->mode;
  // Prior mean of the log-intensity is 0 at every node.
  EXPECT_LT(eta.maxCoeff(), 0.0);
}

TEST(SampleLatent, MeanConstraintAndDeterminism) {
  LgcpConfig cfg;
  cfg.covariates = {Covariate::Intercept};
  cfg.grid.kind = GridSpec::Kind::Explicit;
  cfg.grid.points = {Hyper{0.5, -1.0}};
  const LgcpFit fit = fit_lgcp(testing::toy_survey(2, 3), nullptr, cfg);
  const std::size_t k = 4000;
  const Eigen::MatrixXd z = sample_latent(fit, k, 77);
  const Eigen::VectorXd mode = fit.approx[0]->mode;
  const auto nn = static_cast<Eigen::Index>(fit.model->num_nodes());
  const Eigen::VectorXd w = fit.model->constraint().a.head(nn);
  for (Eigen::Index c = 0; c < z.cols(); ++c) ASSERT_LT(std::abs(w.dot(z.col(c).head(nn))), 1e-6);
  const Eigen::VectorXd mean = z.rowwise().mean();
  const Eigen::VectorXd sd = ((z.colwise() - mean).array().square().rowwise().sum() / (k - 1.0)).sqrt();
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    EXPECT_LE(std::abs(mean[i] - mode[i]), 3.0 * sd[i] / std::sqrt(static_cast<double>(k)) + 1e-12) << i;
  EXPECT_EQ(sample_latent(fit, 7, 5), sample_latent(fit, 7, 5));
}

TEST(SampleLatent, DiagonalPrecisionAboutMode) {
  LgcpConfig cfg;
  cfg.covariates = {Covariate::Intercept};
  cfg.grid.kind = GridSpec::Kind::Explicit;
  cfg.grid.points = {Hyper{0.0, 0.0}};
  LgcpFit fit = fit_lgcp(testing::toy_survey(1, 2), nullptr, cfg);
  const auto d = static_cast<Eigen::Index>(fit.model->dim());
  GaussianApprox& ap = *fit.approx[0];
  SparseMatrix diag(d, d);
  diag.setIdentity();
  ap.precision = diag * 4.0;
  // A mode satisfying the constraint is left unchanged by conditioning on average.
  ap.mode = Eigen::VectorXd::Zero(d);
  ap.mode[d - 1] = 2.5;
  const std::size_t k = 20000;
  const Eigen::MatrixXd z = sample_latent(fit, k, 3);
  const double mean = z.row(d - 1).mean();
  EXPECT_NEAR(mean, 2.5, 3.0 * 0.5 / std::sqrt(static_cast<double>(k)));
}

// Observed-at-every-node data simulated from the field at known theta: the
// grid argmax should land within one grid step of the truth.
TEST(HyperPosterior, RecoversTrueThetaOnSimulatedFields) {
  const Mesh mesh = regular_mesh(Rect{0, 0, 10, 10}, 20, 20);
  SurveyMesh sm;
  sm.mesh = mesh;
  sm.dual = dual_cells(mesh);
  sm.fem = fem_matrices(mesh);
  const Hyper truth = Hyper::from_kappa_sigma2(1.0, 1.0);
  const SparseMatrix q = assemble_precision(sm.fem, truth);
  const auto nn = static_cast<Eigen::Index>(mesh.num_nodes());
  const LinearConstraint con{Eigen::Map<const Eigen::VectorXd>(sm.dual.weights.data(), nn)};
  const double step = 0.5;
  std::vector<double> lt, lk;
  for (int i = -3; i <= 3; ++i) {
    lt.push_back(truth.log_tau + step * i);
    lk.push_back(truth.log_kappa + step * i);
  }
  const GridSpec grid = GridSpec::rectangular(lt, lk);
  ThetaPrior vague{truth.log_tau, truth.log_kappa, 100.0, 100.0};
  std::vector<std::size_t> nodes(static_cast<std::size_t>(nn));
  std::iota(nodes.begin(), nodes.end(), 0);
  const std::vector<double> exposure(nodes.size(), 20.0);

  int hits = 0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    const Eigen::VectorXd f = sample_gmrf(q, Eigen::VectorXd::Zero(nn), 1, con, 1000 + r).col(0);
    Engine engine = make_engine(55, static_cast<std::uint64_t>(r));
    std::vector<std::int64_t> counts(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i)
      counts[i] = boost::random::poisson_distribution<std::int64_t>(20.0 * std::exp(f[static_cast<Eigen::Index>(i)]))(engine);
    DesignInfo design = make_design(mesh, {Covariate::Intercept}, nullptr);
    const auto model = std::make_shared<const LgcpModel>(sm, std::move(design), nodes, counts, exposure);
    const LgcpFit fit = hyper_posterior(model, grid, vague);
    std::size_t best = 0;
    for (std::size_t g = 1; g < fit.grid.size(); ++g)
      if (fit.grid[g].weight > fit.grid[best].weight) best = g;
    const Hyper h = fit.grid[best].theta;
    if (std::abs(h.log_tau - truth.log_tau) <= step + 1e-9 && std::abs(h.log_kappa - truth.log_kappa) <= step + 1e-9)
      ++hits;
  }
  EXPECT_GE(hits, 16) << hits << " of " << reps;
}

TEST(WriteFitSummary, ListsGridAndFixedEffects) {
  LgcpConfig cfg;
  cfg.covariates = {Covariate::Intercept};
  cfg.grid = GridSpec::rectangular(std::vector<double>{0.0, 1.0}, std::vector<double>{-1.0});
  const LgcpFit fit = fit_lgcp(testing::toy_survey(), nullptr, cfg);
  std::ostringstream out;
  write_fit_summary(out, fit);
  EXPECT_NE(out.str().find("GRID"), std::string::npos);
  EXPECT_NE(out.str().find("range_km"), std::string::npos);
  EXPECT_NE(out.str().find("intercept"), std::string::npos);
}

}  // namespace
}  // namespace abundance
