#include <doctest.h>

#include <Eigen/Dense>
#include <atomic>
#include <cmath>

#include "helpers.hpp"
#include "mixsel/design.hpp"
#include "mixsel/glm.hpp"
#include "mixsel/parallel.hpp"

using namespace mixsel;
using mixsel::test::fixture;
using mixsel::test::simulate_grouped;

namespace {

// Direct dense evaluation of the profiled (restricted) criterion at theta.
double dense_criterion(const DesignMatrices& dm, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& y, bool reml) {
  Eigen::MatrixXd L = Eigen::MatrixXd(lambda_factor(dm, theta));
  Eigen::MatrixXd V0 = Eigen::MatrixXd::Identity(dm.n, dm.n);
  if (dm.q > 0) {
    Eigen::MatrixXd ZL = Eigen::MatrixXd(dm.Z) * L;
    V0 += ZL * ZL.transpose();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(V0);
  Eigen::MatrixXd V0inv = llt.solve(Eigen::MatrixXd::Identity(dm.n, dm.n));
  Eigen::MatrixXd XtVX = dm.X.transpose() * V0inv * dm.X;
  Eigen::VectorXd beta = XtVX.ldlt().solve(dm.X.transpose() * V0inv * y);
  Eigen::VectorXd r = y - dm.X * beta;
  double r2 = r.dot(V0inv * r);
  double m = reml ? dm.n - dm.p : dm.n;
  double logdet_v0 = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  double logdet_x = reml ? std::log(XtVX.determinant()) : 0.0;
  return logdet_v0 + logdet_x + m * (1.0 + std::log(2.0 * M_PI * r2 / m));
}

}  // namespace

TEST_CASE("lmm fit: sleepstudy correlated intercept-slope model") {
  Dataset d = fixture("sleepstudy.csv");
  FittedModel m = fit_lmm(parse_formula("Reaction ~ Days + (1 + Days | Subject)"), d);
  CHECK(m.converged);
  CHECK(m.criterion == doctest::Approx(1743.6282719585).epsilon(1e-8));
  CHECK(m.beta[0] == doctest::Approx(251.40510).epsilon(1e-5));
  CHECK(m.beta[1] == doctest::Approx(10.46729).epsilon(1e-5));
  CHECK(std::sqrt(m.sigma2) == doctest::Approx(25.59182).epsilon(1e-5));
  CHECK(m.theta[0] == doctest::Approx(0.96673295).epsilon(1e-3));
  CHECK(m.theta[1] == doctest::Approx(0.01516905).epsilon(5e-2));
  CHECK(m.theta[2] == doctest::Approx(0.23090959).epsilon(1e-3));
  CHECK(conditional_loglik(m) == doctest::Approx(-824.506970).epsilon(1e-7));

  // the reported criterion matches an independent dense evaluation at theta-hat
  double dense = dense_criterion(m.dm(), m.theta, m.y, true);
  CHECK(m.criterion == doctest::Approx(dense).epsilon(1e-10));

  // and theta-hat is a local minimum of the dense criterion
  for (int j = 0; j < 3; ++j) {
    for (double s : {-1.0, 1.0}) {
      Eigen::VectorXd th = m.theta;
      th[j] += s * 1e-3;
      CHECK(dense_criterion(m.dm(), th, m.y, true) >= m.criterion - 1e-7);
    }
  }
}

TEST_CASE("lmm fit: uncorrelated and intercept-only reductions") {
  Dataset d = fixture("sleepstudy.csv");
  FittedModel m2 = fit_lmm(parse_formula("Reaction ~ Days + (1 | Subject) + (0 + Days | Subject)"), d);
  CHECK(m2.converged);
  CHECK(m2.criterion == doctest::Approx(1743.6692935813).epsilon(1e-8));
  FittedModel m3 = fit_lmm(parse_formula("Reaction ~ Days + (1 | Subject)"), d);
  CHECK(m3.converged);
  CHECK(m3.criterion == doctest::Approx(1786.4650853949).epsilon(1e-8));
}

TEST_CASE("lmm fit: ML criterion matches the dense oracle") {
  Dataset d = fixture("sleepstudy.csv");
  FittedModel m = fit_lmm(parse_formula("Reaction ~ Days + (1 + Days | Subject)"), d, false);
  CHECK(m.converged);
  CHECK(!m.reml);
  double dense = dense_criterion(m.dm(), m.theta, m.y, false);
  CHECK(m.criterion == doctest::Approx(dense).epsilon(1e-10));
  CHECK(m.criterion < 1743.6282719585);  // ML deviance sits below the REML criterion here
}

TEST_CASE("lmm fit: simulated data, dense-oracle agreement and warm start") {
  Dataset d = simulate_grouped(20240701, 8, 6, 1.2);
  FittedModel m = fit_lmm(parse_formula("y ~ x + (1 | g)"), d);
  CHECK(m.converged);
  CHECK(m.criterion == doctest::Approx(dense_criterion(m.dm(), m.theta, m.y, true)).epsilon(1e-10));

  FitControl ctl;
  ctl.warm_theta = m.theta;
  FittedModel warm = fit_lmm_design(m.design, m.formula, m.y, true, ctl);
  CHECK(warm.converged);
  CHECK(warm.criterion == doctest::Approx(m.criterion).epsilon(1e-9));
  CHECK(warm.objective_evals < m.objective_evals);
}

TEST_CASE("lmm fit: fixed-effects-only formula matches ordinary least squares") {
  Dataset d = fixture("sleepstudy.csv");
  FittedModel m = fit_lmm(parse_formula("Reaction ~ Days"), d);
  CHECK(m.q() == 0);
  Eigen::VectorXd beta_ols =
      (m.dm().X.transpose() * m.dm().X).ldlt().solve(m.dm().X.transpose() * m.y);
  CHECK((m.beta - beta_ols).cwiseAbs().maxCoeff() < 1e-9);
  // REML residual variance: RSS / (n - p)
  double rss = (m.y - m.dm().X * beta_ols).squaredNorm();
  CHECK(m.sigma2 == doctest::Approx(rss / (m.n() - m.p())).epsilon(1e-9));
}

TEST_CASE("glmm fit: grouseticks poisson three-intercept model") {
  Dataset d = fixture("grouseticks.csv");
  FittedModel m = fit_glmm(
      parse_formula("TICKS ~ YEAR + HEIGHT + (1 | BROOD) + (1 | INDEX) + (1 | LOCATION)"), d,
      Family::poisson);
  CHECK(m.converged);
  CHECK(m.criterion == doctest::Approx(1833.482).epsilon(1e-5));
  CHECK(m.beta[0] == doctest::Approx(0.472338).epsilon(2e-3));
  CHECK(m.beta[1] == doctest::Approx(-0.480267).epsilon(2e-3));
  CHECK(m.beta[2] == doctest::Approx(-0.025715).epsilon(2e-3));
  // variances: theta^2 on scalar blocks (formula order BROOD, INDEX, LOCATION)
  CHECK(m.theta[0] * m.theta[0] == doctest::Approx(1.4664).epsilon(5e-3));
  CHECK(m.theta[1] * m.theta[1] == doctest::Approx(0.29789).epsilon(5e-3));
  CHECK(std::abs(m.theta[2]) < 1e-4);
  CHECK(conditional_loglik(m) == doctest::Approx(-572.0130).epsilon(1e-4));

  // the spherical modes satisfy the penalized score equation at the optimum
  Eigen::SparseMatrix<double> Lam = lambda_factor(m.dm(), m.theta);
  Eigen::MatrixXd U = Eigen::MatrixXd(m.dm().Z) * Eigen::MatrixXd(Lam);
  Eigen::VectorXd mu = m.mu();
  Eigen::VectorXd grad = U.transpose() * (m.y - mu) - m.s;
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-6);
  // and u = Lambda s
  CHECK((m.u - Lam * m.s).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("glmm fit: warm start reproduces the optimum with fewer evaluations") {
  Dataset d = fixture("grouseticks.csv");
  ModelFormula f = parse_formula("TICKS ~ YEAR + HEIGHT + (1 | BROOD)");
  FittedModel cold = fit_glmm(f, d, Family::poisson);
  FitControl ctl;
  ctl.warm_theta = cold.theta;
  ctl.warm_beta = cold.beta;
  ctl.warm_s = cold.s;
  FittedModel warm = fit_glmm_design(cold.design, f, cold.y, Family::poisson, ctl);
  CHECK(warm.converged);
  CHECK(warm.criterion == doctest::Approx(cold.criterion).epsilon(1e-7));
  CHECK(warm.objective_evals < cold.objective_evals);
}

TEST_CASE("glmm fit: fixed-effects-only poisson equals the IRLS oracle") {
  Dataset d = fixture("grouseticks.csv");
  FittedModel m = fit_glmm(parse_formula("TICKS ~ YEAR + HEIGHT"), d, Family::poisson);
  GlmFit oracle = glm_irls(m.dm().X, m.y, Family::poisson);
  REQUIRE(oracle.converged);
  CHECK((m.beta - oracle.beta).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(conditional_loglik(m) == doctest::Approx(oracle.loglik).epsilon(1e-9));
}

TEST_CASE("conditional_loglik: gaussian density sum recomputed by hand") {
  Dataset d = simulate_grouped(77, 6, 5, 0.8);
  FittedModel m = fit_lmm(parse_formula("y ~ x + (1 | g)"), d);
  Eigen::VectorXd res = m.y - m.eta();
  double hand = 0.0;
  for (int i = 0; i < m.n(); ++i)
    hand += -0.5 * std::log(2.0 * M_PI * m.sigma2) - res[i] * res[i] / (2.0 * m.sigma2);
  CHECK(conditional_loglik(m) == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("bernoulli glmm: small simulated fit is sane and deterministic") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  int levels = 8, per = 6, n = levels * per;
  Eigen::VectorXd x(n), y(n);
  std::vector<std::string> g;
  std::uniform_real_distribution<double> unif;
  int i = 0;
  for (int l = 0; l < levels; ++l) {
    double b = 1.0 * nd(rng);
    for (int r = 0; r < per; ++r, ++i) {
      x[i] = nd(rng);
      double eta = -0.3 + 0.8 * x[i] + b;
      y[i] = unif(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    }
    g.insert(g.end(), per, "g" + std::to_string(l));
  }
  Dataset d = make_dataset({{"y", y}, {"x", x}}, {{"g", g}});
  FittedModel a = fit_glmm(parse_formula("y ~ x + (1 | g)"), d, Family::bernoulli);
  FittedModel b = fit_glmm(parse_formula("y ~ x + (1 | g)"), d, Family::bernoulli);
  CHECK(a.converged);
  CHECK(a.criterion == b.criterion);  // bitwise deterministic
  CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.theta[0] >= 0.0);
}

TEST_CASE("parallel_for: matches serial work and propagates exceptions") {
  std::vector<double> out(101, 0.0);
  parallel_for(101, 4, [&](int i) { out[i] = std::sqrt(i); });
  for (int i = 0; i < 101; ++i) CHECK(out[i] == doctest::Approx(std::sqrt(i)));
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [&](int i) {
                                 if (i == 7) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
  int threads = default_threads();
  CHECK(threads >= 1);
}
