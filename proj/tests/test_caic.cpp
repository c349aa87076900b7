#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "helpers.hpp"
#include "mixsel/caic.hpp"
#include "mixsel/design.hpp"
#include "mixsel/errors.hpp"

using namespace mixsel;
using mixsel::test::fixture;
using mixsel::test::simulate_grouped;

namespace {

FittedModel sleep_m1() {
  static FittedModel m =
      fit_lmm(parse_formula("Reaction ~ Days + (1 + Days | Subject)"), fixture("sleepstudy.csv"));
  return m;
}

double lm_caic_closed_form(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  int n = static_cast<int>(y.size());
  int p = static_cast<int>(X.cols());
  Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  double rss = (y - X * beta).squaredNorm();
  double sigma2 = rss / (n - p);  // restricted estimate
  double ll = -0.5 * n * std::log(2.0 * M_PI * sigma2) - rss / (2.0 * sigma2);
  return -2.0 * ll + 2.0 * p;
}

}  // namespace

TEST_CASE("gaussian caic: sleepstudy reference values") {
  CaicResult r1 = caic(sleep_m1());
  CHECK(r1.cond_loglik == doctest::Approx(-824.507).epsilon(2e-5));
  CHECK(r1.df == doctest::Approx(31.30192).epsilon(2e-4));
  CHECK(r1.caic == doctest::Approx(1711.618).epsilon(2e-5));
  CHECK(!r1.reduced_formula);
  CHECK(!r1.refitted);

  Dataset d = fixture("sleepstudy.csv");
  CaicResult r2 =
      caic(fit_lmm(parse_formula("Reaction ~ Days + (1 | Subject) + (0 + Days | Subject)"), d));
  CHECK(r2.caic == doctest::Approx(1710.426).epsilon(2e-5));
  CaicResult r3 = caic(fit_lmm(parse_formula("Reaction ~ Days + (1 | Subject)"), d));
  CHECK(r3.caic == doctest::Approx(1767.118).epsilon(2e-5));
  // conditional ranking: dropping the correlation helps, dropping the slope hurts
  CHECK(r2.caic < r1.caic);
  CHECK(r1.caic < r3.caic);
}

TEST_CASE("gaussian caic: paste-strength nested intercepts") {
  Dataset d = fixture("pastes.csv");
  CaicResult full = caic(fit_lmm(parse_formula("strength ~ (1 | sample) + (1 | batch)"), d));
  CHECK(full.caic == doctest::Approx(178.2809).epsilon(5e-6));
  CaicResult sample_only = caic(fit_lmm(parse_formula("strength ~ (1 | sample)"), d));
  CHECK(sample_only.cond_loglik == doctest::Approx(-58.95458).epsilon(1e-5));
  CHECK(sample_only.df == doctest::Approx(30.144477).epsilon(1e-5));
  CHECK(sample_only.caic == doctest::Approx(178.1981).epsilon(5e-6));
  CaicResult batch_only = caic(fit_lmm(parse_formula("strength ~ (1 | batch)"), d));
  CHECK(batch_only.cond_loglik == doctest::Approx(-141.49709).epsilon(1e-5));
  CHECK(batch_only.df == doctest::Approx(9.157892).epsilon(1e-5));
  CHECK(batch_only.caic == doctest::Approx(301.3100).epsilon(5e-6));
}

TEST_CASE("classical (marginal) AIC") {
  Dataset d = fixture("sleepstudy.csv");
  FittedModel lm = fit_lmm(parse_formula("Reaction ~ Days"), d);
  CHECK(classical_aic(lm) == doctest::Approx(1899.6637).epsilon(1e-6));
  CHECK(classical_aic(sleep_m1()) == doctest::Approx(1755.6283).epsilon(1e-6));
}

TEST_CASE("caic on a fixed-effects-only model takes the classical path") {
  Dataset d = fixture("sleepstudy.csv");
  FittedModel lm = fit_lmm(parse_formula("Reaction ~ Days"), d);
  CaicResult r = caic(lm);
  CHECK(r.df == 2.0);
  CHECK(!r.refitted);
  CHECK(r.caic == doctest::Approx(-2.0 * r.cond_loglik + 4.0).epsilon(1e-12));
  CHECK(r.caic == doctest::Approx(lm_caic_closed_form(lm.dm().X, lm.y)).epsilon(1e-10));
}

TEST_CASE("algebraic identities at the fitted optimum") {
  FittedModel m = sleep_m1();
  const DesignMatrices& dm = m.dm();
  int n = dm.n, p = dm.p, q = dm.q;

  Eigen::MatrixXd V0inv = scaled_precision(dm, m.theta);
  Eigen::MatrixXd A = residual_projector(dm, m.theta);
  CHECK((V0inv - V0inv.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((A - A.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((A * dm.X).cwiseAbs().maxCoeff() < 1e-8);

  // I - V0^-1 equals the squared whitened random-effect design
  Eigen::MatrixXd U = Eigen::MatrixXd(dm.Z) * Eigen::MatrixXd(lambda_factor(dm, m.theta));
  Eigen::MatrixXd Ldense = Eigen::MatrixXd(m.L);
  Eigen::MatrixXd B = Ldense.triangularView<Eigen::Lower>().solve(U.transpose());
  CHECK((Eigen::MatrixXd::Identity(n, n) - V0inv - B.transpose() * B).cwiseAbs().maxCoeff() <
        1e-8);

  // the stored factor satisfies L L' = U'U + I
  Eigen::MatrixXd LLt = Ldense * Ldense.transpose();
  Eigen::MatrixXd UtUI = U.transpose() * U + Eigen::MatrixXd::Identity(q, q);
  CHECK((LLt - UtUI).cwiseAbs().maxCoeff() < 1e-8);

  for (int j = 0; j < m.theta.size(); ++j) {
    Eigen::MatrixXd W = covariance_derivatives(dm, j);
    CHECK((W - W.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }

  double tra = A.trace();
  CHECK(n - tra >= p - 1e-8);
  CHECK(n - tra <= p + q + 1e-8);

  CaicResult r = caic(m);
  CHECK(r.caic == doctest::Approx(-2.0 * r.cond_loglik + 2.0 * r.df).epsilon(1e-13));
}

TEST_CASE("curvature pieces: positive definite at the optimum, finite cross term") {
  FittedModel m = sleep_m1();
  Eigen::MatrixXd H = criterion_hessian(m);
  CHECK(H.rows() == 3);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  CHECK((H - H.transpose()).cwiseAbs().maxCoeff() < 1e-8);
  Eigen::MatrixXd G = criterion_cross_derivative(m);
  CHECK(G.rows() == 3);
  CHECK(G.cols() == m.n());
  CHECK(G.allFinite());
}

TEST_CASE("analytic correction agrees with the response-perturbation estimate") {
  FittedModel m = sleep_m1();
  double analytic = gaussian_bias_correction(m);
  double mean = m.y.mean();
  double sd = std::sqrt((m.y.array() - mean).square().sum() / (m.n() - 1));
  double numeric = numeric_bias_correction(m, 5e-5 * sd);
  CHECK(std::abs(analytic - numeric) < 0.05);
}

TEST_CASE("numeric correction: fixed-effects-only shortcut") {
  Dataset d = fixture("sleepstudy.csv");
  FittedModel lm = fit_lmm(parse_formula("Reaction ~ Days"), d);
  CHECK(numeric_bias_correction(lm) == 2.0);
}

TEST_CASE("boundary deletion: a null group collapses to the linear model") {
  Dataset d = simulate_grouped(4242, 6, 8, 0.0);  // no group effect at all
  FittedModel m = fit_lmm(parse_formula("y ~ x + (1 | g)"), d);
  CaicResult r = caic(m);
  REQUIRE(r.reduced_formula);
  CHECK(render_formula(*r.reduced_formula) == "y ~ x");
  REQUIRE(r.refitted);
  CHECK(r.refitted->q() == 0);
  CHECK(r.df == 2.0);
  CHECK(r.caic == doctest::Approx(lm_caic_closed_form(r.refitted->dm().X, r.refitted->y))
                      .epsilon(1e-10));
}

TEST_CASE("boundary deletion: only the null component goes") {
  Dataset base = simulate_grouped(515, 10, 6, 1.5);
  Eigen::VectorXd y = base.require("y").values, x = base.require("x").values;
  std::vector<std::string> g;
  const Column& gc = base.require("g");
  for (long i = 0; i < base.n; ++i) g.push_back(gc.levels[gc.codes[i]]);
  // second grouping column cycling across rows, unrelated to the response
  std::vector<std::string> g2;
  for (long i = 0; i < base.n; ++i) g2.push_back("h" + std::to_string(i % 5));
  Dataset d = make_dataset({{"y", y}, {"x", x}}, {{"g", g}, {"g2", g2}});

  FittedModel m = fit_lmm(parse_formula("y ~ x + (1 | g) + (1 | g2)"), d);
  CaicResult r = caic(m);
  REQUIRE(r.reduced_formula);
  CHECK(render_formula(*r.reduced_formula) == "y ~ x + (1 | g)");
  REQUIRE(r.refitted);
  CHECK(r.refitted->q() == 10);
}

TEST_CASE("boundary deletion honors the tolerance override") {
  FittedModel m = sleep_m1();
  CaicResult strict = caic(m);
  CHECK(!strict.refitted);  // both components are well away from zero
  CaicResult loose = caic(m, 0, /*zero_tol=*/1e3);
  REQUIRE(loose.refitted);
  CHECK(loose.refitted->q() == 0);
  CHECK(loose.df == 2.0);
}

TEST_CASE("rank-deficient fixed effects fail loudly") {
  Dataset base = simulate_grouped(606, 5, 6, 1.0);
  Eigen::VectorXd y = base.require("y").values, x = base.require("x").values;
  std::vector<std::string> g;
  const Column& gc = base.require("g");
  for (long i = 0; i < base.n; ++i) g.push_back(gc.levels[gc.codes[i]]);
  Eigen::VectorXd xdup = 2.0 * x;
  Dataset d = make_dataset({{"y", y}, {"x", x}, {"xdup", xdup}}, {{"g", g}});
  CHECK_THROWS_AS(fit_lmm(parse_formula("y ~ x + xdup + (1 | g)"), d), numeric_error);
  CHECK_THROWS_AS(fit_lmm(parse_formula("y ~ x + xdup"), d), numeric_error);
}
