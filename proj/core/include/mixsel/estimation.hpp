#ifndef MIXSEL_ESTIMATION_HPP
#define MIXSEL_ESTIMATION_HPP

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mixsel/data.hpp"
#include "mixsel/design.hpp"
#include "mixsel/formula.hpp"

namespace mixsel {

enum class Family { gaussian, poisson, bernoulli };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// Penalized least squares at fixed theta. Solves
//   min ||W^(1/2)(y - X beta - Z Lambda s)||^2 + ||s||^2,  u = Lambda s,
// through the sparse Cholesky factor L L' = Lambda'Z'WZLambda + I
// (natural ordering, no permutation).
struct PlsSolution {
  Eigen::VectorXd beta, u, s;
  Eigen::SparseMatrix<double> L;  // lower factor
  double r2 = 0.0;                // penalized residual sum of squares
  double rss = 0.0;               // plain residual sum of squares
  double logdet_L2 = 0.0;         // log det(L L')
  double logdet_RX2 = 0.0;        // log det(X' V0^-1 X)
};

PlsSolution pls_solve(const DesignMatrices& dm, const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& y, const Eigen::VectorXd* weights = nullptr);

// -2 times the profiled (restricted) log-likelihood at theta, with beta and
// sigma^2 profiled out:
//   log det(LL') + [reml] log det(X'V0^-1 X) + m (1 + log(2 pi r2/m)),
// m = n - p under REML, n under ML.
double profiled_criterion(const DesignMatrices& dm, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& y, bool reml);

struct FittedModel {
  ModelFormula formula;
  Family family = Family::gaussian;
  std::shared_ptr<const DesignMatrices> design;
  Eigen::VectorXd y;
  Eigen::VectorXd theta;
  Eigen::VectorXd beta;
  Eigen::VectorXd u;  // conditional modes, u = Lambda s
  Eigen::VectorXd s;  // spherical modes (kept for warm starts)
  double sigma2 = 1.0;  // gaussian only; fixed 1 otherwise
  bool reml = true;
  double criterion = 0.0;  // -2 profiled (restricted) loglik; -2 Laplace loglik for GLMMs
  bool converged = false;
  long objective_evals = 0;
  Eigen::SparseMatrix<double> L;  // factor at the optimum (weighted for GLMMs)

  const DesignMatrices& dm() const { return *design; }
  int n() const { return dm().n; }
  int p() const { return dm().p; }
  int q() const { return dm().q; }
  Eigen::VectorXd eta() const;  // X beta + Z u
  Eigen::VectorXd mu() const;   // fitted values h(eta)
};

struct FitControl {
  std::optional<Eigen::VectorXd> warm_theta;
  std::optional<Eigen::VectorXd> warm_beta;  // GLMM only
  std::optional<Eigen::VectorXd> warm_s;     // GLMM only
  bool polish = true;                        // second tightened simplex pass
};

FittedModel fit_lmm(const ModelFormula& f, const Dataset& d, bool reml = true);
FittedModel fit_glmm(const ModelFormula& f, const Dataset& d, Family family);

// Design-level entry points used by refits and corrections (no dataset pass).
FittedModel fit_lmm_design(std::shared_ptr<const DesignMatrices> dm, const ModelFormula& f,
                           const Eigen::VectorXd& y, bool reml, const FitControl& ctl = {});
FittedModel fit_glmm_design(std::shared_ptr<const DesignMatrices> dm, const ModelFormula& f,
                            const Eigen::VectorXd& y, Family family, const FitControl& ctl = {});

// Full re-optimization on a new response, warm-started at the fit's optimum.
FittedModel refit(const FittedModel& m, const Eigen::VectorXd& new_y);

// Sum of log f(y_i | mu_i) at the conditional fit; gaussian uses sigma2_hat.
double conditional_loglik(const FittedModel& m);

// Per-term lower-triangular factor blocks with component names.
struct FactorBlock {
  std::string name;
  std::vector<std::string> components;
  Eigen::MatrixXd factor;  // dim x dim lower triangular
  int term_index = -1;     // -1 for smooth blocks
};
std::vector<FactorBlock> covariance_factor_blocks(const FittedModel& m);

}  // namespace mixsel

#endif
