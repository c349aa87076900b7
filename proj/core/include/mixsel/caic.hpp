#ifndef MIXSEL_CAIC_HPP
#define MIXSEL_CAIC_HPP

#include <optional>

#include "mixsel/estimation.hpp"

namespace mixsel {

// Conditional AIC of a fitted model: -2 * conditional loglik + 2 * df, where
// df is the bias-corrected effective number of parameters.
struct CaicResult {
  double cond_loglik = 0.0;
  double df = 0.0;
  double caic = 0.0;
  // Set when zero-variance components were removed first; the numbers above
  // then belong to the reduced refit.
  std::optional<ModelFormula> reduced_formula;
  std::optional<FittedModel> refitted;
};

struct DeletionResult {
  FittedModel model;
  bool reduced = false;
};

// Drops every random-effect component whose covariance-factor diagonal
// collapsed to zero (|value| <= zero_tol * residual sd, residual sd taken as
// 1 for non-gaussian fits), refits, and repeats until all survivors are
// positive. Smooth-term blocks are never dropped here. When everything goes,
// the result is the fixed-effects-only fit.
DeletionResult delete_zero_components(const FittedModel& m, double zero_tol = 1e-6);

// Scaled marginal precision V0^{-1} = (I + Z Lambda Lambda' Z')^{-1}, dense.
Eigen::MatrixXd scaled_precision(const DesignMatrices& dm, const Eigen::VectorXd& theta);

// A = V0^{-1} - V0^{-1} X (X' V0^{-1} X)^{-1} X' V0^{-1}; residuals of the
// scaled generalized least squares fit are A y.
Eigen::MatrixXd residual_projector(const DesignMatrices& dm, const Eigen::VectorXd& theta);

// Derivative of Z Lambda Lambda' Z' with respect to the j-th free entry of
// the scaled covariance (the 0/1 position pattern, symmetrized), dense.
Eigen::MatrixXd covariance_derivatives(const DesignMatrices& dm, int j);

// Central finite-difference Hessian of the profiled criterion in theta at the
// fitted optimum (steps max(1e-4, 1e-4 |theta_j|)). Throws numeric_error if
// the symmetrized result is not positive definite. Gaussian fits only.
Eigen::MatrixXd criterion_hessian(const FittedModel& m);

// Central finite-difference in theta of the response gradient of the
// profiled criterion, 2 m A y / (y' A y); rows index theta, columns index
// observations. Gaussian fits only.
Eigen::MatrixXd criterion_cross_derivative(const FittedModel& m);

// Closed-form effective degrees of freedom for a gaussian fit, accounting
// for the estimation of the covariance parameters; includes +1 for the
// residual variance when random effects are present. Returns p for a
// fixed-effects-only fit.
double gaussian_bias_correction(const FittedModel& m);

// Finite-difference effective degrees of freedom: perturbs each response
// coordinate by h (default 1e-4 * sample sd of y) and refits. Gaussian fits
// only; includes the same +1 as the closed form. threads <= 0 picks the
// default worker count.
double numeric_bias_correction(const FittedModel& m, double h = 0.0, int threads = 0);

// Refit-based effective degrees of freedom for poisson fits: each positive
// response is lowered by one and the shift in its linear predictor scored.
double poisson_bias_correction(const FittedModel& m, int threads = 0);

// Refit-based effective degrees of freedom for bernoulli fits: each response
// is flipped and the shift in its linear predictor scored.
double bernoulli_bias_correction(const FittedModel& m, int threads = 0);

// Marginal AIC: criterion + 2 * (p + dim(theta) + 1 for a gaussian residual
// variance). For fixed-effects-only fits this is the textbook AIC.
double classical_aic(const FittedModel& m);

// Boundary deletion followed by the family-appropriate bias correction.
CaicResult caic(const FittedModel& m, int threads = 0, double zero_tol = 1e-6);

}  // namespace mixsel

#endif
