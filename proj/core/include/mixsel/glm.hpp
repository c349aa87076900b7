#ifndef MIXSEL_GLM_HPP
#define MIXSEL_GLM_HPP

#include <Eigen/Dense>

#include "mixsel/estimation.hpp"

namespace mixsel {

// Plain GLM by iteratively reweighted least squares (canonical links).
// Used for random-effect-free fits and as an independent oracle.
struct GlmFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd eta;
  double loglik = 0.0;
  bool converged = false;
};

GlmFit glm_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family);

// Pointwise family helpers (canonical links).
double link_inverse(double eta, Family family);
double link_forward(double mu, Family family);
double log_density(double y, double mu, Family family);  // sigma-free families only
double variance_function(double mu, Family family);

}  // namespace mixsel

#endif
