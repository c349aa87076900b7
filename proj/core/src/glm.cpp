#include "mixsel/glm.hpp"

#include <cmath>

#include "mixsel/errors.hpp"

namespace mixsel {

double link_inverse(double eta, Family family) {
  switch (family) {
    case Family::gaussian: return eta;
    case Family::poisson: return std::exp(eta);
    case Family::bernoulli: return 1.0 / (1.0 + std::exp(-eta));
  }
  return eta;
}

double link_forward(double mu, Family family) {
  switch (family) {
    case Family::gaussian: return mu;
    case Family::poisson: return std::log(mu);
    case Family::bernoulli: return std::log(mu / (1.0 - mu));
  }
  return mu;
}

double variance_function(double mu, Family family) {
  switch (family) {
    case Family::gaussian: return 1.0;
    case Family::poisson: return mu;
    case Family::bernoulli: return mu * (1.0 - mu);
  }
  return 1.0;
}

double log_density(double y, double mu, Family family) {
  switch (family) {
    case Family::poisson:
      return y * std::log(mu) - mu - std::lgamma(y + 1.0);
    case Family::bernoulli:
      return y > 0.5 ? std::log(mu) : std::log1p(-mu);
    case Family::gaussian:
      break;
  }
  throw numeric_error("log_density: gaussian needs an explicit scale");
}

GlmFit glm_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family) {
  const long n = y.size();
  const long p = X.cols();
  GlmFit fit;

  if (family == Family::gaussian) {
    fit.beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    fit.eta = X * fit.beta;
    fit.converged = true;
    return fit;
  }

  // mu start as in standard GLM practice
  Eigen::VectorXd mu(n), eta(n);
  for (long i = 0; i < n; ++i) {
    double m0 = family == Family::poisson ? y[i] + 0.1 : (y[i] + 0.5) / 2.0;
    mu[i] = m0;
    eta[i] = link_forward(m0, family);
  }

  double ll_old = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::VectorXd w(n), z(n);
    for (long i = 0; i < n; ++i) {
      double v = std::max(variance_function(mu[i], family), 1e-12);
      w[i] = v;  // canonical link: weight = variance function
      z[i] = eta[i] + (y[i] - mu[i]) / v;
    }
    Eigen::MatrixXd XtWX = X.transpose() * w.asDiagonal() * X;
    beta = XtWX.ldlt().solve(X.transpose() * (w.array() * z.array()).matrix());
    eta = X * beta;
    double ll = 0.0;
    for (long i = 0; i < n; ++i) {
      mu[i] = link_inverse(eta[i], family);
      ll += log_density(y[i], mu[i], family);
    }
    if (std::abs(ll - ll_old) < 1e-12 * (1.0 + std::abs(ll))) {
      fit.converged = true;
      ll_old = ll;
      break;
    }
    ll_old = ll;
  }
  fit.beta = beta;
  fit.eta = eta;
  fit.loglik = ll_old;
  return fit;
}

}  // namespace mixsel
