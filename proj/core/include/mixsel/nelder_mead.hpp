#ifndef MIXSEL_NELDER_MEAD_HPP
#define MIXSEL_NELDER_MEAD_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace mixsel {

struct NmOptions {
  double xatol = 1e-8;   // simplex spread tolerance in x
  double fatol = 1e-8;   // spread tolerance in f
  int max_iter = 10000;
  double init_step = 0.05;     // relative initial simplex step
  double zero_step = 0.00025;  // absolute step for zero coordinates
};

struct NmResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Derivative-free simplex minimizer. Coordinates flagged in lower_bounded are
// clamped at zero before every objective evaluation (box lower bound by
// projection), and the returned point is clamped the same way.
NmResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                     const Eigen::VectorXd& x0,
                     const std::vector<bool>& lower_bounded,
                     const NmOptions& opts = {});

}  // namespace mixsel

#endif
