#include "mixsel/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mixsel {

namespace {

Eigen::VectorXd clamped(Eigen::VectorXd x, const std::vector<bool>& lb) {
  for (int i = 0; i < x.size(); ++i)
    if (lb[i] && x[i] < 0.0) x[i] = 0.0;
  return x;
}

}  // namespace

NmResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                     const Eigen::VectorXd& x0,
                     const std::vector<bool>& lower_bounded,
                     const NmOptions& opts) {
  const int d = static_cast<int>(x0.size());
  NmResult res;
  if (d == 0) {
    res.x = x0;
    res.f = f(x0);
    res.evaluations = 1;
    res.converged = true;
    return res;
  }

  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    return f(clamped(x, lower_bounded));
  };

  std::vector<Eigen::VectorXd> sx(d + 1, x0);
  std::vector<double> sf(d + 1);
  for (int i = 1; i <= d; ++i) {
    double& c = sx[i][i - 1];
    c = c != 0.0 ? c * (1.0 + opts.init_step) : opts.zero_step;
  }
  for (int i = 0; i <= d; ++i) sf[i] = eval(sx[i]);

  std::vector<int> ord(d + 1);
  auto sort_simplex = [&] {
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return sf[a] < sf[b]; });
    std::vector<Eigen::VectorXd> nx(d + 1);
    std::vector<double> nf(d + 1);
    for (int i = 0; i <= d; ++i) {
      nx[i] = sx[ord[i]];
      nf[i] = sf[ord[i]];
    }
    sx.swap(nx);
    sf.swap(nf);
  };
  sort_simplex();

  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    double xspread = 0.0;
    for (int i = 1; i <= d; ++i)
      xspread = std::max(xspread, (sx[i] - sx[0]).cwiseAbs().maxCoeff());
    double fspread = std::abs(sf[d] - sf[0]);
    if (xspread <= opts.xatol && fspread <= opts.fatol) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) centroid += sx[i];
    centroid /= d;

    Eigen::VectorXd xr = centroid + alpha * (centroid - sx[d]);
    double fr = eval(xr);
    if (fr < sf[0]) {
      Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
      double fe = eval(xe);
      if (fe < fr) {
        sx[d] = xe;
        sf[d] = fe;
      } else {
        sx[d] = xr;
        sf[d] = fr;
      }
    } else if (fr < sf[d - 1]) {
      sx[d] = xr;
      sf[d] = fr;
    } else {
      bool outside = fr < sf[d];
      Eigen::VectorXd xc;
      if (outside)
        xc = centroid + rho * (xr - centroid);
      else
        xc = centroid - rho * (centroid - sx[d]);
      double fc = eval(xc);
      if (fc < (outside ? fr : sf[d])) {
        sx[d] = xc;
        sf[d] = fc;
      } else {
        for (int i = 1; i <= d; ++i) {
          sx[i] = sx[0] + sigma * (sx[i] - sx[0]);
          sf[i] = eval(sx[i]);
        }
      }
    }
    sort_simplex();
  }

  res.x = clamped(sx[0], lower_bounded);
  res.f = sf[0];
  res.evaluations = evals;
  return res;
}

}  // namespace mixsel
