#include "mixsel/caic.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "mixsel/errors.hpp"
#include "mixsel/glm.hpp"
#include "mixsel/parallel.hpp"

namespace mixsel {

// ---------------------------------------------------------------------------
// boundary deletion

namespace {

// theta index of the (c, c) entry within a block stored column-major
// lower-triangular: column c starts after the c longer columns before it.
int diag_theta_index(const LambdaBlock& b, int c) {
  return b.theta_offset + c * b.dim - c * (c - 1) / 2;
}

FittedModel refit_on_design(std::shared_ptr<const DesignMatrices> dm, const ModelFormula& f,
                            const FittedModel& like, const FitControl& ctl) {
  if (like.family == Family::gaussian) return fit_lmm_design(std::move(dm), f, like.y, like.reml, ctl);
  return fit_glmm_design(std::move(dm), f, like.y, like.family, ctl);
}

}  // namespace

DeletionResult delete_zero_components(const FittedModel& m, double zero_tol) {
  DeletionResult out{m, false};
  while (out.model.q() > 0) {
    const FittedModel& cur = out.model;
    const DesignMatrices& dm = cur.dm();
    double tol = zero_tol * (cur.family == Family::gaussian ? std::sqrt(cur.sigma2) : 1.0);
    size_t n_terms = cur.formula.randoms.size();
    std::vector<std::vector<int>> kept(n_terms);
    std::vector<std::vector<std::string>> kept_names(n_terms);
    bool drop_any = false;
    for (const auto& b : dm.blocks) {
      if (b.term_index < 0) continue;
      for (int c = 0; c < b.dim; ++c) {
        if (std::abs(cur.theta[diag_theta_index(b, c)]) <= tol) {
          drop_any = true;
        } else {
          kept[b.term_index].push_back(c);
          kept_names[b.term_index].push_back(b.components[c]);
        }
      }
    }
    if (!drop_any) break;
    ModelFormula f2 = reduce_by_component_names(cur.formula, kept_names);
    auto dm2 = std::make_shared<DesignMatrices>(subset_design(dm, kept));
    out.model = refit_on_design(std::move(dm2), f2, cur, {});
    out.reduced = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// dense building blocks for the gaussian correction

Eigen::MatrixXd scaled_precision(const DesignMatrices& dm, const Eigen::VectorXd& theta) {
  const int n = dm.n;
  if (dm.q == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd U = Eigen::MatrixXd(dm.Z * lambda_factor(dm, theta, /*keep_structural_zeros=*/true));
  Eigen::MatrixXd M = U.transpose() * U + Eigen::MatrixXd::Identity(dm.q, dm.q);
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success)
    throw numeric_error("scaled_precision: inner system not positive definite");
  Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n) - U * llt.solve(U.transpose());
  return 0.5 * (V + V.transpose());
}

Eigen::MatrixXd residual_projector(const DesignMatrices& dm, const Eigen::VectorXd& theta) {
  Eigen::MatrixXd V0inv = scaled_precision(dm, theta);
  Eigen::MatrixXd VX = V0inv * dm.X;
  Eigen::MatrixXd XtVX = dm.X.transpose() * VX;
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (XtVX + XtVX.transpose()));
  if (llt.info() != Eigen::Success)
    throw numeric_error("residual_projector: X' V0^-1 X not positive definite");
  Eigen::MatrixXd A = V0inv - VX * llt.solve(VX.transpose());
  return 0.5 * (A + A.transpose());
}

Eigen::MatrixXd covariance_derivatives(const DesignMatrices& dm, int j) {
  Eigen::SparseMatrix<double> P = dtheta_pattern(dm, j);
  return Eigen::MatrixXd(dm.Z * P * dm.Z.transpose());
}

// ---------------------------------------------------------------------------
// finite differences of the profiled criterion

namespace {

void require_gaussian(const FittedModel& m, const char* what) {
  if (m.family != Family::gaussian)
    throw input_error(std::string(what) + " is defined for gaussian fits");
}

double fd_step(double t) { return std::max(1e-4, 1e-4 * std::abs(t)); }

}  // namespace

Eigen::MatrixXd criterion_hessian(const FittedModel& m) {
  require_gaussian(m, "criterion_hessian");
  const DesignMatrices& dm = m.dm();
  const int d = dm.theta_dim;
  const Eigen::VectorXd& th = m.theta;
  auto f = [&](const Eigen::VectorXd& t) { return profiled_criterion(dm, t, m.y, m.reml); };
  double f0 = f(th);
  Eigen::MatrixXd H(d, d);
  for (int j = 0; j < d; ++j) {
    double hj = fd_step(th[j]);
    Eigen::VectorXd tp = th, tm = th;
    tp[j] += hj;
    tm[j] -= hj;
    H(j, j) = (f(tp) - 2.0 * f0 + f(tm)) / (hj * hj);
    for (int k = j + 1; k < d; ++k) {
      double hk = fd_step(th[k]);
      Eigen::VectorXd tpp = tp, tpm = tp, tmp = tm, tmm = tm;
      tpp[k] += hk;
      tpm[k] -= hk;
      tmp[k] += hk;
      tmm[k] -= hk;
      double v = (f(tpp) - f(tpm) - f(tmp) + f(tmm)) / (4.0 * hj * hk);
      H(j, k) = H(k, j) = v;
    }
  }
  H = 0.5 * (H + H.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw numeric_error("criterion_hessian: not positive definite at the fitted optimum");
  return H;
}

Eigen::MatrixXd criterion_cross_derivative(const FittedModel& m) {
  require_gaussian(m, "criterion_cross_derivative");
  const DesignMatrices& dm = m.dm();
  const int d = dm.theta_dim;
  const double meff = m.n() - (m.reml ? m.p() : 0);
  auto grad_y = [&](const Eigen::VectorXd& t) {
    Eigen::VectorXd e = residual_projector(dm, t) * m.y;
    return Eigen::VectorXd(2.0 * meff * e / m.y.dot(e));
  };
  Eigen::MatrixXd G(d, m.n());
  for (int j = 0; j < d; ++j) {
    double hj = fd_step(m.theta[j]);
    Eigen::VectorXd tp = m.theta, tm = m.theta;
    tp[j] += hj;
    tm[j] -= hj;
    G.row(j) = ((grad_y(tp) - grad_y(tm)) / (2.0 * hj)).transpose();
  }
  return G;
}

// ---------------------------------------------------------------------------
// gaussian corrections

double gaussian_bias_correction(const FittedModel& m) {
  require_gaussian(m, "gaussian_bias_correction");
  const DesignMatrices& dm = m.dm();
  const int n = dm.n, p = dm.p, d = dm.theta_dim;
  if (dm.q == 0 || m.theta.cwiseAbs().maxCoeff() == 0.0) return static_cast<double>(p);

  Eigen::MatrixXd A = residual_projector(dm, m.theta);
  Eigen::VectorXd e = A * m.y;
  double tye = m.y.dot(e);
  if (!(tye > 0.0)) throw numeric_error("gaussian_bias_correction: degenerate residual quadratic form");
  const double np = n - (m.reml ? p : 0);

  Eigen::MatrixXd right = m.reml ? A : scaled_precision(dm, m.theta);
  std::vector<Eigen::MatrixXd> W(d), WA(d);
  std::vector<Eigen::VectorXd> We(d), AWe(d);
  Eigen::VectorXd eWe(d);
  for (int j = 0; j < d; ++j) {
    W[j] = covariance_derivatives(dm, j);
    WA[j] = W[j] * right;
    We[j] = W[j] * e;
    AWe[j] = A * We[j];
    eWe[j] = e.dot(We[j]);
  }

  Eigen::MatrixXd B(d, d), C(d, n);
  for (int j = 0; j < d; ++j) {
    C.row(j) = AWe[j].transpose() - (eWe[j] / (2.0 * tye)) * e.transpose();
    for (int k = j; k < d; ++k) {
      double tr_jk = WA[j].cwiseProduct(WA[k].transpose()).sum();
      double v = -tye * tr_jk / (2.0 * np) - eWe[j] * eWe[k] / (2.0 * tye) + We[k].dot(AWe[j]);
      B(j, k) = B(k, j) = v;
    }
  }

  Eigen::LLT<Eigen::MatrixXd> llt(B);
  Eigen::MatrixXd Lambday;
  if (llt.info() == Eigen::Success) {
    Lambday = llt.solve(C);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(B);
    double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(dmax > 0.0) ||
        ldlt.vectorD().cwiseAbs().minCoeff() < 1e-12 * dmax)
      throw numeric_error("gaussian_bias_correction: curvature system is singular");
    Lambday = ldlt.solve(C);
  }

  double df = n - A.trace();
  for (int j = 0; j < d; ++j) df += Lambday.row(j).dot(AWe[j]);
  return df + 1.0;  // the residual variance is estimated as well
}

double numeric_bias_correction(const FittedModel& m, double h, int threads) {
  require_gaussian(m, "numeric_bias_correction");
  const int n = m.n();
  if (m.q() == 0) return static_cast<double>(m.p());
  if (h <= 0.0) {
    double mean = m.y.mean();
    double sd = std::sqrt((m.y.array() - mean).square().sum() / (n - 1));
    h = 1e-4 * sd;
  }
  if (!(h > 0.0)) throw input_error("numeric_bias_correction: step must be positive");

  Eigen::VectorXd base = m.eta();
  Eigen::VectorXd contrib(n);
  std::vector<char> failed(n, 0);
  FitControl ctl;
  ctl.warm_theta = m.theta;
  parallel_for(n, threads, [&](int i) {
    Eigen::VectorXd yi = m.y;
    yi[i] += h;
    try {
      FittedModel r = fit_lmm_design(m.design, m.formula, yi, m.reml, ctl);
      if (!r.converged) failed[i] = 1;
      contrib[i] = (r.eta()[i] - base[i]) / h;
    } catch (const numeric_error&) {
      failed[i] = 1;
      contrib[i] = 0.0;
    }
  });
  int n_failed = 0;
  for (char fchar : failed) n_failed += fchar;
  if (n_failed > 0.05 * n) {
    std::ostringstream msg;
    msg << "numeric_bias_correction: " << n_failed << " of " << n << " refits did not converge";
    throw numeric_error(msg.str());
  }
  double raw = 0.0;
  for (int i = 0; i < n; ++i) raw += contrib[i];
  return raw + 1.0;
}

// ---------------------------------------------------------------------------
// refit-based corrections for counts and binary responses

namespace {

// Warm refit at a modified response, falling back to a cold fit; returns
// false when neither attempt converged to a finite optimum.
bool refit_perturbed(const FittedModel& m, const Eigen::VectorXd& yi, FittedModel& out) {
  FitControl warm;
  warm.warm_theta = m.theta;
  warm.warm_beta = m.beta;
  warm.warm_s = m.s;
  try {
    out = fit_glmm_design(m.design, m.formula, yi, m.family, warm);
    if (out.converged && std::isfinite(out.criterion)) return true;
  } catch (const numeric_error&) {
  }
  try {
    out = fit_glmm_design(m.design, m.formula, yi, m.family, {});
    return out.converged && std::isfinite(out.criterion);
  } catch (const numeric_error&) {
    return false;
  }
}

[[noreturn]] void throw_refit_failures(const char* what, const std::vector<int>& idx) {
  std::ostringstream msg;
  msg << what << ": refits did not converge at observation(s)";
  for (int i : idx) msg << ' ' << i;
  throw numeric_error(msg.str());
}

}  // namespace

double poisson_bias_correction(const FittedModel& m, int threads) {
  if (m.family != Family::poisson)
    throw input_error("poisson_bias_correction is defined for poisson fits");
  const int n = m.n();
  if (m.q() == 0) return static_cast<double>(m.p());
  Eigen::VectorXd base = m.eta();
  Eigen::VectorXd contrib = Eigen::VectorXd::Zero(n);
  std::vector<char> failed(n, 0);
  parallel_for(n, threads, [&](int i) {
    if (m.y[i] == 0.0) return;  // lowering is impossible and the weight vanishes
    Eigen::VectorXd yi = m.y;
    yi[i] -= 1.0;
    FittedModel r;
    if (!refit_perturbed(m, yi, r)) {
      failed[i] = 1;
      return;
    }
    contrib[i] = m.y[i] * (base[i] - r.eta()[i]);
  });
  std::vector<int> bad;
  for (int i = 0; i < n; ++i)
    if (failed[i]) bad.push_back(i);
  if (!bad.empty()) throw_refit_failures("poisson_bias_correction", bad);
  return contrib.sum();
}

double bernoulli_bias_correction(const FittedModel& m, int threads) {
  if (m.family != Family::bernoulli)
    throw input_error("bernoulli_bias_correction is defined for bernoulli fits");
  const int n = m.n();
  if (m.q() == 0) return static_cast<double>(m.p());
  Eigen::VectorXd base = m.eta();
  Eigen::VectorXd mu = m.mu();
  Eigen::VectorXd contrib = Eigen::VectorXd::Zero(n);
  std::vector<char> failed(n, 0);
  parallel_for(n, threads, [&](int i) {
    Eigen::VectorXd yi = m.y;
    yi[i] = 1.0 - yi[i];
    FittedModel r;
    if (!refit_perturbed(m, yi, r)) {
      failed[i] = 1;
      return;
    }
    double sign_cor = 1.0 - 2.0 * m.y[i];  // +1 when the flip raises y_i
    contrib[i] = mu[i] * (1.0 - mu[i]) * sign_cor * (r.eta()[i] - base[i]);
  });
  std::vector<int> bad;
  for (int i = 0; i < n; ++i)
    if (failed[i]) bad.push_back(i);
  if (!bad.empty()) throw_refit_failures("bernoulli_bias_correction", bad);
  return contrib.sum();
}

// ---------------------------------------------------------------------------

double classical_aic(const FittedModel& m) {
  double npar = m.p() + m.theta.size() + (m.family == Family::gaussian ? 1.0 : 0.0);
  return m.criterion + 2.0 * npar;
}

CaicResult caic(const FittedModel& m, int threads, double zero_tol) {
  DeletionResult del = delete_zero_components(m, zero_tol);
  const FittedModel& t = del.model;

  CaicResult out;
  out.cond_loglik = conditional_loglik(t);
  if (t.q() == 0) {
    out.df = t.p();
  } else {
    switch (t.family) {
      case Family::gaussian:
        out.df = gaussian_bias_correction(t);
        break;
      case Family::poisson:
        out.df = poisson_bias_correction(t, threads);
        break;
      case Family::bernoulli:
        out.df = bernoulli_bias_correction(t, threads);
        break;
    }
  }
  out.caic = -2.0 * out.cond_loglik + 2.0 * out.df;
  if (del.reduced) {
    out.reduced_formula = t.formula;
    out.refitted = std::move(del.model);
  }
  return out;
}

}  // namespace mixsel
