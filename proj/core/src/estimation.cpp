#include "mixsel/estimation.hpp"

#include <cmath>
#include <limits>

#include "mixsel/errors.hpp"
#include "mixsel/glm.hpp"
#include "mixsel/nelder_mead.hpp"

namespace mixsel {

std::string family_name(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::poisson: return "poisson";
    case Family::bernoulli: return "bernoulli";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  if (name == "gaussian") return Family::gaussian;
  if (name == "poisson") return Family::poisson;
  if (name == "bernoulli" || name == "binomial") return Family::bernoulli;
  throw input_error("unknown family: " + name);
}

Eigen::VectorXd FittedModel::eta() const {
  Eigen::VectorXd e = dm().X * beta;
  if (q() > 0) e += dm().Z * u;
  return e;
}

Eigen::VectorXd FittedModel::mu() const {
  Eigen::VectorXd e = eta();
  if (family == Family::gaussian) return e;
  for (long i = 0; i < e.size(); ++i) e[i] = link_inverse(e[i], family);
  return e;
}

PlsSolution pls_solve(const DesignMatrices& dm, const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& y, const Eigen::VectorXd* weights) {
  const int n = dm.n, p = dm.p, q = dm.q;
  PlsSolution out;

  Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd Xw = w.asDiagonal() * dm.X;  // W X
  Eigen::VectorXd yw = w.array() * y.array();

  Eigen::MatrixXd XtWX = dm.X.transpose() * Xw;
  Eigen::VectorXd XtWy = dm.X.transpose() * yw;

  if (q == 0) {
    Eigen::LLT<Eigen::MatrixXd> lltX(XtWX);
    if (lltX.info() != Eigen::Success)
      throw numeric_error("pls_solve: rank-deficient fixed effects");
    out.beta = lltX.solve(XtWy);
    Eigen::VectorXd e = y - dm.X * out.beta;
    out.rss = (w.array() * e.array().square()).sum();
    out.r2 = out.rss;
    out.logdet_L2 = 0.0;
    out.logdet_RX2 = 2.0 * lltX.matrixL().toDenseMatrix().diagonal().array().log().sum();
    out.L.resize(0, 0);
    return out;
  }

  Eigen::SparseMatrix<double> Lam = lambda_factor(dm, theta);
  Eigen::SparseMatrix<double> U = dm.Z * Lam;  // n x q
  Eigen::SparseMatrix<double> M = (U.transpose() * w.asDiagonal() * U).pruned();
  Eigen::SparseMatrix<double> I(q, q);
  I.setIdentity();
  M += I;

  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                       Eigen::NaturalOrdering<int>> llt(M);
  if (llt.info() != Eigen::Success)
    throw numeric_error("pls_solve: sparse Cholesky failed");
  out.L = llt.matrixL();

  Eigen::VectorXd cu = llt.matrixL().solve(Eigen::VectorXd(U.transpose() * yw));
  Eigen::MatrixXd RZX = llt.matrixL().solve(Eigen::MatrixXd(U.transpose() * Xw));

  Eigen::MatrixXd XtVX = XtWX - RZX.transpose() * RZX;
  Eigen::LLT<Eigen::MatrixXd> lltX(XtVX);
  if (lltX.info() != Eigen::Success)
    throw numeric_error("pls_solve: rank-deficient fixed effects");

  out.beta = lltX.solve(XtWy - RZX.transpose() * cu);
  Eigen::VectorXd sphere = llt.matrixU().solve(Eigen::VectorXd(cu - RZX * out.beta));
  out.s = sphere;
  out.u = Lam * sphere;

  Eigen::VectorXd e = y - dm.X * out.beta - dm.Z * out.u;
  out.rss = (w.array() * e.array().square()).sum();
  out.r2 = out.rss + sphere.squaredNorm();
  out.logdet_L2 = 2.0 * Eigen::VectorXd(out.L.diagonal()).array().log().sum();
  out.logdet_RX2 = 2.0 * lltX.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return out;
}

double profiled_criterion(const DesignMatrices& dm, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& y, bool reml) {
  PlsSolution pls = pls_solve(dm, theta, y);
  double m = dm.n - (reml ? dm.p : 0);
  return pls.logdet_L2 + (reml ? pls.logdet_RX2 : 0.0) +
         m * (1.0 + std::log(2.0 * M_PI * pls.r2 / m));
}

namespace {

FittedModel finish_lmm(std::shared_ptr<const DesignMatrices> dm, const ModelFormula& f,
                       const Eigen::VectorXd& y, bool reml, const Eigen::VectorXd& theta,
                       double crit, bool converged) {
  FittedModel m;
  m.formula = f;
  m.family = Family::gaussian;
  m.design = std::move(dm);
  m.y = y;
  m.theta = theta;
  m.reml = reml;
  m.criterion = crit;
  m.converged = converged;
  PlsSolution pls = pls_solve(m.dm(), theta, y);
  m.beta = pls.beta;
  m.u = m.q() > 0 ? pls.u : Eigen::VectorXd::Zero(0);
  m.s = m.q() > 0 ? pls.s : Eigen::VectorXd::Zero(0);
  m.L = pls.L;
  double df = m.n() - (reml ? m.p() : 0);
  m.sigma2 = pls.r2 / df;
  if (!std::isfinite(m.criterion) || !m.beta.allFinite())
    throw numeric_error("fit_lmm: criterion is not finite (rank-deficient design?)");
  return m;
}

}  // namespace

FittedModel fit_lmm_design(std::shared_ptr<const DesignMatrices> dm, const ModelFormula& f,
                           const Eigen::VectorXd& y, bool reml, const FitControl& ctl) {
  const DesignMatrices& d = *dm;
  if (y.size() != d.n) throw input_error("fit_lmm: response length mismatch");

  if (d.q == 0) {
    double crit = profiled_criterion(d, Eigen::VectorXd(), y, reml);
    return finish_lmm(std::move(dm), f, y, reml, Eigen::VectorXd::Zero(0), crit, true);
  }

  long evals = 0;
  auto objective = [&](const Eigen::VectorXd& th) {
    ++evals;
    return profiled_criterion(d, th, y, reml);
  };
  std::vector<bool> lb = d.theta_diagonal();

  NmResult best;
  best.f = std::numeric_limits<double>::infinity();
  if (ctl.warm_theta) {
    NmOptions o;
    o.xatol = 1e-10;
    o.fatol = 1e-12;
    o.init_step = 0.02;
    o.zero_step = 1e-4;
    best = nelder_mead(objective, *ctl.warm_theta, lb, o);
  } else {
    Eigen::VectorXd base = d.default_theta();
    for (double scale : {1.0, 0.5, 2.0}) {
      NmOptions o;
      o.xatol = 1e-8;
      o.fatol = 1e-10;
      NmResult r = nelder_mead(objective, scale * base, lb, o);
      if (r.f < best.f) best = r;
    }
  }
  if (ctl.polish) {
    NmOptions o;
    o.xatol = 1e-12;
    o.fatol = 1e-13;
    o.init_step = ctl.warm_theta ? 0.002 : 0.01;
    o.zero_step = ctl.warm_theta ? 1e-5 : 1e-4;
    NmResult r = nelder_mead(objective, best.x, lb, o);
    if (r.f <= best.f) {
      r.converged = r.converged || best.converged;
      best = r;
    }
  }
  FittedModel m = finish_lmm(std::move(dm), f, y, reml, best.x, best.f, best.converged);
  m.objective_evals = evals;
  return m;
}

FittedModel fit_lmm(const ModelFormula& f, const Dataset& d, bool reml) {
  const Column& resp = d.require(f.response);
  if (!resp.numeric) throw input_error("response must be numeric: " + f.response);
  auto dm = std::make_shared<DesignMatrices>(build_design(f, d));
  return fit_lmm_design(std::move(dm), f, resp.values, reml, {});
}

// ---------------------------------------------------------------------------
// GLMM: Laplace objective with a PIRLS inner loop for the spherical modes.

namespace {

struct PirlsResult {
  double laplace_m2ll = 0.0;  // -2 Laplace log-likelihood
  bool ok = false;
};

// Reused across objective evaluations of one fit: the pattern of U'WU + I is
// theta-independent as long as Lambda keeps structural zeros, so the symbolic
// analysis happens once.
struct PirlsWorkspace {
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
  bool analyzed = false;
};

// Iterates s for fixed (theta, beta); s is updated in place (warm starts).
PirlsResult pirls(const DesignMatrices& d, Family family,
                  const Eigen::SparseMatrix<double>& U, const Eigen::VectorXd& offset,
                  const Eigen::VectorXd& y, Eigen::VectorXd& s, PirlsWorkspace& ws,
                  Eigen::SparseMatrix<double>* L_out = nullptr) {
  const int n = d.n;
  const int q = static_cast<int>(U.cols());
  PirlsResult res;

  auto pen_dev = [&](const Eigen::VectorXd& sv) {
    Eigen::VectorXd eta = offset + U * sv;
    double dev = 0.0;
    for (int i = 0; i < n; ++i) {
      double mu = link_inverse(eta[i], family);
      dev -= 2.0 * log_density(y[i], mu, family);
    }
    return dev + sv.squaredNorm();
  };

  double dev = pen_dev(s);
  if (!std::isfinite(dev)) {
    s.setZero();
    dev = pen_dev(s);
  }
  Eigen::SparseMatrix<double> I(q, q);
  I.setIdentity();
  Eigen::SparseMatrix<double> Ut = U.transpose();

  for (int iter = 0; iter < 200; ++iter) {
    Eigen::VectorXd eta = offset + U * s;
    Eigen::VectorXd mu(n), w(n);
    for (int i = 0; i < n; ++i) {
      mu[i] = link_inverse(eta[i], family);
      w[i] = std::max(variance_function(mu[i], family), 1e-12);
    }
    Eigen::SparseMatrix<double> M = Ut * w.asDiagonal() * U;
    M += I;
    if (!ws.analyzed) {
      ws.llt.analyzePattern(M);
      ws.analyzed = true;
    }
    ws.llt.factorize(M);
    if (ws.llt.info() != Eigen::Success) return res;
    Eigen::VectorXd grad = Ut * (y - mu) - s;  // penalized score
    Eigen::VectorXd delta = ws.llt.solve(grad);
    if (!delta.allFinite()) return res;

    // The mode is found when the full Newton step is negligible; the Laplace
    // determinant is linear in s, so s itself (not the deviance) must settle.
    bool converged = delta.cwiseAbs().maxCoeff() < 1e-10;
    bool stagnated = false;
    if (!converged) {
      // accept slack sits above the rounding noise of the n-term deviance sum
      const double slack = 1e-12 * (1.0 + std::abs(dev));
      double step = 1.0, new_dev = 0.0;
      bool improved = false;
      Eigen::VectorXd cand;
      for (int half = 0; half < 20; ++half, step *= 0.5) {
        cand = s + step * delta;
        new_dev = pen_dev(cand);
        if (std::isfinite(new_dev) && new_dev <= dev + slack) {
          improved = true;
          break;
        }
      }
      if (improved) {
        s = cand;
        dev = new_dev;
      } else {
        stagnated = true;  // line search exhausted: accept the current mode
      }
    }
    if (converged || stagnated) {
      // the factorization above is at the current s
      Eigen::SparseMatrix<double> Lm(ws.llt.matrixL());
      double logdet = 2.0 * Eigen::VectorXd(Lm.diagonal()).array().log().sum();
      if (L_out) *L_out = Lm;
      res.laplace_m2ll = dev + logdet;
      res.ok = true;
      return res;
    }
  }
  return res;
}

}  // namespace

FittedModel fit_glmm_design(std::shared_ptr<const DesignMatrices> dm, const ModelFormula& f,
                            const Eigen::VectorXd& y, Family family, const FitControl& ctl) {
  const DesignMatrices& d = *dm;
  if (family == Family::gaussian)
    throw input_error("fit_glmm: use fit_lmm for gaussian responses");
  if (y.size() != d.n) throw input_error("fit_glmm: response length mismatch");
  for (long i = 0; i < y.size(); ++i) {
    if (family == Family::poisson && (y[i] < 0 || y[i] != std::floor(y[i])))
      throw input_error("poisson response must be nonnegative integers");
    if (family == Family::bernoulli && y[i] != 0.0 && y[i] != 1.0)
      throw input_error("bernoulli response must be 0/1");
  }

  FittedModel m;
  m.formula = f;
  m.family = family;
  m.design = dm;
  m.y = y;
  m.reml = false;

  if (d.q == 0) {
    GlmFit g = glm_irls(d.X, y, family);
    m.beta = g.beta;
    m.theta = Eigen::VectorXd::Zero(0);
    m.u = Eigen::VectorXd::Zero(0);
    m.s = Eigen::VectorXd::Zero(0);
    m.criterion = -2.0 * g.loglik;
    m.converged = g.converged;
    if (!std::isfinite(m.criterion) || !m.beta.allFinite())
      throw numeric_error("fit_glmm: criterion is not finite (rank-deficient design?)");
    return m;
  }

  const int td = d.theta_dim, p = d.p;
  std::vector<bool> lb(td + p, false);
  {
    auto diag = d.theta_diagonal();
    for (int j = 0; j < td; ++j) lb[j] = diag[j];
  }

  // shared warm state for the inner modes
  Eigen::VectorXd s_warm = ctl.warm_s ? *ctl.warm_s : Eigen::VectorXd::Zero(d.q);
  PirlsWorkspace ws;

  long evals = 0;
  auto objective = [&](const Eigen::VectorXd& x) {
    ++evals;
    Eigen::VectorXd th = x.head(td), bb = x.tail(p);
    Eigen::SparseMatrix<double> U = d.Z * lambda_factor(d, th, /*keep_structural_zeros=*/true);
    Eigen::VectorXd offset = d.X * bb;
    Eigen::VectorXd s = s_warm;
    PirlsResult r = pirls(d, family, U, offset, y, s, ws);
    if (!r.ok) return std::numeric_limits<double>::infinity();
    s_warm = s;
    return r.laplace_m2ll;
  };

  Eigen::VectorXd beta0;
  if (ctl.warm_beta) {
    beta0 = *ctl.warm_beta;
  } else {
    beta0 = glm_irls(d.X, y, family).beta;
  }

  NmResult best;
  best.f = std::numeric_limits<double>::infinity();
  std::vector<double> scales = ctl.warm_theta ? std::vector<double>{1.0}
                                              : std::vector<double>{1.0, 0.5};
  for (double scale : scales) {
    Eigen::VectorXd x0(td + p);
    x0.head(td) = ctl.warm_theta ? *ctl.warm_theta : (scale * d.default_theta()).eval();
    x0.tail(p) = beta0;
    NmOptions o;
    o.max_iter = 2000;
    if (ctl.warm_theta) {
      o.xatol = 1e-6;
      o.fatol = 1e-8;
      o.init_step = 0.02;
      o.zero_step = 1e-4;
    } else {
      o.xatol = 1e-5;
      o.fatol = 1e-7;
    }
    NmResult r = nelder_mead(objective, x0, lb, o);
    if (r.f < best.f) best = r;
  }
  if (ctl.polish) {
    NmOptions o;
    o.max_iter = 2000;
    o.xatol = 1e-6;
    o.fatol = 1e-8;
    o.init_step = 0.005;
    o.zero_step = 2e-5;
    NmResult r = nelder_mead(objective, best.x, lb, o);
    if (r.f <= best.f) {
      r.converged = r.converged || best.converged;
      best = r;
    }
  }

  m.theta = best.x.head(td);
  m.beta = best.x.tail(p);
  m.criterion = best.f;
  m.converged = best.converged && std::isfinite(best.f);
  m.objective_evals = evals;

  // final inner solve at the optimum
  Eigen::SparseMatrix<double> Lam = lambda_factor(d, m.theta);
  Eigen::SparseMatrix<double> U = d.Z * lambda_factor(d, m.theta, /*keep_structural_zeros=*/true);
  Eigen::VectorXd s = s_warm;
  Eigen::SparseMatrix<double> L;
  PirlsResult r = pirls(d, family, U, d.X * m.beta, y, s, ws, &L);
  if (!r.ok) m.converged = false;
  m.s = s;
  m.u = Lam * s;
  m.L = L;
  if (!std::isfinite(m.criterion) || !m.beta.allFinite())
    throw numeric_error("fit_glmm: criterion is not finite (rank-deficient design?)");
  return m;
}

FittedModel fit_glmm(const ModelFormula& f, const Dataset& d, Family family) {
  const Column& resp = d.require(f.response);
  if (!resp.numeric) throw input_error("response must be numeric: " + f.response);
  auto dm = std::make_shared<DesignMatrices>(build_design(f, d));
  return fit_glmm_design(std::move(dm), f, resp.values, family, {});
}

FittedModel refit(const FittedModel& m, const Eigen::VectorXd& new_y) {
  FitControl ctl;
  ctl.warm_theta = m.theta;
  if (m.family == Family::gaussian)
    return fit_lmm_design(m.design, m.formula, new_y, m.reml, ctl);
  ctl.warm_beta = m.beta;
  ctl.warm_s = m.s;
  return fit_glmm_design(m.design, m.formula, new_y, m.family, ctl);
}

double conditional_loglik(const FittedModel& m) {
  if (m.family == Family::gaussian) {
    Eigen::VectorXd e = m.y - m.eta();
    return -0.5 * m.n() * std::log(2.0 * M_PI * m.sigma2) - e.squaredNorm() / (2.0 * m.sigma2);
  }
  Eigen::VectorXd mu = m.mu();
  double ll = 0.0;
  for (long i = 0; i < mu.size(); ++i) ll += log_density(m.y[i], mu[i], m.family);
  return ll;
}

std::vector<FactorBlock> covariance_factor_blocks(const FittedModel& m) {
  std::vector<FactorBlock> out;
  for (const auto& b : m.dm().blocks) {
    FactorBlock fb;
    fb.name = b.group;
    fb.components = b.components;
    fb.term_index = b.term_index;
    fb.factor.setZero(b.dim, b.dim);
    int t = b.theta_offset;
    for (int col = 0; col < b.dim; ++col)
      for (int row = col; row < b.dim; ++row, ++t) fb.factor(row, col) = m.theta[t];
    out.push_back(std::move(fb));
  }
  return out;
}

}  // namespace mixsel
