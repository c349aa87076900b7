#include "mixsel/design.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mixsel/errors.hpp"

namespace mixsel {

std::vector<bool> DesignMatrices::theta_diagonal() const {
  std::vector<bool> diag(theta_dim, false);
  for (const auto& b : blocks) {
    int t = b.theta_offset;
    for (int col = 0; col < b.dim; ++col)
      for (int row = col; row < b.dim; ++row, ++t)
        if (row == col) diag[t] = true;
  }
  return diag;
}

Eigen::VectorXd DesignMatrices::default_theta() const {
  Eigen::VectorXd th = Eigen::VectorXd::Zero(theta_dim);
  auto diag = theta_diagonal();
  for (int j = 0; j < theta_dim; ++j)
    if (diag[j]) th[j] = 1.0;
  return th;
}

SmoothBasis truncated_poly_basis(const Eigen::VectorXd& x, int g, int k) {
  if (g < 1 || k < 2) throw input_error("truncated_poly_basis: need g >= 1 and k >= 2");
  const long n = x.size();
  std::set<double> uniq(x.data(), x.data() + n);
  std::vector<double> u(uniq.begin(), uniq.end());
  if (u.size() < 4) throw input_error("truncated_poly_basis: too few unique x values");
  u.erase(u.begin());  // interior values only
  u.pop_back();
  const long m = static_cast<long>(u.size());
  Eigen::VectorXd knots(k);
  for (int j = 1; j <= k; ++j) {
    // type-7 quantile of the interior unique values at j/(k+1)
    double h = (m - 1) * static_cast<double>(j) / (k + 1);
    long lo = static_cast<long>(std::floor(h));
    double frac = h - lo;
    knots[j - 1] = lo + 1 < m ? u[lo] + frac * (u[lo + 1] - u[lo]) : u[lo];
  }
  for (int j = 1; j < k; ++j)
    if (!(knots[j] > knots[j - 1]))
      throw input_error("truncated_poly_basis: too few unique x values for " + std::to_string(k) + " knots");

  SmoothBasis b;
  b.knots = knots;
  b.fixed_columns.resize(n, g + 1);
  for (long i = 0; i < n; ++i) {
    double pw = 1.0;
    for (int d = 0; d <= g; ++d, pw *= x[i]) b.fixed_columns(i, d) = pw;
  }
  b.random_columns.setZero(n, k);
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      double z = x[i] - knots[j];
      if (z > 0) b.random_columns(i, j) = std::pow(z, g);
    }
  return b;
}

DesignMatrices build_design(const ModelFormula& f, const Dataset& d) {
  DesignMatrices dm;
  dm.n = static_cast<int>(d.n);

  auto numeric_col = [&](const std::string& name) -> Eigen::VectorXd {
    const Column& c = d.require(name);
    if (!c.numeric) throw input_error("variable must be numeric: " + name);
    return c.values;
  };

  // fixed part
  std::vector<Eigen::VectorXd> xcols;
  if (f.intercept) {
    xcols.push_back(Eigen::VectorXd::Ones(dm.n));
    dm.x_names.push_back("(Intercept)");
  }
  for (const auto& v : f.fixed) {
    xcols.push_back(numeric_col(v));
    dm.x_names.push_back(v);
  }
  for (const auto& s : f.smooths) {
    SmoothBasis b = truncated_poly_basis(numeric_col(s.variable), s.degree, s.k);
    for (int dgr = 1; dgr <= s.degree; ++dgr) {
      xcols.push_back(b.fixed_columns.col(dgr));
      dm.x_names.push_back(dgr == 1 ? s.variable
                                    : s.variable + "^" + std::to_string(dgr));
    }
    dm.smooth_bases.push_back(std::move(b));
  }
  dm.p = static_cast<int>(xcols.size());
  dm.X.resize(dm.n, dm.p);
  for (int jc = 0; jc < dm.p; ++jc) dm.X.col(jc) = xcols[jc];

  // random part
  std::vector<Eigen::Triplet<double>> trips;
  int zoff = 0, toff = 0;
  std::vector<std::string> used_names;
  auto display_name = [&](const std::string& base) {
    int count = static_cast<int>(std::count(used_names.begin(), used_names.end(), base));
    used_names.push_back(base);
    return count == 0 ? base : base + "." + std::to_string(count);
  };

  for (size_t ti = 0; ti < f.randoms.size(); ++ti) {
    const RandomTerm& t = f.randoms[ti];
    Column g = d.as_categorical(t.group);
    int nlev = static_cast<int>(g.levels.size());
    if (nlev < 2) throw input_error("grouping variable has fewer than 2 levels: " + t.group);

    LambdaBlock b;
    b.z_offset = zoff;
    b.dim = t.n_components();
    b.nlev = nlev;
    b.theta_offset = toff;
    b.correlated = t.correlated && b.dim > 1;
    b.group = display_name(t.group);
    b.components = t.component_names();
    b.term_index = static_cast<int>(ti);

    std::vector<Eigen::VectorXd> comps;
    if (t.has_intercept) comps.push_back(Eigen::VectorXd::Ones(dm.n));
    for (const auto& v : t.slopes) comps.push_back(numeric_col(v));
    for (int i = 0; i < dm.n; ++i) {
      int lev = g.codes[i];
      for (int c = 0; c < b.dim; ++c) {
        double v = comps[c][i];
        if (v != 0.0) trips.emplace_back(i, zoff + lev * b.dim + c, v);
      }
    }
    zoff += b.z_count();
    toff += b.theta_count();
    dm.blocks.push_back(std::move(b));
  }

  for (size_t si = 0; si < f.smooths.size(); ++si) {
    const SmoothBasis& sb = dm.smooth_bases[si];
    int k = static_cast<int>(sb.knots.size());
    LambdaBlock b;
    b.z_offset = zoff;
    b.dim = 1;
    b.nlev = k;
    b.theta_offset = toff;
    b.correlated = false;
    b.group = display_name(render_smooth_term(f.smooths[si]));
    b.components = {"(Intercept)"};
    b.term_index = -1;
    for (int i = 0; i < dm.n; ++i)
      for (int j = 0; j < k; ++j)
        if (sb.random_columns(i, j) != 0.0)
          trips.emplace_back(i, zoff + j, sb.random_columns(i, j));
    zoff += k;
    toff += 1;
    dm.blocks.push_back(std::move(b));
  }

  dm.q = zoff;
  dm.theta_dim = toff;
  dm.Z.resize(dm.n, dm.q);
  dm.Z.setFromTriplets(trips.begin(), trips.end());
  dm.Z.makeCompressed();
  return dm;
}

Eigen::SparseMatrix<double> lambda_factor(const DesignMatrices& dm, const Eigen::VectorXd& theta,
                                          bool keep_structural_zeros) {
  if (theta.size() != dm.theta_dim) throw input_error("lambda_factor: theta length mismatch");
  std::vector<Eigen::Triplet<double>> trips;
  for (const auto& b : dm.blocks) {
    int t = b.theta_offset;
    for (int col = 0; col < b.dim; ++col)
      for (int row = col; row < b.dim; ++row, ++t) {
        double v = theta[t];
        if (v == 0.0 && !keep_structural_zeros) continue;
        for (int l = 0; l < b.nlev; ++l)
          trips.emplace_back(b.z_offset + l * b.dim + row, b.z_offset + l * b.dim + col, v);
      }
  }
  Eigen::SparseMatrix<double> L(dm.q, dm.q);
  L.setFromTriplets(trips.begin(), trips.end());
  L.makeCompressed();
  return L;
}

Eigen::SparseMatrix<double> dtheta_pattern(const DesignMatrices& dm, int j) {
  if (j < 0 || j >= dm.theta_dim) throw input_error("dtheta_pattern: index out of range");
  std::vector<Eigen::Triplet<double>> trips;
  for (const auto& b : dm.blocks) {
    if (j < b.theta_offset || j >= b.theta_offset + b.theta_count()) continue;
    int t = b.theta_offset;
    for (int col = 0; col < b.dim; ++col)
      for (int row = col; row < b.dim; ++row, ++t) {
        if (t != j) continue;
        for (int l = 0; l < b.nlev; ++l) {
          int r = b.z_offset + l * b.dim + row, c = b.z_offset + l * b.dim + col;
          trips.emplace_back(r, c, 1.0);
          if (r != c) trips.emplace_back(c, r, 1.0);
        }
      }
  }
  Eigen::SparseMatrix<double> D(dm.q, dm.q);
  D.setFromTriplets(trips.begin(), trips.end());
  D.makeCompressed();
  return D;
}

DesignMatrices subset_design(const DesignMatrices& dm, const std::vector<std::vector<int>>& kept) {
  DesignMatrices out;
  out.X = dm.X;
  out.x_names = dm.x_names;
  out.smooth_bases = dm.smooth_bases;
  out.n = dm.n;
  out.p = dm.p;

  std::vector<int> cols;  // old Z columns, in new order
  int z_off = 0, t_off = 0, new_ti = 0;
  for (const auto& b : dm.blocks) {
    std::vector<int> comps;
    if (b.term_index < 0) {
      comps.resize(b.dim);
      for (int c = 0; c < b.dim; ++c) comps[c] = c;
    } else {
      if (b.term_index >= static_cast<int>(kept.size()))
        throw input_error("subset_design: need one kept-list per random term");
      comps = kept[b.term_index];
      std::sort(comps.begin(), comps.end());
      for (int c : comps)
        if (c < 0 || c >= b.dim) throw input_error("subset_design: component index out of range");
    }
    if (comps.empty()) continue;

    LambdaBlock nb = b;
    nb.dim = static_cast<int>(comps.size());
    nb.z_offset = z_off;
    nb.theta_offset = t_off;
    nb.correlated = b.correlated && nb.dim >= 2;
    nb.term_index = b.term_index < 0 ? -1 : new_ti++;
    nb.components.clear();
    for (int c : comps) nb.components.push_back(b.components[c]);
    for (int l = 0; l < b.nlev; ++l)
      for (int c : comps) cols.push_back(b.z_offset + l * b.dim + c);
    z_off += nb.z_count();
    t_off += nb.theta_count();
    out.blocks.push_back(std::move(nb));
  }
  out.q = z_off;
  out.theta_dim = t_off;

  std::vector<Eigen::Triplet<double>> trips;
  for (int jn = 0; jn < static_cast<int>(cols.size()); ++jn)
    for (Eigen::SparseMatrix<double>::InnerIterator it(dm.Z, cols[jn]); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), jn, it.value());
  Eigen::SparseMatrix<double> Znew(dm.n, out.q);
  Znew.setFromTriplets(trips.begin(), trips.end());
  Znew.makeCompressed();
  out.Z = Znew;
  return out;
}

}  // namespace mixsel
