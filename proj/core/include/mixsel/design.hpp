#ifndef MIXSEL_DESIGN_HPP
#define MIXSEL_DESIGN_HPP

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <string>
#include <vector>

#include "mixsel/data.hpp"
#include "mixsel/formula.hpp"

namespace mixsel {

// Truncated polynomial basis: fixed part [1, x, ..., x^g], random part
// (x - kappa_j)_+^g with knots at equally spaced quantiles of the interior
// unique covariate values.
struct SmoothBasis {
  Eigen::MatrixXd fixed_columns;   // n x (g+1)
  Eigen::MatrixXd random_columns;  // n x k
  Eigen::VectorXd knots;           // strictly ascending
};

// One block of the relative covariance factor: nlev repeats of a dim x dim
// lower-triangular factor along the diagonal, occupying Z columns
// [z_offset, z_offset + nlev*dim) in level-major order and theta entries
// [theta_offset, theta_offset + dim*(dim+1)/2) in column-major lower-
// triangular order (so the first entry of each column is its diagonal).
struct LambdaBlock {
  int z_offset = 0;
  int dim = 1;
  int nlev = 0;
  int theta_offset = 0;
  bool correlated = false;
  std::string group;                    // display name; repeats get ".1", ".2", ...
  std::vector<std::string> components;  // "(Intercept)" and slope names
  int term_index = -1;                  // index into formula.randoms; -1 for a smooth block

  int theta_count() const { return dim * (dim + 1) / 2; }
  int z_count() const { return nlev * dim; }
};

struct DesignMatrices {
  Eigen::MatrixXd X;
  Eigen::SparseMatrix<double> Z;
  std::vector<LambdaBlock> blocks;
  int n = 0, p = 0, q = 0, theta_dim = 0;
  std::vector<std::string> x_names;
  std::vector<SmoothBasis> smooth_bases;  // parallel to formula.smooths

  // true where theta index j is a diagonal entry of its block (box-constrained >= 0)
  std::vector<bool> theta_diagonal() const;
  Eigen::VectorXd default_theta() const;  // identity-factor start: diagonal 1, off-diagonal 0
};

// X columns: intercept, fixed variables in formula order, then each smooth's
// polynomial part (powers 1..g). Z blocks: random terms in formula order,
// then one scalar iid block per smooth (k levels).
DesignMatrices build_design(const ModelFormula& f, const Dataset& d);

// New design keeping, for each random-term block, only the component indices
// listed in kept[block.term_index] (ascending). Terms with an empty kept list
// disappear; smooth blocks are always carried over. Equivalent to rebuilding
// from the correspondingly reduced formula, without needing the raw data.
DesignMatrices subset_design(const DesignMatrices& dm, const std::vector<std::vector<int>>& kept);

// Block-diagonal lower-triangular q x q factor at theta.  With
// keep_structural_zeros the sparsity pattern is independent of theta (zero
// entries stay structural), so downstream factorizations can reuse their
// symbolic analysis.
Eigen::SparseMatrix<double> lambda_factor(const DesignMatrices& dm, const Eigen::VectorXd& theta,
                                          bool keep_structural_zeros = false);

// Symmetric 0/1 pattern of the scaled-covariance derivative in theta_j:
// ones where entry j occupies a position of Lambda Lambda' (symmetrized,
// diagonal counted once).
Eigen::SparseMatrix<double> dtheta_pattern(const DesignMatrices& dm, int j);

SmoothBasis truncated_poly_basis(const Eigen::VectorXd& x, int g, int k);

}  // namespace mixsel

#endif
