#pragma once

#include <optional>
#include <vector>

#include "emf/types.hpp"

namespace emf {

struct SubproblemCaps {
  Index max_inner = 100;
  double tol_gradient = 1e-8;
};

struct SubproblemResult {
  DenseMatrix solution;
  /// One flag per observation, true where the residual at `solution` is >= 0.
  std::vector<bool> sign_pattern;
  /// Largest number of weighted least-squares solves spent on any block.
  Index inner_iterations = 0;
  double initial_gradient_norm = 0.0;
  double final_gradient_norm = 0.0;
  bool converged = false;
  /// Subproblem objective at the warm start and after every sign-set round.
  std::vector<double> objective_history;
};

/// argmin_Y F(x_fixed, Y) + ridge |Y|^2 (the Y half-step of the alternating
/// loop). Completion instances decompose into one k-dimensional problem per
/// column of M; general measurements are solved as one coupled problem with
/// conjugate gradients. Each problem is solved by sign-set iteration: fix the
/// weights from the current residual signs, solve the weighted normal
/// equations, recompute the signs, and stop once they no longer change.
///
/// Throws SingularDesign when ridge is zero and a block's normal matrix is
/// numerically singular. Hitting `caps.max_inner` is not an error; the result
/// comes back with `converged == false`.
SubproblemResult solve_y(const DenseMatrix& x_fixed, const ObservationSet& obs, double omega, double ridge,
                         const std::optional<DenseMatrix>& warm_start = std::nullopt,
                         const SubproblemCaps& caps = {});

/// argmin_X F(X, y_fixed) + ridge |X|^2; mirror of solve_y.
SubproblemResult solve_x(const DenseMatrix& y_fixed, const ObservationSet& obs, double omega, double ridge,
                         const std::optional<DenseMatrix>& warm_start = std::nullopt,
                         const SubproblemCaps& caps = {});

/// Largest instance accepted by reference_qp_solve.
inline constexpr Index kReferenceMaxObservations = 20;
inline constexpr Index kReferenceMaxProducts = 100000;  // p * n * k

/// Test oracle for solve_y on the split-variable QP
///   min omega |r+|^2 + (1-omega) |r-|^2 + ridge |Y|^2,  r+ - r- = b - A(x_fixed Y^T).
/// Enumerates every sign pattern, solves the weighted least-squares problem
/// for each (minimum-norm when singular), and keeps the best. Throws
/// CapExceeded above kReferenceMaxObservations or kReferenceMaxProducts.
DenseMatrix reference_qp_solve(const DenseMatrix& x_fixed, const ObservationSet& obs, double omega,
                               double ridge);

struct QrFactors {
  DenseMatrix q;  // m x k, orthonormal columns
  DenseMatrix r;  // k x k, upper triangular, nonnegative diagonal
};

/// Thin QR with the sign of each column chosen so diag(r) >= 0.
/// Throws RankDeficient when a has (numerically) dependent columns.
QrFactors qr_orthonormalize(const DenseMatrix& a);

}  // namespace emf
