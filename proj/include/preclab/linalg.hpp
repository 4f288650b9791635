#pragma once

#include <optional>

#include "preclab/matrix.hpp"

namespace preclab {

struct SymEig {
  Vector eigenvalues;                 // ascending
  std::optional<Matrix> eigenvectors; // columns, same order as eigenvalues
};

// Eigenvalues (and optionally eigenvectors) of a symmetric matrix by cyclic
// Jacobi rotations. Iterates until the off-diagonal Frobenius norm drops
// below 1e-12 * ||A||_F; throws NumericalError after 100 sweeps without
// convergence and ValidationError for non-square or asymmetric input
// (relative symmetry tolerance 1e-12).
SymEig sym_eigvals(const Matrix& a, bool with_vectors = false);

// lambda_max / lambda_min of a symmetric positive definite matrix.
// Throws SingularityError when lambda_min <= 1e-14 * lambda_max.
double condition_number(const Matrix& spd);

// Condition number of a rectangular (or square non-symmetric) matrix as the
// ratio of its extreme singular values, computed through the eigenvalues of
// the smaller Gram matrix. Rank deficiency raises SingularityError.
double stacked_condition_number(const Matrix& b);

// Diagonal D = t * diag{1/||row_i||} so that every row of D*A has 2-norm t.
// A zero row raises ValidationError naming the row.
Matrix row_equilibrate(const Matrix& a, double t);

// Prepend an all-ones row: [e^T; X].
Matrix extend(const Matrix& x);

struct Standardization {
  Matrix data;  // (X - mu e^T) / sigma, rowwise
  Vector mu;    // per-feature mean
  Vector sigma; // per-feature population std, floored to 1 for constant rows
};

// Per-feature (per-row) centering and scaling to zero mean and unit
// population standard deviation. Features whose variance is below 1e-12
// keep sigma = 1 so the operation stays total.
Standardization standardize(const Matrix& x);

// Per-feature (x - min) / (max - min); rows with max == min map to zero.
Matrix min_max_normalize(const Matrix& x);

struct CenteringCheck {
  double kappa_centered;  // kappa([e^T; X - mu e^T])
  double kappa_raw;       // kappa([e^T; X])
};

// Condition numbers of the extended data matrix before and after centering.
// Centering never hurts: kappa_centered <= kappa_raw (callers assert with a
// 1e-10 slack). Rank-deficient stacks raise SingularityError.
CenteringCheck centering_inequality_check(const Matrix& x);

// Lower-triangular L with A = L L^T. Throws ValidationError if A is not
// symmetric positive definite.
Matrix cholesky_factor(const Matrix& spd);

// Solve A x = rhs given the Cholesky factor of A.
Vector cholesky_solve(const Matrix& chol_lower, const Vector& rhs);

// Inverse of a symmetric positive definite matrix via its eigensystem.
Matrix spd_inverse(const Matrix& spd);

}  // namespace preclab
