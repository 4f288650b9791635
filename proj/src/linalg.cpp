#include "preclab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "preclab/errors.hpp"

namespace preclab {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiMaxSweeps = 100;
constexpr double kSingularRatio = 1e-14;

double offdiag_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

SymEig sym_eigvals(const Matrix& a, bool with_vectors) {
  if (!a.square()) throw ValidationError("sym_eigvals: matrix must be square and nonempty");
  const double anorm = a.frobenius_norm();
  if (a.symmetry_gap() > kSymmetryTol * std::max(1.0, anorm))
    throw ValidationError("sym_eigvals: matrix is not symmetric");

  const std::size_t n = a.rows();
  Matrix b = a;
  // Work on the symmetrized copy; the asymmetry is below tolerance.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (b(i, j) + b(j, i));
      b(i, j) = v;
      b(j, i) = v;
    }

  Matrix q = with_vectors ? Matrix::identity(n) : Matrix();

  bool converged = anorm == 0.0;
  for (int sweep = 0; !converged && sweep < kJacobiMaxSweeps; ++sweep) {
    if (offdiag_norm(b) <= kJacobiTol * anorm) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double apq = b(p, r);
        if (apq == 0.0) continue;
        const double theta = (b(r, r) - b(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double bkp = b(k, p), bkr = b(k, r);
          b(k, p) = c * bkp - s * bkr;
          b(k, r) = s * bkp + c * bkr;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double bpk = b(p, k), brk = b(r, k);
          b(p, k) = c * bpk - s * brk;
          b(r, k) = s * bpk + c * brk;
        }
        if (with_vectors) {
          for (std::size_t k = 0; k < n; ++k) {
            const double qkp = q(k, p), qkr = q(k, r);
            q(k, p) = c * qkp - s * qkr;
            q(k, r) = s * qkp + c * qkr;
          }
        }
      }
    }
    if (offdiag_norm(b) <= kJacobiTol * anorm) converged = true;
  }
  if (!converged)
    throw NumericalError("sym_eigvals: Jacobi sweeps did not converge within 100 sweeps");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return b(i, i) < b(j, j); });

  SymEig out;
  out.eigenvalues.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.eigenvalues[k] = b(order[k], order[k]);
  if (with_vectors) {
    Matrix vecs(n, n);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i) vecs(i, k) = q(i, order[k]);
    out.eigenvectors = std::move(vecs);
  }
  return out;
}

double condition_number(const Matrix& spd) {
  const SymEig eig = sym_eigvals(spd);
  const double lmin = eig.eigenvalues.front();
  const double lmax = eig.eigenvalues.back();
  if (lmin <= kSingularRatio * lmax)
    throw SingularityError("condition_number: matrix numerically singular (lambda_min " +
                               std::to_string(lmin) + ", lambda_max " + std::to_string(lmax) + ")",
                           lmin, lmax);
  return lmax / lmin;
}

namespace {

double gram_sigma_ratio(const Matrix& gram, const char* what) {
  const SymEig eig = sym_eigvals(gram);
  const double lmax = std::max(eig.eigenvalues.back(), 0.0);
  const double lmin = eig.eigenvalues.front();
  if (lmin <= kSingularRatio * lmax)
    throw SingularityError(std::string(what) + ": rank-deficient matrix",
                           std::sqrt(std::max(lmin, 0.0)), std::sqrt(lmax));
  return std::sqrt(lmax / lmin);
}

}  // namespace

double stacked_condition_number(const Matrix& b) {
  if (b.empty()) throw ValidationError("stacked_condition_number: empty matrix");
  // Gram matrix on the smaller side; singular values are sqrt eigenvalues.
  Matrix gram = b.rows() <= b.cols() ? b * b.transposed() : b.transposed() * b;
  return gram_sigma_ratio(gram, "stacked_condition_number");
}

Matrix row_equilibrate(const Matrix& a, double t) {
  if (a.empty()) throw ValidationError("row_equilibrate: empty matrix");
  if (!(t > 0.0)) throw ValidationError("row_equilibrate: t must be positive");
  Matrix d(a.rows(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
    if (s == 0.0)
      throw ValidationError("row_equilibrate: zero row at index " + std::to_string(i));
    d(i, i) = t / std::sqrt(s);
  }
  return d;
}

Matrix extend(const Matrix& x) {
  if (x.empty()) throw ValidationError("extend: empty data matrix");
  Matrix out(x.rows() + 1, x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) = 1.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i + 1, j) = x(i, j);
  return out;
}

Standardization standardize(const Matrix& x) {
  if (x.empty()) throw ValidationError("standardize: empty data matrix");
  const std::size_t n = x.rows(), cols = x.cols();
  const double num = static_cast<double>(cols);
  Standardization out;
  out.data = Matrix(n, cols);
  out.mu.resize(n);
  out.sigma.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < cols; ++j) m += x(i, j);
    m /= num;
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = x(i, j) - m;
      var += d * d;
    }
    var /= num;  // population convention
    const double sigma = var > 1e-12 ? std::sqrt(var) : 1.0;
    out.mu[i] = m;
    out.sigma[i] = sigma;
    for (std::size_t j = 0; j < cols; ++j) out.data(i, j) = (x(i, j) - m) / sigma;
  }
  return out;
}

Matrix min_max_normalize(const Matrix& x) {
  if (x.empty()) throw ValidationError("min_max_normalize: empty data matrix");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double lo = x(i, 0), hi = x(i, 0);
    for (std::size_t j = 1; j < x.cols(); ++j) {
      lo = std::min(lo, x(i, j));
      hi = std::max(hi, x(i, j));
    }
    if (hi == lo) continue;  // degenerate feature maps to 0
    const double range = hi - lo;
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - lo) / range;
  }
  return out;
}

CenteringCheck centering_inequality_check(const Matrix& x) {
  if (x.empty()) throw ValidationError("centering_inequality_check: empty data matrix");
  const std::size_t n = x.rows(), cols = x.cols();
  Matrix centered(n, cols);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < cols; ++j) m += x(i, j);
    m /= static_cast<double>(cols);
    for (std::size_t j = 0; j < cols; ++j) centered(i, j) = x(i, j) - m;
  }
  // Full row rank of the stacks is a precondition, so the condition numbers
  // come from the row Gram even when there are fewer samples than rows.
  const Matrix raw_e = extend(x);
  const Matrix cen_e = extend(centered);
  CenteringCheck out;
  out.kappa_raw = gram_sigma_ratio(raw_e * raw_e.transposed(), "centering_inequality_check");
  out.kappa_centered = gram_sigma_ratio(cen_e * cen_e.transposed(), "centering_inequality_check");
  return out;
}

Matrix cholesky_factor(const Matrix& spd) {
  if (!spd.square()) throw ValidationError("cholesky_factor: matrix must be square");
  const std::size_t n = spd.rows();
  if (spd.symmetry_gap() > kSymmetryTol * std::max(1.0, spd.frobenius_norm()))
    throw ValidationError("cholesky_factor: matrix is not symmetric");
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = spd(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > 0.0))
          throw ValidationError("cholesky_factor: matrix is not positive definite (pivot " +
                                std::to_string(s) + " at " + std::to_string(i) + ")");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

Vector cholesky_solve(const Matrix& chol_lower, const Vector& rhs) {
  const std::size_t n = chol_lower.rows();
  if (rhs.size() != n) throw ValidationError("cholesky_solve: dimension mismatch");
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= chol_lower(i, k) * y[k];
    y[i] = s / chol_lower(i, i);
  }
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= chol_lower(k, ii) * x[k];
    x[ii] = s / chol_lower(ii, ii);
  }
  return x;
}

Matrix spd_inverse(const Matrix& spd) {
  const SymEig eig = sym_eigvals(spd, true);
  const double lmax = eig.eigenvalues.back();
  const double lmin = eig.eigenvalues.front();
  if (lmin <= kSingularRatio * lmax)
    throw SingularityError("spd_inverse: matrix numerically singular", lmin, lmax);
  const Matrix& q = *eig.eigenvectors;
  const std::size_t n = spd.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += q(i, k) * q(j, k) / eig.eigenvalues[k];
      out(i, j) = s;
      out(j, i) = s;
    }
  return out;
}

}  // namespace preclab
