#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace preclab {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Sized for desk-scale problems
// (everything here is n <= a few hundred); no sparsity, no views.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, Vector entries);

  static Matrix identity(std::size_t n);
  static Matrix diag(const Vector& d);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }
  bool square() const { return rows_ == cols_ && rows_ > 0; }

  double& operator()(std::size_t i, std::size_t j) { return entries_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }

  const Vector& entries() const { return entries_; }
  Vector& entries() { return entries_; }

  Vector row(std::size_t i) const;
  Vector col(std::size_t j) const;
  void set_row(std::size_t i, const Vector& values);

  Matrix transposed() const;
  double trace() const;
  double frobenius_norm() const;
  double max_abs() const;
  // max_ij |a_ij - a_ji|; zero for exactly symmetric matrices.
  double symmetry_gap() const;
  bool all_finite() const;

  Matrix operator*(const Matrix& rhs) const;
  Vector operator*(const Vector& v) const;
  Matrix& operator+=(const Matrix& rhs);
  Matrix& operator-=(const Matrix& rhs);
  Matrix& operator*=(double c);

  friend Matrix operator+(Matrix lhs, const Matrix& rhs) { return lhs += rhs; }
  friend Matrix operator-(Matrix lhs, const Matrix& rhs) { return lhs -= rhs; }
  friend Matrix operator*(double c, Matrix m) { return m *= c; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector entries_;
};

// Small vector helpers used throughout; all sizes must already agree.
double dot(const Vector& a, const Vector& b);
double norm2(const Vector& a);
double norm_inf(const Vector& a);
Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector scaled(const Vector& a, double c);
bool all_finite(const Vector& a);

}  // namespace preclab
