#pragma once

#include <cmath>
#include <cstddef>

#include "preclab/errors.hpp"
#include "preclab/matrix.hpp"

namespace preclab {

inline double mean(const Vector& v) {
  if (v.empty()) throw ValidationError("mean: empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double pearson_correlation(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ValidationError("pearson_correlation: need two equally sized samples");
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw ValidationError("pearson_correlation: zero variance sample");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace preclab
