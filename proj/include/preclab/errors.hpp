#pragma once

#include <stdexcept>
#include <string>

namespace preclab {

// Error taxonomy mirrored by the CLI exit codes:
//   ValidationError -> 1 (bad inputs, dimensions, config),
//   NumericalError  -> 2 (non-convergence, divergence, singularity).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Singular or numerically rank-deficient operator; carries the extreme
// eigenvalues that triggered the failure.
class SingularityError : public NumericalError {
 public:
  SingularityError(const std::string& what, double lambda_min, double lambda_max)
      : NumericalError(what), lambda_min_(lambda_min), lambda_max_(lambda_max) {}

  double lambda_min() const noexcept { return lambda_min_; }
  double lambda_max() const noexcept { return lambda_max_; }

 private:
  double lambda_min_;
  double lambda_max_;
};

}  // namespace preclab
