#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "preclab/linalg.hpp"
#include "preclab/matrix.hpp"
#include "preclab/models.hpp"

namespace preclab {

enum class InitConvention {
  zero_init_bias_corrected,  // accumulators start at 0, averages rescaled by 1/(1-rho^t)
  first_gradient_init,       // first step seeds r = g^2 (and m = g); no correction
};

struct OptimizerConfig {
  double alpha = 1e-3;
  double rho = 0.9;       // squared-gradient decay
  double rho_hat = 0.9;   // momentum decay; 0 switches momentum off
  double epsilon = 1e-8;  // added outside the square root
  InitConvention init = InitConvention::first_gradient_init;

  void validate() const;
};

struct OptimizerState {
  std::int64_t t = 0;  // completed steps
  Vector r;            // squared-gradient accumulator, entrywise >= 0
  Vector m;            // momentum

  static OptimizerState zeros(std::size_t n);
};

// Symmetric positive definite M = P P^T applied to gradients. The Cholesky
// factor P is kept for the implicit-coordinates diagnostics.
class FixedPreconditioner {
 public:
  explicit FixedPreconditioner(Matrix m);
  static FixedPreconditioner identity(std::size_t n);

  const Matrix& matrix() const { return m_; }
  const Matrix& factor() const { return chol_; }  // lower triangular P
  Vector apply(const Vector& v) const { return m_ * v; }
  std::size_t dim() const { return m_.rows(); }

 private:
  Matrix m_;
  Matrix chol_;
};

// p' = p - alpha g
ParamVector gd_step(const ParamVector& p, const ParamVector& g, double alpha);

// p' = p - alpha M g
ParamVector precond_gd_step(const ParamVector& p, const ParamVector& g, double alpha,
                            const FixedPreconditioner& m);

// Condition number seen by the implicit iteration: kappa(P^T H P) for the
// Cholesky factor P of M (same spectrum as M H).
double precond_kappa(const FixedPreconditioner& m, const Matrix& hessian);

// alpha = 2 / (lambda_min + lambda_max)
double optimal_lr(double lambda_min, double lambda_max);

// r = (kappa - 1) / (kappa + 1), kappa >= 1
double theoretical_rate(double kappa);

struct StepResult {
  OptimizerState state;
  ParamVector p;
};

// r' = r + g^2; p' = p - alpha g / (sqrt(r') + eps)
StepResult adagrad_step(OptimizerState state, const ParamVector& p, const ParamVector& g,
                        const OptimizerConfig& cfg);

// r' = rho r + (1-rho) g^2, except the very first step under
// first_gradient_init which seeds r' = g^2; p' = p - alpha g / (sqrt(r') + eps)
StepResult rmsprop_step(OptimizerState state, const ParamVector& p, const ParamVector& g,
                        const OptimizerConfig& cfg);

// The accumulator after feeding the whole gradient sequence with
// first-gradient initialization, written as the explicit weighted average
// r_t = rho^{t-1} g_1^2 + (1 - rho^{t-1}) * sum_{i>=2} rho^{t-i} g_i^2 / sum rho^{t-i}.
Vector rmsprop_closed_form(const std::vector<Vector>& g_sequence, double rho);

// Momentum + RMSProp accumulators; bias correction only under
// zero_init_bias_corrected (the correction factor saturates at 1 once
// rho^t underflows).
StepResult adam_step(OptimizerState state, const ParamVector& p, const ParamVector& g,
                     const OptimizerConfig& cfg);

enum class OptimizerKind { gd, adagrad, rmsprop, adam, adamw };
OptimizerKind optimizer_kind_from_name(const std::string& name);

// Stateful step callable: (p, g) -> p'. weight_decay applies only to adamw;
// fixed_m only to gd.
std::function<ParamVector(const ParamVector&, const ParamVector&)> make_optimizer_step(
    OptimizerKind kind, const OptimizerConfig& cfg, std::size_t param_count,
    std::optional<FixedPreconditioner> fixed_m = std::nullopt, double weight_decay = 0.0);

struct RunRecord {
  struct Row {
    std::int64_t step;
    double loss;
    double grad_norm;
    std::optional<double> dist_to_opt;
  };
  std::vector<Row> rows;   // step t holds loss/gradient at p_t, before stepping
  ParamVector final_params;
  double final_loss = 0.0;
  double wall_time_sec = 0.0;
  std::optional<double> empirical_rate;  // filled by callers that measure it
};

// Drives any step function for `steps` iterations from p0, recording loss,
// gradient norm and (when the model knows its minimizer) distance to it.
// Aborts with NumericalError if the loss exceeds 1e12 or turns non-finite.
RunRecord run(const LossModel& model, const Dataset& data,
              const std::function<ParamVector(const ParamVector&, const ParamVector&)>& step,
              std::int64_t steps, ParamVector p0);

// Geometric mean of successive distance ratios over the trailing
// tail_fraction of the recorded steps. A distance of exactly zero anywhere
// in the tail reports rate 0; ratios >= 1.5 in the tail raise
// ValidationError (trajectory not contracting).
double empirical_rate(const RunRecord& record, double tail_fraction = 0.5);

}  // namespace preclab
