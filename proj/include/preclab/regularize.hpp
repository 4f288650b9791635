#pragma once

#include <string>
#include <vector>

#include "preclab/models.hpp"
#include "preclab/optim.hpp"

namespace preclab {

enum class RegKind {
  none,
  l2_in_p,                 // penalty lambda ||p||^2, gradient preconditioned as-is
  l2_in_z,                 // penalty lambda ||z||^2 in transformed coordinates == weight decay
  grad_reg_in_p,           // penalty lambda ||grad_p L||^2
  grad_reg_in_z,           // penalty lambda ||grad_z L||^2 in transformed coordinates
  decoupled_weight_decay,  // AdamW-style decay outside the preconditioner
};
RegKind reg_kind_from_name(const std::string& name);

struct RegMode {
  RegKind kind = RegKind::none;
  double lambda = 0.0;
  void validate() const;  // lambda >= 0, and kind none forces lambda 0
};

// Hessian-vector product by central differences of the analytic gradient,
// step h = 1e-5 / (1 + ||v||); exact for quadratics. v = 0 returns 0.
Vector hvp(const LossModel& model, const ParamVector& p, const Vector& v, const Dataset& data);

// p' = p - alpha M g - 2 alpha lambda p        (decay outside M)
ParamVector step_l2_in_z(const ParamVector& p, const ParamVector& g, double alpha, double lambda,
                         const FixedPreconditioner& m);

// p' = p - alpha M (g + 2 lambda p)            (penalty gradient through M)
ParamVector step_l2_in_p(const ParamVector& p, const ParamVector& g, double alpha, double lambda,
                         const FixedPreconditioner& m);

// p' = p - alpha M (g + 2 lambda H g)          with H g by finite-difference HVP
ParamVector step_grad_reg_in_p(const LossModel& model, const ParamVector& p, double alpha,
                               double lambda, const FixedPreconditioner& m, const Dataset& data);

// p' = p - alpha M g - 2 alpha lambda M H M g  (the transformed-coordinate penalty)
ParamVector step_grad_reg_in_z(const LossModel& model, const ParamVector& p, double alpha,
                               double lambda, const FixedPreconditioner& m, const Dataset& data);

// Adam update followed by decay on the pre-step parameters:
// p' = adam(p) - alpha lambda_w p. cfg.alpha is ignored in favor of alpha.
StepResult adamw_step(OptimizerState state, const ParamVector& p, const ParamVector& g,
                      double alpha, double lambda_w, const OptimizerConfig& cfg);

struct EquivalenceReport {
  std::vector<double> lambdas;
  std::vector<double> distances;        // sup over steps of ||p_l2(t) - p_decay(t)||
  std::vector<double> final_distances;  // ||p_l2(T) - p_decay(T)||
  double min_distance = 0.0;
  double min_final_distance = 0.0;
  double best_lambda = 0.0;
};

// Runs the optimizer on the L2-regularized loss for every lambda in the grid
// and the same optimizer with decoupled decay lambda_w, reporting the
// trajectory distances. With kind == gd the two coincide at lambda =
// lambda_w / 2; with adam no lambda matches.
EquivalenceReport verify_no_equivalence(const LossModel& model, const Dataset& data,
                                        OptimizerKind kind, double alpha, double lambda_w,
                                        const std::vector<double>& lambda_grid,
                                        std::int64_t steps, const ParamVector& p0,
                                        const OptimizerConfig& cfg = {});

}  // namespace preclab
