#include "preclab/regularize.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "preclab/errors.hpp"

namespace preclab {

RegKind reg_kind_from_name(const std::string& name) {
  if (name == "none") return RegKind::none;
  if (name == "l2_in_p") return RegKind::l2_in_p;
  if (name == "l2_in_z") return RegKind::l2_in_z;
  if (name == "grad_reg_in_p") return RegKind::grad_reg_in_p;
  if (name == "grad_reg_in_z") return RegKind::grad_reg_in_z;
  if (name == "decoupled_weight_decay") return RegKind::decoupled_weight_decay;
  throw ValidationError("unknown regularization kind '" + name + "'");
}

void RegMode::validate() const {
  if (!(lambda >= 0.0)) throw ValidationError("RegMode: lambda must be >= 0");
  if (kind == RegKind::none && lambda != 0.0)
    throw ValidationError("RegMode: kind none requires lambda = 0");
}

Vector hvp(const LossModel& model, const ParamVector& p, const Vector& v, const Dataset& data) {
  if (v.size() != p.size()) throw ValidationError("hvp: v not sized for p");
  const double vnorm = norm2(v);
  if (vnorm == 0.0) return Vector(p.size(), 0.0);
  const double h = 1e-5 / (1.0 + vnorm);
  ParamVector up = p, down = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    up[i] += h * v[i];
    down[i] -= h * v[i];
  }
  const ParamVector gu = model.gradient(up, data);
  const ParamVector gd = model.gradient(down, data);
  if (!all_finite(gu) || !all_finite(gd))
    throw NumericalError("hvp: non-finite gradient at perturbed point");
  Vector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = (gu[i] - gd[i]) / (2.0 * h);
  return out;
}

ParamVector step_l2_in_z(const ParamVector& p, const ParamVector& g, double alpha, double lambda,
                         const FixedPreconditioner& m) {
  if (!(lambda >= 0.0)) throw ValidationError("step_l2_in_z: lambda must be >= 0");
  const Vector mg = m.apply(g);
  ParamVector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    out[i] = p[i] - alpha * mg[i] - 2.0 * alpha * lambda * p[i];
  return out;
}

ParamVector step_l2_in_p(const ParamVector& p, const ParamVector& g, double alpha, double lambda,
                         const FixedPreconditioner& m) {
  if (!(lambda >= 0.0)) throw ValidationError("step_l2_in_p: lambda must be >= 0");
  Vector reg_g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) reg_g[i] = g[i] + 2.0 * lambda * p[i];
  return precond_gd_step(p, reg_g, alpha, m);
}

ParamVector step_grad_reg_in_p(const LossModel& model, const ParamVector& p, double alpha,
                               double lambda, const FixedPreconditioner& m, const Dataset& data) {
  if (!(lambda >= 0.0)) throw ValidationError("step_grad_reg_in_p: lambda must be >= 0");
  const ParamVector g = model.gradient(p, data);
  const Vector hg = hvp(model, p, g, data);
  Vector reg_g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) reg_g[i] = g[i] + 2.0 * lambda * hg[i];
  return precond_gd_step(p, reg_g, alpha, m);
}

ParamVector step_grad_reg_in_z(const LossModel& model, const ParamVector& p, double alpha,
                               double lambda, const FixedPreconditioner& m, const Dataset& data) {
  if (!(lambda >= 0.0)) throw ValidationError("step_grad_reg_in_z: lambda must be >= 0");
  const ParamVector g = model.gradient(p, data);
  const Vector mg = m.apply(g);
  const Vector h_mg = hvp(model, p, mg, data);
  const Vector m_h_mg = m.apply(h_mg);
  ParamVector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    out[i] = p[i] - alpha * mg[i] - 2.0 * alpha * lambda * m_h_mg[i];
  return out;
}

StepResult adamw_step(OptimizerState state, const ParamVector& p, const ParamVector& g,
                      double alpha, double lambda_w, const OptimizerConfig& cfg) {
  if (!(lambda_w >= 0.0)) throw ValidationError("adamw_step: lambda_w must be >= 0");
  OptimizerConfig with_alpha = cfg;
  with_alpha.alpha = alpha;
  StepResult res = adam_step(std::move(state), p, g, with_alpha);
  // Decay on the pre-step parameters, outside the adaptive preconditioner.
  for (std::size_t i = 0; i < p.size(); ++i) res.p[i] -= alpha * lambda_w * p[i];
  return res;
}

EquivalenceReport verify_no_equivalence(const LossModel& model, const Dataset& data,
                                        OptimizerKind kind, double alpha, double lambda_w,
                                        const std::vector<double>& lambda_grid,
                                        std::int64_t steps, const ParamVector& p0,
                                        const OptimizerConfig& cfg) {
  if (kind != OptimizerKind::gd && kind != OptimizerKind::adam)
    throw ValidationError("verify_no_equivalence: supported optimizers are gd and adam");
  if (lambda_grid.empty()) throw ValidationError("verify_no_equivalence: empty lambda grid");
  if (steps < 0) throw ValidationError("verify_no_equivalence: negative step count");
  if (p0.size() != model.param_count())
    throw ValidationError("verify_no_equivalence: p0 not sized for the model");

  OptimizerConfig base = cfg;
  base.alpha = alpha;
  base.validate();

  // Decoupled-decay trajectory, once.
  std::vector<ParamVector> decay_traj;
  decay_traj.reserve(static_cast<std::size_t>(steps) + 1);
  {
    ParamVector p = p0;
    OptimizerState state = OptimizerState::zeros(p0.size());
    decay_traj.push_back(p);
    for (std::int64_t t = 0; t < steps; ++t) {
      const ParamVector g = model.gradient(p, data);
      if (kind == OptimizerKind::gd) {
        ParamVector next = gd_step(p, g, alpha);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] -= alpha * lambda_w * p[i];
        p = std::move(next);
      } else {
        StepResult res = adamw_step(std::move(state), p, g, alpha, lambda_w, base);
        state = std::move(res.state);
        p = std::move(res.p);
      }
      decay_traj.push_back(p);
    }
  }

  EquivalenceReport report;
  report.lambdas = lambda_grid;
  report.min_distance = std::numeric_limits<double>::infinity();
  report.min_final_distance = std::numeric_limits<double>::infinity();
  for (double lambda : lambda_grid) {
    if (!(lambda >= 0.0)) throw ValidationError("verify_no_equivalence: negative lambda");
    ParamVector p = p0;
    OptimizerState state = OptimizerState::zeros(p0.size());
    double dist = 0.0;
    double final_dist = std::numeric_limits<double>::infinity();
    for (std::int64_t t = 0; t <= steps; ++t) {
      const double d = norm2(sub(p, decay_traj[static_cast<std::size_t>(t)]));
      dist = std::max(dist, d);
      if (t == steps) {
        final_dist = d;
        break;
      }
      ParamVector g = model.gradient(p, data);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * lambda * p[i];
      if (kind == OptimizerKind::gd) {
        p = gd_step(p, g, alpha);
      } else {
        StepResult res = adam_step(std::move(state), p, g, base);
        state = std::move(res.state);
        p = std::move(res.p);
      }
      if (!all_finite(p)) {
        dist = std::numeric_limits<double>::infinity();
        break;
      }
    }
    report.distances.push_back(dist);
    report.final_distances.push_back(final_dist);
    report.min_final_distance = std::min(report.min_final_distance, final_dist);
    if (dist < report.min_distance) {
      report.min_distance = dist;
      report.best_lambda = lambda;
    }
  }
  return report;
}

}  // namespace preclab
