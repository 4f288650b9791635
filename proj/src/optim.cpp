#include "preclab/optim.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <utility>

#include "preclab/errors.hpp"
#include "preclab/regularize.hpp"

namespace preclab {

namespace {

// 0/0 means "no movement on this coordinate", not NaN.
double safe_ratio(double num, double den) { return num == 0.0 ? 0.0 : num / den; }

void check_step_sizes(const OptimizerState& state, const ParamVector& p, const ParamVector& g) {
  if (p.size() != g.size()) throw ValidationError("optimizer step: p and g sizes differ");
  if (state.r.size() != p.size() || state.m.size() != p.size())
    throw ValidationError("optimizer step: state not sized for the parameter vector");
  if (state.t < 0) throw ValidationError("optimizer step: negative step counter");
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(alpha > 0.0)) throw ValidationError("OptimizerConfig: alpha must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("OptimizerConfig: rho must be in (0,1)");
  if (!(rho_hat >= 0.0 && rho_hat < 1.0))
    throw ValidationError("OptimizerConfig: rho_hat must be in [0,1)");
  if (!(epsilon >= 0.0)) throw ValidationError("OptimizerConfig: epsilon must be >= 0");
}

OptimizerState OptimizerState::zeros(std::size_t n) {
  OptimizerState s;
  s.r.assign(n, 0.0);
  s.m.assign(n, 0.0);
  return s;
}

FixedPreconditioner::FixedPreconditioner(Matrix m) : m_(std::move(m)) {
  if (!m_.square()) throw ValidationError("FixedPreconditioner: matrix must be square");
  if (m_.symmetry_gap() > 1e-12 * std::max(1.0, m_.frobenius_norm()))
    throw ValidationError("FixedPreconditioner: matrix must be symmetric");
  chol_ = cholesky_factor(m_);  // also proves positive definiteness
}

FixedPreconditioner FixedPreconditioner::identity(std::size_t n) {
  return FixedPreconditioner(Matrix::identity(n));
}

ParamVector gd_step(const ParamVector& p, const ParamVector& g, double alpha) {
  if (p.size() != g.size()) throw ValidationError("gd_step: p and g sizes differ");
  ParamVector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] - alpha * g[i];
  return out;
}

ParamVector precond_gd_step(const ParamVector& p, const ParamVector& g, double alpha,
                            const FixedPreconditioner& m) {
  if (p.size() != m.dim()) throw ValidationError("precond_gd_step: dimension mismatch");
  return gd_step(p, m.apply(g), alpha);
}

double precond_kappa(const FixedPreconditioner& m, const Matrix& hessian) {
  if (hessian.rows() != m.dim()) throw ValidationError("precond_kappa: dimension mismatch");
  const Matrix b = m.factor().transposed() * hessian * m.factor();
  // Symmetrize away multiplication roundoff before the eigensolve.
  Matrix sym(b.rows(), b.cols());
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) sym(i, j) = 0.5 * (b(i, j) + b(j, i));
  return condition_number(sym);
}

double optimal_lr(double lambda_min, double lambda_max) {
  if (!(lambda_min > 0.0) || !(lambda_max >= lambda_min))
    throw ValidationError("optimal_lr: need 0 < lambda_min <= lambda_max");
  return 2.0 / (lambda_min + lambda_max);
}

double theoretical_rate(double kappa) {
  if (!(kappa >= 1.0)) throw ValidationError("theoretical_rate: kappa must be >= 1");
  return (kappa - 1.0) / (kappa + 1.0);
}

StepResult adagrad_step(OptimizerState state, const ParamVector& p, const ParamVector& g,
                        const OptimizerConfig& cfg) {
  cfg.validate();
  check_step_sizes(state, p, g);
  ParamVector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    state.r[i] += g[i] * g[i];
    out[i] = p[i] - cfg.alpha * safe_ratio(g[i], std::sqrt(state.r[i]) + cfg.epsilon);
  }
  state.t += 1;
  return {std::move(state), std::move(out)};
}

StepResult rmsprop_step(OptimizerState state, const ParamVector& p, const ParamVector& g,
                        const OptimizerConfig& cfg) {
  cfg.validate();
  check_step_sizes(state, p, g);
  const bool seed_first = state.t == 0 && cfg.init == InitConvention::first_gradient_init;
  ParamVector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    state.r[i] = seed_first ? g[i] * g[i] : cfg.rho * state.r[i] + (1.0 - cfg.rho) * g[i] * g[i];
    out[i] = p[i] - cfg.alpha * safe_ratio(g[i], std::sqrt(state.r[i]) + cfg.epsilon);
  }
  state.t += 1;
  return {std::move(state), std::move(out)};
}

Vector rmsprop_closed_form(const std::vector<Vector>& g_sequence, double rho) {
  if (g_sequence.empty()) throw ValidationError("rmsprop_closed_form: empty gradient sequence");
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("rmsprop_closed_form: rho must be in (0,1)");
  const std::size_t n = g_sequence.front().size();
  const std::size_t t = g_sequence.size();
  for (const Vector& g : g_sequence)
    if (g.size() != n) throw ValidationError("rmsprop_closed_form: ragged gradient sequence");

  Vector r(n, 0.0);
  const double lead = std::pow(rho, static_cast<double>(t - 1));
  double weight_sum = 0.0;
  for (std::size_t i = 2; i <= t; ++i) weight_sum += std::pow(rho, static_cast<double>(t - i));
  for (std::size_t k = 0; k < n; ++k) {
    const double g1 = g_sequence[0][k];
    double avg = 0.0;
    for (std::size_t i = 2; i <= t; ++i) {
      const double gi = g_sequence[i - 1][k];
      avg += std::pow(rho, static_cast<double>(t - i)) * gi * gi;
    }
    if (t == 1) {
      r[k] = g1 * g1;
    } else {
      r[k] = lead * g1 * g1 + (1.0 - lead) * avg / weight_sum;
    }
  }
  return r;
}

StepResult adam_step(OptimizerState state, const ParamVector& p, const ParamVector& g,
                     const OptimizerConfig& cfg) {
  cfg.validate();
  check_step_sizes(state, p, g);
  const bool seed_first = state.t == 0 && cfg.init == InitConvention::first_gradient_init;
  state.t += 1;
  // Correction factors: pow underflows to 0 for huge t, saturating them at 1.
  double m_corr = 1.0, r_corr = 1.0;
  if (cfg.init == InitConvention::zero_init_bias_corrected) {
    m_corr = 1.0 - std::pow(cfg.rho_hat, static_cast<double>(state.t));
    r_corr = 1.0 - std::pow(cfg.rho, static_cast<double>(state.t));
  }
  ParamVector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (seed_first) {
      state.m[i] = g[i];
      state.r[i] = g[i] * g[i];
    } else {
      state.m[i] = cfg.rho_hat * state.m[i] + (1.0 - cfg.rho_hat) * g[i];
      state.r[i] = cfg.rho * state.r[i] + (1.0 - cfg.rho) * g[i] * g[i];
    }
    const double m_hat = cfg.init == InitConvention::zero_init_bias_corrected
                             ? state.m[i] / m_corr
                             : state.m[i];
    const double r_hat = cfg.init == InitConvention::zero_init_bias_corrected
                             ? state.r[i] / r_corr
                             : state.r[i];
    out[i] = p[i] - cfg.alpha * safe_ratio(m_hat, std::sqrt(r_hat) + cfg.epsilon);
  }
  return {std::move(state), std::move(out)};
}

OptimizerKind optimizer_kind_from_name(const std::string& name) {
  if (name == "gd") return OptimizerKind::gd;
  if (name == "adagrad") return OptimizerKind::adagrad;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  if (name == "adam") return OptimizerKind::adam;
  if (name == "adamw") return OptimizerKind::adamw;
  throw ValidationError("unknown optimizer '" + name + "'");
}

std::function<ParamVector(const ParamVector&, const ParamVector&)> make_optimizer_step(
    OptimizerKind kind, const OptimizerConfig& cfg, std::size_t param_count,
    std::optional<FixedPreconditioner> fixed_m, double weight_decay) {
  cfg.validate();
  if (kind != OptimizerKind::gd && fixed_m.has_value())
    throw ValidationError("make_optimizer_step: fixed preconditioner applies to gd only");
  if (kind != OptimizerKind::adamw && weight_decay != 0.0)
    throw ValidationError("make_optimizer_step: weight decay applies to adamw only");
  switch (kind) {
    case OptimizerKind::gd:
      if (fixed_m) {
        return [cfg, m = std::move(*fixed_m)](const ParamVector& p, const ParamVector& g) {
          return precond_gd_step(p, g, cfg.alpha, m);
        };
      }
      return [cfg](const ParamVector& p, const ParamVector& g) {
        return gd_step(p, g, cfg.alpha);
      };
    case OptimizerKind::adagrad:
      return [cfg, state = OptimizerState::zeros(param_count)](const ParamVector& p,
                                                               const ParamVector& g) mutable {
        auto res = adagrad_step(std::move(state), p, g, cfg);
        state = std::move(res.state);
        return res.p;
      };
    case OptimizerKind::rmsprop:
      return [cfg, state = OptimizerState::zeros(param_count)](const ParamVector& p,
                                                               const ParamVector& g) mutable {
        auto res = rmsprop_step(std::move(state), p, g, cfg);
        state = std::move(res.state);
        return res.p;
      };
    case OptimizerKind::adam:
      return [cfg, state = OptimizerState::zeros(param_count)](const ParamVector& p,
                                                               const ParamVector& g) mutable {
        auto res = adam_step(std::move(state), p, g, cfg);
        state = std::move(res.state);
        return res.p;
      };
    case OptimizerKind::adamw:
      return [cfg, weight_decay, state = OptimizerState::zeros(param_count)](
                 const ParamVector& p, const ParamVector& g) mutable {
        auto res = adamw_step(std::move(state), p, g, cfg.alpha, weight_decay, cfg);
        state = std::move(res.state);
        return res.p;
      };
  }
  throw ValidationError("make_optimizer_step: unknown optimizer kind");
}

RunRecord run(const LossModel& model, const Dataset& data,
              const std::function<ParamVector(const ParamVector&, const ParamVector&)>& step,
              std::int64_t steps, ParamVector p0) {
  if (steps < 0) throw ValidationError("run: negative step count");
  if (p0.size() != model.param_count()) throw ValidationError("run: p0 not sized for the model");
  const auto t0 = std::chrono::steady_clock::now();
  const std::optional<ParamVector> p_star = model.optimum(data);

  RunRecord record;
  record.rows.reserve(static_cast<std::size_t>(steps) + 1);
  ParamVector p = std::move(p0);
  for (std::int64_t t = 0; t <= steps; ++t) {
    const double loss = model.loss(p, data);
    if (!std::isfinite(loss) || loss > 1e12)
      throw NumericalError("run: diverged at step " + std::to_string(t) +
                           " (loss = " + std::to_string(loss) + ")");
    const ParamVector g = model.gradient(p, data);
    RunRecord::Row row{t, loss, norm2(g), std::nullopt};
    if (p_star) row.dist_to_opt = norm2(sub(p, *p_star));
    record.rows.push_back(std::move(row));
    if (t < steps) p = step(p, g);
  }
  record.final_params = std::move(p);
  record.final_loss = record.rows.back().loss;
  record.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

double empirical_rate(const RunRecord& record, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
    throw ValidationError("empirical_rate: tail_fraction must be in (0,1]");
  if (record.rows.size() < 2) throw ValidationError("empirical_rate: need at least two rows");
  Vector d;
  d.reserve(record.rows.size());
  for (const auto& row : record.rows) {
    if (!row.dist_to_opt) throw ValidationError("empirical_rate: distance to optimum unknown");
    d.push_back(*row.dist_to_opt);
  }
  const std::size_t ratios = d.size() - 1;
  const std::size_t tail = std::max<std::size_t>(
      1, static_cast<std::size_t>(tail_fraction * static_cast<double>(ratios)));
  const std::size_t first = ratios - tail;

  for (std::size_t i = first; i < d.size(); ++i)
    if (d[i] == 0.0) return 0.0;  // landed on the optimum
  double log_sum = 0.0;
  for (std::size_t i = first; i < ratios; ++i) {
    const double q = d[i + 1] / d[i];
    if (q >= 1.5)
      throw ValidationError("empirical_rate: tail not contracting (ratio " + std::to_string(q) +
                            " at step " + std::to_string(i) + ")");
    log_sum += std::log(q);
  }
  return std::exp(log_sum / static_cast<double>(tail));
}

}  // namespace preclab
