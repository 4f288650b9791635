#include "preclab/bnp.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "preclab/errors.hpp"
#include "preclab/linalg.hpp"

namespace preclab {

BatchStats batch_stats(const Matrix& h) {
  if (h.empty()) throw ValidationError("batch_stats: empty batch");
  const std::size_t width = h.rows(), n = h.cols();
  BatchStats stats;
  stats.mu.resize(width);
  stats.sigma.resize(width);
  stats.count = n;
  for (std::size_t i = 0; i < width; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < n; ++j) m += h(i, j);
    m /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = h(i, j) - m;
      var += d * d;
    }
    var /= static_cast<double>(n);
    stats.mu[i] = m;
    stats.sigma[i] = std::sqrt(var);
  }
  return stats;
}

Vector bn_forward(const Vector& h, const BatchStats& stats, const BNParams& params,
                  double sigma_floor) {
  const std::size_t width = h.size();
  if (stats.mu.size() != width || params.gamma.size() != width || params.beta.size() != width)
    throw ValidationError("bn_forward: width mismatch");
  if (!(sigma_floor > 0.0)) throw ValidationError("bn_forward: sigma floor must be positive");
  Vector out(width);
  for (std::size_t i = 0; i < width; ++i) {
    const double s = std::max(stats.sigma[i], sigma_floor);
    out[i] = params.gamma[i] * (h[i] - stats.mu[i]) / s + params.beta[i];
  }
  return out;
}

std::pair<Matrix, Vector> bn_reparameterize(const Matrix& w, const Vector& b,
                                            const BNParams& params) {
  if (w.cols() != params.gamma.size() || w.rows() != b.size() ||
      params.beta.size() != params.gamma.size())
    throw ValidationError("bn_reparameterize: dimension mismatch");
  Matrix w_hat(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t k = 0; k < w.cols(); ++k) w_hat(i, k) = w(i, k) * params.gamma[k];
  Vector b_hat(b.size());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < w.cols(); ++k) s += w(i, k) * params.beta[k];
    b_hat[i] = s;
  }
  return {std::move(w_hat), std::move(b_hat)};
}

BnpMatrices bnp_matrices(const BatchStats& stats, double sigma_floor) {
  if (!(sigma_floor > 0.0)) throw ValidationError("bnp_matrices: sigma floor must be positive");
  const std::size_t w = stats.width();
  if (stats.sigma.size() != w) throw ValidationError("bnp_matrices: inconsistent stats");
  BnpMatrices out;
  out.u = Matrix::identity(w + 1);
  for (std::size_t i = 0; i < w; ++i) out.u(0, i + 1) = -stats.mu[i];
  Vector dinv(w + 1, 1.0);
  for (std::size_t i = 0; i < w; ++i) dinv[i + 1] = 1.0 / std::max(stats.sigma[i], sigma_floor);
  out.d = Matrix::diag(dinv);
  out.p = out.u * out.d;
  return out;
}

std::pair<double, Vector> bnp_apply(double g_b, const Vector& g_w, const BatchStats& stats,
                                    double sigma_floor) {
  const std::size_t w = g_w.size();
  if (stats.mu.size() != w || stats.sigma.size() != w)
    throw ValidationError("bnp_apply: width mismatch");
  if (!(sigma_floor > 0.0)) throw ValidationError("bnp_apply: sigma floor must be positive");
  // u = P^T [g_b; g_w], then P u, with P = [[1, -mu/s], [0, diag(1/s)]].
  Vector u_w(w);
  for (std::size_t i = 0; i < w; ++i) {
    const double s = std::max(stats.sigma[i], sigma_floor);
    u_w[i] = g_w[i] / s - (stats.mu[i] / s) * g_b;
  }
  double out_b = g_b;
  Vector out_w(w);
  for (std::size_t i = 0; i < w; ++i) {
    const double s = std::max(stats.sigma[i], sigma_floor);
    out_b -= (stats.mu[i] / s) * u_w[i];
    out_w[i] = u_w[i] / s;
  }
  return {out_b, std::move(out_w)};
}

StatsAveraging stats_averaging_from_name(const std::string& name) {
  if (name == "per_batch") return StatsAveraging::per_batch;
  if (name == "running") return StatsAveraging::running;
  throw ValidationError("unknown stats averaging '" + name + "'");
}

BNPPreconditioner BNPPreconditioner::neutral(std::size_t width) {
  BNPPreconditioner p;
  p.stats.mu.assign(width, 0.0);
  p.stats.sigma.assign(width, 1.0);
  p.stats.count = 0;
  p.sigma_sq.assign(width, 1.0);
  p.averaging = StatsAveraging::running;
  return p;
}

BNPPreconditioner update_running_stats(BNPPreconditioner precond, const BatchStats& batch,
                                       double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0))
    throw ValidationError("update_running_stats: momentum must be in [0,1]");
  const std::size_t w = precond.stats.width();
  if (batch.width() != w) throw ValidationError("update_running_stats: width mismatch");
  if (precond.sigma_sq.size() != w) precond.sigma_sq.assign(w, 1.0);
  for (std::size_t i = 0; i < w; ++i) {
    precond.stats.mu[i] = momentum * precond.stats.mu[i] + (1.0 - momentum) * batch.mu[i];
    // Variances average, not standard deviations.
    precond.sigma_sq[i] =
        momentum * precond.sigma_sq[i] + (1.0 - momentum) * batch.sigma[i] * batch.sigma[i];
    precond.stats.sigma[i] = std::sqrt(precond.sigma_sq[i]);
  }
  precond.stats.count = batch.count;
  return precond;
}

ParamVector bnp_step(const MlpModel& mlp, const ParamVector& p, const Dataset& batch, double alpha,
                     const std::vector<BNPPreconditioner>& preconds) {
  if (preconds.size() != mlp.layer_count())
    throw ValidationError("bnp_step: need one preconditioner per layer");
  batch.validate();
  const ParamVector g = mlp.gradient(p, batch);
  ParamVector out = p;
  for (std::size_t layer = 1; layer <= mlp.layer_count(); ++layer) {
    const BNPPreconditioner& pc = preconds[layer - 1];
    BatchStats stats;
    if (pc.averaging == StatsAveraging::per_batch) {
      if (batch.sample_count() < 2)
        throw ValidationError("bnp_step: per-batch statistics need at least 2 samples");
      stats = batch_stats(mlp.hidden_states(p, batch, layer - 1));
    } else {
      stats = pc.stats;
    }
    if (stats.width() != mlp.layer_width(layer - 1))
      throw ValidationError("bnp_step: preconditioner width mismatch at layer " +
                            std::to_string(layer));
    const std::size_t fan_in = mlp.layer_width(layer - 1);
    for (std::size_t unit = 1; unit <= mlp.layer_width(layer); ++unit) {
      const std::vector<std::size_t> idx = mlp.unit_param_indices(layer, unit);
      Vector g_w(fan_in);
      for (std::size_t k = 0; k < fan_in; ++k) g_w[k] = g[idx[k + 1]];
      const auto [pg_b, pg_w] = bnp_apply(g[idx[0]], g_w, stats, pc.sigma_floor);
      out[idx[0]] = p[idx[0]] - alpha * pg_b;
      for (std::size_t k = 0; k < fan_in; ++k) out[idx[k + 1]] = p[idx[k + 1]] - alpha * pg_w[k];
    }
  }
  return out;
}

ConditioningReport layer_conditioning_report(const MlpModel& mlp, const ParamVector& p,
                                             const Dataset& data, std::size_t layer,
                                             std::size_t unit, double sigma_floor) {
  const LayerHessianParts parts = mlp.layer_hessian(p, data, layer, unit);
  ConditioningReport report{};
  report.kappa_raw = condition_number(parts.hessian);
  const BatchStats stats = batch_stats(mlp.hidden_states(p, data, layer - 1));
  const Matrix pmat = bnp_matrices(stats, sigma_floor).p;
  const Matrix b = pmat.transposed() * parts.hessian * pmat;
  Matrix sym(b.rows(), b.cols());
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) sym(i, j) = 0.5 * (b(i, j) + b(j, i));
  report.kappa_bnp = condition_number(sym);
  return report;
}

}  // namespace preclab
