#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "preclab/matrix.hpp"
#include "preclab/models.hpp"

namespace preclab {

inline constexpr double kDefaultSigmaFloor = 1e-3;
inline constexpr double kDefaultStatsMomentum = 0.9;

struct BatchStats {
  Vector mu;     // per-unit mean of the hidden activations
  Vector sigma;  // per-unit population std, >= 0
  std::size_t count = 0;

  std::size_t width() const { return mu.size(); }
};

// Per-row mean and population standard deviation of a width x N batch.
BatchStats batch_stats(const Matrix& h);

struct BNParams {
  Vector gamma;
  Vector beta;
};

// gamma * (h - mu) / max(sigma, floor) + beta, entrywise.
Vector bn_forward(const Vector& h, const BatchStats& stats, const BNParams& params,
                  double sigma_floor = kDefaultSigmaFloor);

// Fold the rescaling into the next layer: W_hat = W diag(gamma),
// b_hat = W beta + b, so the layer with stats (beta, gamma) equals the layer
// (W_hat, b_hat) normalized with (0, 1).
std::pair<Matrix, Vector> bn_reparameterize(const Matrix& w, const Vector& b,
                                            const BNParams& params);

struct BnpMatrices {
  Matrix u;  // [[1, -mu^T], [0, I]]
  Matrix d;  // diag(1, sigma)^{-1} with the sigma floor applied
  Matrix p;  // U D
};

// Dense assembly of the preconditioning transform; reference path for tests
// and the conditioning reports.
BnpMatrices bnp_matrices(const BatchStats& stats, double sigma_floor = kDefaultSigmaFloor);

// P P^T [g_b; g_w] using vector operations only; cost linear in the width.
std::pair<double, Vector> bnp_apply(double g_b, const Vector& g_w, const BatchStats& stats,
                                    double sigma_floor = kDefaultSigmaFloor);

enum class StatsAveraging { per_batch, running };
StatsAveraging stats_averaging_from_name(const std::string& name);

// Per-layer preconditioner state. Running averages keep (mu, sigma^2);
// sigma in `stats` is always the square root of sigma_sq.
struct BNPPreconditioner {
  BatchStats stats;
  Vector sigma_sq;
  double sigma_floor = kDefaultSigmaFloor;
  StatsAveraging averaging = StatsAveraging::per_batch;
  double momentum = kDefaultStatsMomentum;

  static BNPPreconditioner neutral(std::size_t width);  // stats (0, 1), running
};

// Exponential moving average of (mu, sigma^2): momentum 0 replaces the stats
// with the batch, momentum 1 leaves them unchanged.
BNPPreconditioner update_running_stats(BNPPreconditioner precond, const BatchStats& batch,
                                       double momentum);

// One preconditioned step on the full parameter vector: for every layer and
// unit, [g_b; g_w] is transformed by P P^T built from that layer's input
// statistics (the batch's own under per_batch, the stored running ones
// otherwise). All stats (0, 1) reduces this to gd_step exactly.
ParamVector bnp_step(const MlpModel& mlp, const ParamVector& p, const Dataset& batch, double alpha,
                     const std::vector<BNPPreconditioner>& preconds);

struct ConditioningReport {
  double kappa_raw;  // kappa(H_e S H_e^T)
  double kappa_bnp;  // kappa(P^T H_e S H_e^T P)
};

// Conditioning of one unit's Hessian before and after the transform built
// from the batch statistics of the layer inputs.
ConditioningReport layer_conditioning_report(const MlpModel& mlp, const ParamVector& p,
                                             const Dataset& data, std::size_t layer,
                                             std::size_t unit,
                                             double sigma_floor = kDefaultSigmaFloor);

}  // namespace preclab
