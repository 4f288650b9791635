#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "preclab/matrix.hpp"

namespace preclab {

// Flat vector of all trainable parameters. For layered models the layout is
// fixed: per layer, the weight matrix row-major, then the bias vector.
using ParamVector = Vector;

struct Dataset {
  Matrix inputs;   // n features x N samples
  Matrix targets;  // m outputs  x N samples

  std::size_t sample_count() const { return inputs.cols(); }
  void validate() const;  // matching N, finite entries
};

enum class Activation { identity, tanh, sigmoid, softplus };
enum class LossKind { squared_error, cross_entropy };

double activate(Activation g, double a);
double activate_derivative(Activation g, double a);
Activation activation_from_name(const std::string& name);
LossKind loss_from_name(const std::string& name);

// A differentiable loss with analytic gradient and a Hessian that is exact
// where the model admits one (quadratic, linear and logistic regression)
// and finite-difference otherwise.
class LossModel {
 public:
  virtual ~LossModel() = default;

  virtual std::size_t param_count() const = 0;
  virtual double loss(const ParamVector& p, const Dataset& data) const = 0;
  virtual ParamVector gradient(const ParamVector& p, const Dataset& data) const = 0;
  virtual Matrix hessian(const ParamVector& p, const Dataset& data) const;
  // Known minimizer, when the model admits one in closed form.
  virtual std::optional<ParamVector> optimum(const Dataset&) const { return std::nullopt; }
  virtual std::string kind() const = 0;

 protected:
  void check_param_size(const ParamVector& p) const;
};

// Central finite differences, steps scaled per coordinate by (1 + |p_i|).
ParamVector fd_gradient(const LossModel& model, const ParamVector& p, const Dataset& data,
                        double h = 1e-5);
// Central differences of the analytic gradient, symmetrized as (H + H^T)/2.
Matrix fd_hessian(const LossModel& model, const ParamVector& p, const Dataset& data,
                  double h = 1e-4);

// L(p) = 1/2 (p - c)^T A (p - c) with symmetric A; minimizer is c.
class QuadraticModel final : public LossModel {
 public:
  explicit QuadraticModel(Matrix a, Vector center = {});

  std::size_t param_count() const override { return a_.rows(); }
  double loss(const ParamVector& p, const Dataset& data) const override;
  ParamVector gradient(const ParamVector& p, const Dataset& data) const override;
  Matrix hessian(const ParamVector& p, const Dataset& data) const override;
  std::optional<ParamVector> optimum(const Dataset&) const override { return center_; }
  std::string kind() const override { return "quadratic"; }

  const Matrix& matrix() const { return a_; }
  const Vector& center() const { return center_; }

 private:
  Matrix a_;
  Vector center_;
};

struct MlpSpec {
  std::vector<std::size_t> widths;  // n_0 .. n_L, L >= 1
  Activation activation = Activation::tanh;  // hidden layers only
  LossKind loss = LossKind::squared_error;
  void validate() const;
};

struct LayerHessianParts {
  Matrix h_extended;  // H_e = [e^T; H], H = hidden states feeding the layer
  Vector s;           // S_jj = L''_j / N, per-example curvature on the pre-activation
  Matrix hessian;     // H_e diag(S) H_e^T
};

// Fully connected network h^{(l)} = g(W^{(l)} h^{(l-1)} + b^{(l)}). Hidden
// layers use spec.activation; the output layer is linear under squared_error
// and sigmoid under cross_entropy, so cross-entropy outputs stay in (0,1).
class MlpModel : public LossModel {
 public:
  explicit MlpModel(MlpSpec spec);

  std::size_t param_count() const override { return param_count_; }
  double loss(const ParamVector& p, const Dataset& data) const override;
  ParamVector gradient(const ParamVector& p, const Dataset& data) const override;
  std::string kind() const override { return "mlp"; }

  const MlpSpec& spec() const { return spec_; }
  std::size_t layer_count() const { return spec_.widths.size() - 1; }
  std::size_t layer_width(std::size_t layer) const { return spec_.widths[layer]; }

  // Flat offsets for layer l in 1..L.
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
  // Flat indices of the unit parameters [b_i; w_i] for unit i (1-based).
  std::vector<std::size_t> unit_param_indices(std::size_t layer, std::size_t unit) const;

  // Hidden states h^{(layer)} for the whole dataset as columns; layer 0 is
  // the input matrix itself.
  Matrix hidden_states(const ParamVector& p, const Dataset& data, std::size_t layer) const;

  // Hessian of the mean loss in the unit parameters [b_i; w_i], assembled as
  // H_e diag(S) H_e^T where S comes from central second differences of the
  // per-example loss along the unit's pre-activation (step 1e-4 * (1+|a|)).
  LayerHessianParts layer_hessian(const ParamVector& p, const Dataset& data, std::size_t layer,
                                  std::size_t unit) const;

  Activation layer_activation(std::size_t layer) const;  // output layer may differ

 private:
  struct Forward {
    std::vector<Vector> pre;   // a^{(1)} .. a^{(L)}
    std::vector<Vector> post;  // h^{(0)} .. h^{(L)}
  };
  Forward forward_one(const ParamVector& p, Vector x) const;
  double example_loss_from_output(const Vector& pre_out, const Vector& y) const;
  // Per-example loss with unit (layer, i)'s pre-activation overridden to a.
  double example_loss_with_override(const ParamVector& p, const Vector& x, const Vector& y,
                                    std::size_t layer, std::size_t unit, double a) const;

  MlpSpec spec_;
  std::size_t param_count_ = 0;
  std::vector<std::size_t> offsets_;  // per layer
};

// y_hat = W x + b with mean squared loss 1/(2N) sum ||y_hat - y||^2.
// Exact Hessian blocks are Gram matrices of the extended data matrix.
class LinearRegressionModel final : public LossModel {
 public:
  LinearRegressionModel(std::size_t in_dim, std::size_t out_dim);

  std::size_t param_count() const override { return out_dim_ * in_dim_ + out_dim_; }
  double loss(const ParamVector& p, const Dataset& data) const override;
  ParamVector gradient(const ParamVector& p, const Dataset& data) const override;
  Matrix hessian(const ParamVector& p, const Dataset& data) const override;
  std::optional<ParamVector> optimum(const Dataset& data) const override;
  std::string kind() const override { return "linreg"; }

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }

 private:
  std::size_t in_dim_, out_dim_;
};

// y_hat = sigmoid(W x + b) with summed binary cross-entropy; exact Hessian
// with per-example curvature y_hat (1 - y_hat).
class LogisticRegressionModel final : public LossModel {
 public:
  LogisticRegressionModel(std::size_t in_dim, std::size_t out_dim);

  std::size_t param_count() const override { return out_dim_ * in_dim_ + out_dim_; }
  double loss(const ParamVector& p, const Dataset& data) const override;
  ParamVector gradient(const ParamVector& p, const Dataset& data) const override;
  Matrix hessian(const ParamVector& p, const Dataset& data) const override;
  std::string kind() const override { return "logistic"; }

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }

 private:
  std::size_t in_dim_, out_dim_;
};

struct GradHessianProxy {
  Vector avg_abs_grad;       // mean |g_i| over perturbed gradients
  Vector hessian_row_norms;  // ||row_i|| of the Hessian at p_star
};

// Monte Carlo check that averaged gradient magnitudes near a stationary
// point track Hessian row norms. Perturbations are uniform on the sphere of
// the given radius; p_star must satisfy ||grad|| <= 1e-6.
GradHessianProxy grad_hessian_row_proxy(const LossModel& model, const ParamVector& p_star,
                                        const Dataset& data, std::size_t num_samples,
                                        double radius, std::uint64_t seed);

}  // namespace preclab
