#include "preclab/models.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "preclab/errors.hpp"
#include "preclab/linalg.hpp"
#include "preclab/rng.hpp"

namespace preclab {

namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

double softplus(double a) {
  return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

// Extended-sample Gram matrix (1/N) sum [1; x_j][1; x_j]^T.
Matrix mean_extended_gram(const Matrix& x, const Vector& weights) {
  const std::size_t n = x.rows(), cols = x.cols();
  Matrix gram(n + 1, n + 1);
  Vector xe(n + 1);
  for (std::size_t j = 0; j < cols; ++j) {
    xe[0] = 1.0;
    for (std::size_t k = 0; k < n; ++k) xe[k + 1] = x(k, j);
    const double w = weights[j];
    for (std::size_t r = 0; r <= n; ++r)
      for (std::size_t c = r; c <= n; ++c) gram(r, c) += w * xe[r] * xe[c];
  }
  for (std::size_t r = 0; r <= n; ++r)
    for (std::size_t c = 0; c < r; ++c) gram(r, c) = gram(c, r);
  return gram;
}

// Flat index of the extended-weight component (0 = bias, k >= 1 = feature
// k-1) for output unit r under the W-row-major-then-bias layout.
std::size_t affine_flat_index(std::size_t in_dim, std::size_t out_dim, std::size_t r,
                              std::size_t comp) {
  return comp == 0 ? out_dim * in_dim + r : r * in_dim + (comp - 1);
}

void scatter_affine_hessian(Matrix& h, const Matrix& block, std::size_t in_dim,
                            std::size_t out_dim, std::size_t r) {
  for (std::size_t a = 0; a <= in_dim; ++a)
    for (std::size_t b = 0; b <= in_dim; ++b)
      h(affine_flat_index(in_dim, out_dim, r, a), affine_flat_index(in_dim, out_dim, r, b)) =
          block(a, b);
}

}  // namespace

void Dataset::validate() const {
  if (inputs.cols() != targets.cols())
    throw ValidationError("Dataset: inputs and targets disagree on the sample count");
  if (!inputs.all_finite() || !targets.all_finite())
    throw ValidationError("Dataset: non-finite entries");
}

double activate(Activation g, double a) {
  switch (g) {
    case Activation::identity: return a;
    case Activation::tanh: return std::tanh(a);
    case Activation::sigmoid: return sigmoid(a);
    case Activation::softplus: return softplus(a);
  }
  throw ValidationError("activate: unknown activation");
}

double activate_derivative(Activation g, double a) {
  switch (g) {
    case Activation::identity: return 1.0;
    case Activation::tanh: {
      const double t = std::tanh(a);
      return 1.0 - t * t;
    }
    case Activation::sigmoid: {
      const double s = sigmoid(a);
      return s * (1.0 - s);
    }
    case Activation::softplus: return sigmoid(a);
  }
  throw ValidationError("activate_derivative: unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "softplus") return Activation::softplus;
  throw ValidationError("unknown activation '" + name + "'");
}

LossKind loss_from_name(const std::string& name) {
  if (name == "squared_error") return LossKind::squared_error;
  if (name == "cross_entropy") return LossKind::cross_entropy;
  throw ValidationError("unknown loss '" + name + "'");
}

void LossModel::check_param_size(const ParamVector& p) const {
  if (p.size() != param_count())
    throw ValidationError(kind() + ": parameter vector has size " + std::to_string(p.size()) +
                          ", expected " + std::to_string(param_count()));
  if (!all_finite(p)) throw ValidationError(kind() + ": non-finite parameters");
}

Matrix LossModel::hessian(const ParamVector& p, const Dataset& data) const {
  return fd_hessian(*this, p, data);
}

ParamVector fd_gradient(const LossModel& model, const ParamVector& p, const Dataset& data,
                        double h) {
  ParamVector g(p.size());
  ParamVector q = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double step = h * (1.0 + std::abs(p[i]));
    q[i] = p[i] + step;
    const double up = model.loss(q, data);
    q[i] = p[i] - step;
    const double down = model.loss(q, data);
    q[i] = p[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

Matrix fd_hessian(const LossModel& model, const ParamVector& p, const Dataset& data, double h) {
  const std::size_t n = p.size();
  Matrix raw(n, n);
  ParamVector q = p;
  for (std::size_t j = 0; j < n; ++j) {
    const double step = h * (1.0 + std::abs(p[j]));
    q[j] = p[j] + step;
    const ParamVector up = model.gradient(q, data);
    q[j] = p[j] - step;
    const ParamVector down = model.gradient(q, data);
    q[j] = p[j];
    for (std::size_t i = 0; i < n; ++i) raw(i, j) = (up[i] - down[i]) / (2.0 * step);
  }
  Matrix sym(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sym(i, j) = 0.5 * (raw(i, j) + raw(j, i));
  return sym;
}

// ---- QuadraticModel ----

QuadraticModel::QuadraticModel(Matrix a, Vector center) : a_(std::move(a)), center_(std::move(center)) {
  if (!a_.square()) throw ValidationError("QuadraticModel: matrix must be square");
  if (!a_.all_finite()) throw ValidationError("QuadraticModel: non-finite matrix");
  if (a_.symmetry_gap() > 1e-12 * std::max(1.0, a_.frobenius_norm()))
    throw ValidationError("QuadraticModel: matrix must be symmetric");
  if (center_.empty()) center_.assign(a_.rows(), 0.0);
  if (center_.size() != a_.rows())
    throw ValidationError("QuadraticModel: center size does not match the matrix");
}

double QuadraticModel::loss(const ParamVector& p, const Dataset&) const {
  check_param_size(p);
  const Vector r = sub(p, center_);
  return 0.5 * dot(r, a_ * r);
}

ParamVector QuadraticModel::gradient(const ParamVector& p, const Dataset&) const {
  check_param_size(p);
  return a_ * sub(p, center_);
}

Matrix QuadraticModel::hessian(const ParamVector& p, const Dataset&) const {
  check_param_size(p);
  return a_;
}

// ---- MlpModel ----

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ValidationError("MlpSpec: need at least input and output widths");
  for (std::size_t w : widths)
    if (w == 0) throw ValidationError("MlpSpec: zero-width layer");
}

MlpModel::MlpModel(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  offsets_.resize(layer_count() + 1, 0);
  for (std::size_t l = 1; l <= layer_count(); ++l)
    offsets_[l] = offsets_[l - 1] + spec_.widths[l] * spec_.widths[l - 1] + spec_.widths[l];
  param_count_ = offsets_[layer_count()];
}

std::size_t MlpModel::weight_offset(std::size_t layer) const {
  if (layer < 1 || layer > layer_count()) throw ValidationError("MlpModel: layer out of range");
  return offsets_[layer - 1];
}

std::size_t MlpModel::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + spec_.widths[layer] * spec_.widths[layer - 1];
}

std::vector<std::size_t> MlpModel::unit_param_indices(std::size_t layer, std::size_t unit) const {
  if (unit < 1 || unit > spec_.widths[layer])
    throw ValidationError("MlpModel: unit out of range");
  const std::size_t fan_in = spec_.widths[layer - 1];
  std::vector<std::size_t> idx;
  idx.reserve(fan_in + 1);
  idx.push_back(bias_offset(layer) + unit - 1);
  const std::size_t w0 = weight_offset(layer) + (unit - 1) * fan_in;
  for (std::size_t k = 0; k < fan_in; ++k) idx.push_back(w0 + k);
  return idx;
}

Activation MlpModel::layer_activation(std::size_t layer) const {
  if (layer < layer_count()) return spec_.activation;
  return spec_.loss == LossKind::squared_error ? Activation::identity : Activation::sigmoid;
}

MlpModel::Forward MlpModel::forward_one(const ParamVector& p, Vector x) const {
  Forward f;
  f.post.push_back(std::move(x));
  for (std::size_t l = 1; l <= layer_count(); ++l) {
    const std::size_t out_w = spec_.widths[l], in_w = spec_.widths[l - 1];
    const std::size_t wo = weight_offset(l), bo = bias_offset(l);
    const Vector& h = f.post.back();
    Vector a(out_w);
    for (std::size_t i = 0; i < out_w; ++i) {
      double s = p[bo + i];
      const std::size_t row = wo + i * in_w;
      for (std::size_t k = 0; k < in_w; ++k) s += p[row + k] * h[k];
      a[i] = s;
    }
    const Activation g = layer_activation(l);
    Vector out(out_w);
    for (std::size_t i = 0; i < out_w; ++i) out[i] = activate(g, a[i]);
    f.pre.push_back(std::move(a));
    f.post.push_back(std::move(out));
  }
  return f;
}

double MlpModel::example_loss_from_output(const Vector& pre_out, const Vector& y) const {
  double s = 0.0;
  if (spec_.loss == LossKind::squared_error) {
    for (std::size_t i = 0; i < pre_out.size(); ++i) {
      const double d = pre_out[i] - y[i];
      s += 0.5 * d * d;
    }
  } else {
    // softplus(a) - y a == binary cross-entropy of sigmoid(a), stable form
    for (std::size_t i = 0; i < pre_out.size(); ++i)
      s += softplus(pre_out[i]) - y[i] * pre_out[i];
  }
  return s;
}

double MlpModel::loss(const ParamVector& p, const Dataset& data) const {
  check_param_size(p);
  data.validate();
  const std::size_t cols = data.sample_count();
  if (cols == 0) throw ValidationError("MlpModel: empty dataset");
  if (data.inputs.rows() != spec_.widths.front() || data.targets.rows() != spec_.widths.back())
    throw ValidationError("MlpModel: dataset dimensions do not match the layer widths");
  double total = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const Forward f = forward_one(p, data.inputs.col(j));
    total += example_loss_from_output(f.pre.back(), data.targets.col(j));
  }
  return total / static_cast<double>(cols);
}

ParamVector MlpModel::gradient(const ParamVector& p, const Dataset& data) const {
  check_param_size(p);
  data.validate();
  const std::size_t cols = data.sample_count();
  if (cols == 0) throw ValidationError("MlpModel: empty dataset");
  if (data.inputs.rows() != spec_.widths.front() || data.targets.rows() != spec_.widths.back())
    throw ValidationError("MlpModel: dataset dimensions do not match the layer widths");
  ParamVector g(param_count_, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    const Vector y = data.targets.col(j);
    const Forward f = forward_one(p, data.inputs.col(j));
    // dL/da at the output: y_hat - y for both losses.
    Vector delta(spec_.widths.back());
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = f.post.back()[i] - y[i];
    for (std::size_t l = layer_count(); l >= 1; --l) {
      const std::size_t out_w = spec_.widths[l], in_w = spec_.widths[l - 1];
      const std::size_t wo = weight_offset(l), bo = bias_offset(l);
      const Vector& h = f.post[l - 1];
      for (std::size_t i = 0; i < out_w; ++i) {
        g[bo + i] += delta[i];
        const std::size_t row = wo + i * in_w;
        for (std::size_t k = 0; k < in_w; ++k) g[row + k] += delta[i] * h[k];
      }
      if (l > 1) {
        Vector next(in_w, 0.0);
        for (std::size_t k = 0; k < in_w; ++k) {
          double s = 0.0;
          for (std::size_t i = 0; i < out_w; ++i) s += p[wo + i * in_w + k] * delta[i];
          next[k] = s * activate_derivative(spec_.activation, f.pre[l - 2][k]);
        }
        delta = std::move(next);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(cols);
  for (double& x : g) x *= inv;
  return g;
}

Matrix MlpModel::hidden_states(const ParamVector& p, const Dataset& data, std::size_t layer) const {
  check_param_size(p);
  if (layer > layer_count()) throw ValidationError("MlpModel: layer out of range");
  if (layer == 0) return data.inputs;
  Matrix h(spec_.widths[layer], data.sample_count());
  for (std::size_t j = 0; j < data.sample_count(); ++j) {
    const Forward f = forward_one(p, data.inputs.col(j));
    for (std::size_t i = 0; i < h.rows(); ++i) h(i, j) = f.post[layer][i];
  }
  return h;
}

double MlpModel::example_loss_with_override(const ParamVector& p, const Vector& x, const Vector& y,
                                            std::size_t layer, std::size_t unit, double a) const {
  Vector h = x;
  for (std::size_t l = 1; l <= layer_count(); ++l) {
    const std::size_t out_w = spec_.widths[l], in_w = spec_.widths[l - 1];
    const std::size_t wo = weight_offset(l), bo = bias_offset(l);
    Vector pre(out_w);
    for (std::size_t i = 0; i < out_w; ++i) {
      double s = p[bo + i];
      const std::size_t row = wo + i * in_w;
      for (std::size_t k = 0; k < in_w; ++k) s += p[row + k] * h[k];
      pre[i] = s;
    }
    if (l == layer) pre[unit - 1] = a;
    if (l == layer_count()) return example_loss_from_output(pre, y);
    const Activation g = layer_activation(l);
    Vector out(out_w);
    for (std::size_t i = 0; i < out_w; ++i) out[i] = activate(g, pre[i]);
    h = std::move(out);
  }
  throw ValidationError("MlpModel: unreachable layer loop");
}

LayerHessianParts MlpModel::layer_hessian(const ParamVector& p, const Dataset& data,
                                          std::size_t layer, std::size_t unit) const {
  check_param_size(p);
  data.validate();
  if (layer < 1 || layer > layer_count()) throw ValidationError("layer_hessian: layer out of range");
  if (unit < 1 || unit > spec_.widths[layer]) throw ValidationError("layer_hessian: unit out of range");

  const std::size_t cols = data.sample_count();
  const std::size_t fan_in = spec_.widths[layer - 1];
  const Matrix h = hidden_states(p, data, layer - 1);
  LayerHessianParts parts;
  parts.h_extended = extend(h);
  parts.s.resize(cols);

  const std::size_t wo = weight_offset(layer) + (unit - 1) * fan_in;
  const std::size_t bo = bias_offset(layer) + unit - 1;
  for (std::size_t j = 0; j < cols; ++j) {
    const Vector x = data.inputs.col(j);
    const Vector y = data.targets.col(j);
    double a = p[bo];
    for (std::size_t k = 0; k < fan_in; ++k) a += p[wo + k] * h(k, j);
    // Central second difference of the per-example loss on the unit's
    // pre-activation, step 1e-4 * (1 + |a|).
    const double step = 1e-4 * (1.0 + std::abs(a));
    const double up = example_loss_with_override(p, x, y, layer, unit, a + step);
    const double mid = example_loss_with_override(p, x, y, layer, unit, a);
    const double down = example_loss_with_override(p, x, y, layer, unit, a - step);
    parts.s[j] = (up - 2.0 * mid + down) / (step * step) / static_cast<double>(cols);
  }

  const std::size_t dim = fan_in + 1;
  Matrix hess(dim, dim);
  for (std::size_t j = 0; j < cols; ++j) {
    const double w = parts.s[j];
    for (std::size_t r = 0; r < dim; ++r) {
      const double hr = parts.h_extended(r, j);
      for (std::size_t c = r; c < dim; ++c) hess(r, c) += w * hr * parts.h_extended(c, j);
    }
  }
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < r; ++c) hess(r, c) = hess(c, r);
  parts.hessian = std::move(hess);
  return parts;
}

// ---- LinearRegressionModel ----

LinearRegressionModel::LinearRegressionModel(std::size_t in_dim, std::size_t out_dim)
    : in_dim_(in_dim), out_dim_(out_dim) {
  if (in_dim_ == 0 || out_dim_ == 0)
    throw ValidationError("LinearRegressionModel: zero dimension");
}

double LinearRegressionModel::loss(const ParamVector& p, const Dataset& data) const {
  check_param_size(p);
  data.validate();
  if (data.inputs.rows() != in_dim_ || data.targets.rows() != out_dim_)
    throw ValidationError("LinearRegressionModel: dataset dimensions mismatch");
  const std::size_t cols = data.sample_count();
  if (cols == 0) throw ValidationError("LinearRegressionModel: empty dataset");
  double total = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t r = 0; r < out_dim_; ++r) {
      double a = p[out_dim_ * in_dim_ + r];
      for (std::size_t k = 0; k < in_dim_; ++k) a += p[r * in_dim_ + k] * data.inputs(k, j);
      const double d = a - data.targets(r, j);
      total += 0.5 * d * d;
    }
  }
  return total / static_cast<double>(cols);
}

ParamVector LinearRegressionModel::gradient(const ParamVector& p, const Dataset& data) const {
  check_param_size(p);
  data.validate();
  if (data.inputs.rows() != in_dim_ || data.targets.rows() != out_dim_)
    throw ValidationError("LinearRegressionModel: dataset dimensions mismatch");
  const std::size_t cols = data.sample_count();
  if (cols == 0) throw ValidationError("LinearRegressionModel: empty dataset");
  ParamVector g(param_count(), 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t r = 0; r < out_dim_; ++r) {
      double a = p[out_dim_ * in_dim_ + r];
      for (std::size_t k = 0; k < in_dim_; ++k) a += p[r * in_dim_ + k] * data.inputs(k, j);
      const double delta = a - data.targets(r, j);
      g[out_dim_ * in_dim_ + r] += delta;
      for (std::size_t k = 0; k < in_dim_; ++k) g[r * in_dim_ + k] += delta * data.inputs(k, j);
    }
  }
  const double inv = 1.0 / static_cast<double>(cols);
  for (double& x : g) x *= inv;
  return g;
}

Matrix LinearRegressionModel::hessian(const ParamVector& p, const Dataset& data) const {
  check_param_size(p);
  data.validate();
  const std::size_t cols = data.sample_count();
  const Vector weights(cols, 1.0 / static_cast<double>(cols));
  const Matrix block = mean_extended_gram(data.inputs, weights);
  Matrix h(param_count(), param_count());
  for (std::size_t r = 0; r < out_dim_; ++r) scatter_affine_hessian(h, block, in_dim_, out_dim_, r);
  return h;
}

std::optional<ParamVector> LinearRegressionModel::optimum(const Dataset& data) const {
  data.validate();
  const std::size_t cols = data.sample_count();
  if (cols == 0) return std::nullopt;
  const Vector weights(cols, 1.0 / static_cast<double>(cols));
  const Matrix gram = mean_extended_gram(data.inputs, weights);
  Matrix chol;
  try {
    chol = cholesky_factor(gram);
  } catch (const ValidationError&) {
    return std::nullopt;  // rank-deficient normal equations
  }
  ParamVector p(param_count(), 0.0);
  for (std::size_t r = 0; r < out_dim_; ++r) {
    Vector rhs(in_dim_ + 1, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
      const double y = data.targets(r, j);
      rhs[0] += y;
      for (std::size_t k = 0; k < in_dim_; ++k) rhs[k + 1] += y * data.inputs(k, j);
    }
    for (double& x : rhs) x /= static_cast<double>(cols);
    const Vector w = cholesky_solve(chol, rhs);
    p[out_dim_ * in_dim_ + r] = w[0];
    for (std::size_t k = 0; k < in_dim_; ++k) p[r * in_dim_ + k] = w[k + 1];
  }
  return p;
}

// ---- LogisticRegressionModel ----

LogisticRegressionModel::LogisticRegressionModel(std::size_t in_dim, std::size_t out_dim)
    : in_dim_(in_dim), out_dim_(out_dim) {
  if (in_dim_ == 0 || out_dim_ == 0)
    throw ValidationError("LogisticRegressionModel: zero dimension");
}

double LogisticRegressionModel::loss(const ParamVector& p, const Dataset& data) const {
  check_param_size(p);
  data.validate();
  if (data.inputs.rows() != in_dim_ || data.targets.rows() != out_dim_)
    throw ValidationError("LogisticRegressionModel: dataset dimensions mismatch");
  const std::size_t cols = data.sample_count();
  if (cols == 0) throw ValidationError("LogisticRegressionModel: empty dataset");
  double total = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t r = 0; r < out_dim_; ++r) {
      double a = p[out_dim_ * in_dim_ + r];
      for (std::size_t k = 0; k < in_dim_; ++k) a += p[r * in_dim_ + k] * data.inputs(k, j);
      total += softplus(a) - data.targets(r, j) * a;
    }
  }
  return total / static_cast<double>(cols);
}

ParamVector LogisticRegressionModel::gradient(const ParamVector& p, const Dataset& data) const {
  check_param_size(p);
  data.validate();
  if (data.inputs.rows() != in_dim_ || data.targets.rows() != out_dim_)
    throw ValidationError("LogisticRegressionModel: dataset dimensions mismatch");
  const std::size_t cols = data.sample_count();
  if (cols == 0) throw ValidationError("LogisticRegressionModel: empty dataset");
  ParamVector g(param_count(), 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t r = 0; r < out_dim_; ++r) {
      double a = p[out_dim_ * in_dim_ + r];
      for (std::size_t k = 0; k < in_dim_; ++k) a += p[r * in_dim_ + k] * data.inputs(k, j);
      const double delta = sigmoid(a) - data.targets(r, j);
      g[out_dim_ * in_dim_ + r] += delta;
      for (std::size_t k = 0; k < in_dim_; ++k) g[r * in_dim_ + k] += delta * data.inputs(k, j);
    }
  }
  const double inv = 1.0 / static_cast<double>(cols);
  for (double& x : g) x *= inv;
  return g;
}

Matrix LogisticRegressionModel::hessian(const ParamVector& p, const Dataset& data) const {
  check_param_size(p);
  data.validate();
  const std::size_t cols = data.sample_count();
  if (cols == 0) throw ValidationError("LogisticRegressionModel: empty dataset");
  Matrix h(param_count(), param_count());
  for (std::size_t r = 0; r < out_dim_; ++r) {
    Vector weights(cols);
    for (std::size_t j = 0; j < cols; ++j) {
      double a = p[out_dim_ * in_dim_ + r];
      for (std::size_t k = 0; k < in_dim_; ++k) a += p[r * in_dim_ + k] * data.inputs(k, j);
      const double s = sigmoid(a);
      weights[j] = s * (1.0 - s) / static_cast<double>(cols);
    }
    const Matrix block = mean_extended_gram(data.inputs, weights);
    scatter_affine_hessian(h, block, in_dim_, out_dim_, r);
  }
  return h;
}

// ---- gradient-magnitude proxy ----

GradHessianProxy grad_hessian_row_proxy(const LossModel& model, const ParamVector& p_star,
                                        const Dataset& data, std::size_t num_samples,
                                        double radius, std::uint64_t seed) {
  if (num_samples == 0) throw ValidationError("grad_hessian_row_proxy: need at least one sample");
  if (!(radius > 0.0)) throw ValidationError("grad_hessian_row_proxy: radius must be positive");
  const ParamVector g0 = model.gradient(p_star, data);
  if (norm2(g0) > 1e-6)
    throw ValidationError("grad_hessian_row_proxy: p_star is not stationary (||grad|| = " +
                          std::to_string(norm2(g0)) + ")");

  const std::size_t n = p_star.size();
  SplitMix64 rng(seed);
  Vector acc(n, 0.0);
  for (std::size_t s = 0; s < num_samples; ++s) {
    Vector dir(n);
    double nrm = 0.0;
    do {
      for (std::size_t i = 0; i < n; ++i) dir[i] = rng.normal();
      nrm = norm2(dir);
    } while (nrm < 1e-12);
    ParamVector q = p_star;
    for (std::size_t i = 0; i < n; ++i) q[i] += radius * dir[i] / nrm;
    const ParamVector g = model.gradient(q, data);
    for (std::size_t i = 0; i < n; ++i) acc[i] += std::abs(g[i]);
  }
  GradHessianProxy out;
  out.avg_abs_grad = scaled(acc, 1.0 / static_cast<double>(num_samples));
  const Matrix h = model.hessian(p_star, data);
  out.hessian_row_norms.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.hessian_row_norms[i] = norm2(h.row(i));
  return out;
}

}  // namespace preclab
