#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "preclab/errors.hpp"
#include "preclab/linalg.hpp"
#include "preclab/models.hpp"
#include "preclab/rng.hpp"
#include "preclab/stats.hpp"

using namespace preclab;

namespace {

const Dataset kNoData{};

Dataset random_dataset(std::size_t n, std::size_t m, std::size_t cols, SplitMix64& rng,
                       bool binary_targets = false) {
  Dataset data;
  data.inputs = Matrix(n, cols);
  data.targets = Matrix(m, cols);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < n; ++i) data.inputs(i, j) = rng.normal();
    for (std::size_t i = 0; i < m; ++i)
      data.targets(i, j) = binary_targets ? static_cast<double>(rng.uniform_index(0, 1))
                                          : rng.normal();
  }
  return data;
}

// Naive Gaussian elimination, independent of the library's Cholesky path.
Vector gauss_solve(Matrix a, Vector b) {
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(pivot, k))) pivot = i;
    for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(pivot, j));
    std::swap(b[k], b[pivot]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t j = ii + 1; j < n; ++j) s -= a(ii, j) * x[j];
    x[ii] = s / a(ii, ii);
  }
  return x;
}

double rel_gap(const Vector& a, const Vector& b) {
  return norm2(sub(a, b)) / std::max(1e-12, norm2(b));
}

}  // namespace

TEST_CASE("quadratic model basics") {
  const QuadraticModel model(Matrix::diag({1.0, 2.0}));
  CHECK(model.loss({0.0, 0.0}, kNoData) == 0.0);
  const ParamVector g = model.gradient({1.0, 1.0}, kNoData);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(2.0));

  // Hessian is constant in p
  SplitMix64 rng(11);
  for (int i = 0; i < 5; ++i) {
    ParamVector p{rng.normal(), rng.normal()};
    const Matrix h = model.hessian(p, kNoData);
    CHECK(h(0, 0) == 1.0);
    CHECK(h(1, 1) == 2.0);
    CHECK(h(0, 1) == 0.0);
  }

  CHECK_THROWS_AS((void)model.loss({1.0}, kNoData), ValidationError);
  CHECK_THROWS_AS(QuadraticModel(Matrix::from_rows({{1, 2}, {0, 1}})), ValidationError);
}

TEST_CASE("linear regression loss matches the normal-equations oracle") {
  SplitMix64 rng(12);
  const std::size_t n = 3, cols = 40;
  const Dataset data = random_dataset(n, 1, cols, rng);
  const LinearRegressionModel model(n, 1);

  // Oracle: solve (Xe Xe^T) w = Xe y by Gaussian elimination, then sum the
  // squared residuals directly.
  const Matrix xe = extend(data.inputs);
  Matrix gram(n + 1, n + 1);
  Vector rhs(n + 1, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t r = 0; r <= n; ++r) {
      rhs[r] += xe(r, j) * data.targets(0, j);
      for (std::size_t c = 0; c <= n; ++c) gram(r, c) += xe(r, j) * xe(c, j);
    }
  }
  const Vector w = gauss_solve(gram, rhs);  // [bias; weights] order
  double residual_sq = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    double pred = w[0];
    for (std::size_t k = 0; k < n; ++k) pred += w[k + 1] * data.inputs(k, j);
    const double r = pred - data.targets(0, j);
    residual_sq += r * r;
  }
  const double oracle_loss = residual_sq / (2.0 * cols);

  const ParamVector p_star = model.optimum(data).value();
  CHECK(model.loss(p_star, data) == doctest::Approx(oracle_loss).epsilon(1e-10));
  CHECK(norm2(model.gradient(p_star, data)) <= 1e-8);  // stationary point
}

TEST_CASE("logistic loss at zero with balanced labels is ln 2") {
  Dataset data;
  data.inputs = Matrix(2, 4);
  data.targets = Matrix(1, 4);
  SplitMix64 rng(13);
  for (std::size_t j = 0; j < 4; ++j) {
    data.inputs(0, j) = rng.normal();
    data.inputs(1, j) = rng.normal();
    data.targets(0, j) = j < 2 ? 0.0 : 1.0;
  }
  const LogisticRegressionModel model(2, 1);
  const ParamVector zero(model.param_count(), 0.0);
  CHECK(model.loss(zero, data) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("analytic gradients match central finite differences") {
  SplitMix64 rng(14);
  // 20 random (p, data) instances per model type
  for (int trial = 0; trial < 80; ++trial) {
    std::shared_ptr<LossModel> model;
    Dataset data;
    switch (trial % 4) {
      case 0: {
        Matrix a(3, 3);
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = i; j < 3; ++j) {
            a(i, j) = rng.uniform(-1.0, 1.0);
            a(j, i) = a(i, j);
          }
        for (std::size_t i = 0; i < 3; ++i) a(i, i) += 3.0;
        model = std::make_shared<QuadraticModel>(a);
        break;
      }
      case 1:
        model = std::make_shared<LinearRegressionModel>(3, 2);
        data = random_dataset(3, 2, 15, rng);
        break;
      case 2:
        model = std::make_shared<LogisticRegressionModel>(3, 1);
        data = random_dataset(3, 1, 15, rng, true);
        break;
      default: {
        const Activation acts[] = {Activation::tanh, Activation::softplus, Activation::sigmoid,
                                   Activation::identity};
        const bool xent = trial % 8 >= 4;
        model = std::make_shared<MlpModel>(
            MlpSpec{{2, 4, 2}, acts[(trial / 4) % 4],
                    xent ? LossKind::cross_entropy : LossKind::squared_error});
        data = random_dataset(2, 2, 10, rng, xent);
        break;
      }
    }
    ParamVector p(model->param_count());
    for (double& x : p) x = 0.8 * rng.normal();
    const ParamVector analytic = model->gradient(p, data);
    const ParamVector fd = fd_gradient(*model, p, data);
    CHECK(rel_gap(analytic, fd) <= 1e-6);
  }
}

TEST_CASE("mlp layer_hessian matches the finite-difference block") {
  SplitMix64 rng(15);
  const MlpModel mlp(MlpSpec{{3, 4, 1}, Activation::tanh, LossKind::squared_error});
  const Dataset data = random_dataset(3, 1, 9, rng);
  ParamVector p(mlp.param_count());
  for (double& x : p) x = 0.7 * rng.normal();

  const std::size_t layer = mlp.layer_count();  // last layer, single unit
  const LayerHessianParts parts = mlp.layer_hessian(p, data, layer, 1);
  CHECK(parts.hessian.symmetry_gap() <= 1e-12);
  CHECK(parts.h_extended.rows() == 5);

  const Matrix full = fd_hessian(mlp, p, data);
  const std::vector<std::size_t> idx = mlp.unit_param_indices(layer, 1);
  Matrix block(idx.size(), idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < idx.size(); ++c) block(r, c) = full(idx[r], idx[c]);
  Matrix diff = parts.hessian;
  diff -= block;
  CHECK(diff.frobenius_norm() <= 1e-4 * block.frobenius_norm());

  CHECK_THROWS_AS((void)mlp.layer_hessian(p, data, 0, 1), ValidationError);
  CHECK_THROWS_AS((void)mlp.layer_hessian(p, data, 3, 1), ValidationError);
  CHECK_THROWS_AS((void)mlp.layer_hessian(p, data, 1, 5), ValidationError);
}

TEST_CASE("layer_hessian reproduces the regression Gram structures") {
  SplitMix64 rng(16);
  const std::size_t n = 3, cols = 20;
  const Dataset data = random_dataset(n, 1, cols, rng);

  // linear regression view at a generic point
  {
    const MlpModel view(MlpSpec{{n, 1}, Activation::identity, LossKind::squared_error});
    ParamVector p(view.param_count());
    for (double& x : p) x = rng.normal();
    const LayerHessianParts parts = view.layer_hessian(p, data, 1, 1);
    const Matrix xe = extend(data.inputs);
    Matrix gram = xe * xe.transposed();
    gram *= 1.0 / static_cast<double>(cols);
    Matrix diff = parts.hessian;
    diff -= gram;
    CHECK(diff.frobenius_norm() <= 1e-6 * gram.frobenius_norm());
  }

  // logistic view: curvature entries live in (0, 1/(4N)]
  {
    Dataset binary = data;
    for (std::size_t j = 0; j < cols; ++j)
      binary.targets(0, j) = static_cast<double>(rng.uniform_index(0, 1));
    const MlpModel view(MlpSpec{{n, 1}, Activation::identity, LossKind::cross_entropy});
    ParamVector p(view.param_count());
    for (double& x : p) x = 0.4 * rng.normal();
    const LayerHessianParts parts = view.layer_hessian(p, binary, 1, 1);
    for (double s : parts.s) {
      CHECK(s > 0.0);
      CHECK(s <= 0.25 / static_cast<double>(cols) * (1.0 + 1e-6));
    }
  }
}

TEST_CASE("hessian_full: exact forms and the p = 0 logistic identity") {
  SplitMix64 rng(17);
  const std::size_t n = 3, cols = 18;
  const Dataset data = random_dataset(n, 1, cols, rng, true);

  // linear regression vs finite differences
  {
    const LinearRegressionModel model(n, 1);
    ParamVector p(model.param_count());
    for (double& x : p) x = rng.normal();
    const Matrix exact = model.hessian(p, data);
    const Matrix fd = fd_hessian(model, p, data);
    Matrix diff = exact;
    diff -= fd;
    CHECK(diff.frobenius_norm() <= 1e-6 * exact.frobenius_norm());
  }

  // logistic at p = 0: Xe Xe^T / (4N) in the model's flat layout
  {
    const LogisticRegressionModel model(n, 1);
    const ParamVector zero(model.param_count(), 0.0);
    const Matrix h = model.hessian(zero, data);
    const Matrix xe = extend(data.inputs);
    Matrix gram = xe * xe.transposed();
    gram *= 1.0 / (4.0 * cols);
    // flat layout [w0..w2, b] vs extended order [1, x]: bias index n
    const std::size_t map[] = {n, 0, 1, 2};
    double worst = 0.0;
    for (std::size_t r = 0; r <= n; ++r)
      for (std::size_t c = 0; c <= n; ++c)
        worst = std::max(worst, std::abs(h(map[r], map[c]) - gram(r, c)));
    CHECK(worst <= 1e-14 * gram.max_abs() * 10);
  }
}

TEST_CASE("grad_hessian_row_proxy tracks Hessian row norms") {
  const QuadraticModel model(Matrix::diag({1.0, 10.0, 100.0}));
  const ParamVector p_star(3, 0.0);

  const GradHessianProxy proxy = grad_hessian_row_proxy(model, p_star, kNoData, 500, 1e-3, 7);
  CHECK(pearson_correlation(proxy.avg_abs_grad, proxy.hessian_row_norms) >= 0.99);
  CHECK(proxy.hessian_row_norms[2] == doctest::Approx(100.0));

  // a single iterate orthogonal to row 2 reports zero for that coordinate
  const ParamVector g = model.gradient({1e-3, 1e-3, 0.0}, kNoData);
  CHECK(std::abs(g[2]) <= 1e-6 * proxy.hessian_row_norms[2]);

  // first-order scaling: halving the radius halves every averaged magnitude
  const GradHessianProxy big = grad_hessian_row_proxy(model, p_star, kNoData, 50, 1e-3, 99);
  const GradHessianProxy small = grad_hessian_row_proxy(model, p_star, kNoData, 50, 5e-4, 99);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(big.avg_abs_grad[i] / small.avg_abs_grad[i] == doctest::Approx(2.0).epsilon(1e-9));

  CHECK_THROWS_AS(
      (void)grad_hessian_row_proxy(model, ParamVector{1.0, 1.0, 1.0}, kNoData, 10, 1e-3, 1),
      ValidationError);
}

TEST_CASE("dataset and spec validation") {
  Dataset bad;
  bad.inputs = Matrix(2, 3);
  bad.targets = Matrix(1, 4);
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  CHECK_THROWS_AS(MlpModel(MlpSpec{{3}, Activation::tanh, LossKind::squared_error}),
                  ValidationError);
  CHECK_THROWS_AS(MlpModel(MlpSpec{{3, 0, 1}, Activation::tanh, LossKind::squared_error}),
                  ValidationError);
}
