#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "preclab/errors.hpp"
#include "preclab/harness.hpp"
#include "preclab/linalg.hpp"
#include "preclab/models.hpp"
#include "preclab/optim.hpp"
#include "preclab/regularize.hpp"
#include "preclab/rng.hpp"

using namespace preclab;

namespace {

const Dataset kNoData{};

// z-space weight-decay descent mapped back to p, for an arbitrary factor P
// with M = P P^T and starting point z0 = P^{-1} p0. Any factor must give the
// same p-trajectory.
std::vector<ParamVector> z_space_l2_trajectory(const LossModel& model, const Matrix& p_factor,
                                               Vector z, double alpha, double lambda, int steps) {
  std::vector<ParamVector> traj;
  traj.push_back(p_factor * z);
  for (int t = 0; t < steps; ++t) {
    const Vector g_p = model.gradient(p_factor * z, kNoData);
    const Vector g_z = p_factor.transposed() * g_p;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= alpha * (g_z[i] + 2.0 * lambda * z[i]);
    traj.push_back(p_factor * z);
  }
  return traj;
}

Vector lower_triangular_solve(const Matrix& l, const Vector& rhs) {
  Vector x(rhs.size());
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

Matrix symmetric_sqrt(const Matrix& spd) {
  const SymEig eig = sym_eigvals(spd, true);
  const Matrix& q = *eig.eigenvectors;
  const std::size_t n = spd.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        s += q(i, k) * std::sqrt(eig.eigenvalues[k]) * q(j, k);
      out(i, j) = s;
    }
  return out;
}

Matrix general_inverse(const Matrix& spd) { return spd_inverse(spd); }

}  // namespace

TEST_CASE("hvp: quadratic exactness, zero vector, mlp oracle") {
  SplitMix64 rng(41);
  const Matrix a = random_spd(4, 25.0, rng);
  const QuadraticModel model(a);
  ParamVector p(4), v(4);
  for (double& x : p) x = rng.normal();
  for (double& x : v) x = rng.normal();

  const Vector av = a * v;
  const Vector approx = hvp(model, p, v, kNoData);
  CHECK(norm2(sub(approx, av)) <= 1e-9 * norm2(av));

  const Vector zero = hvp(model, p, Vector(4, 0.0), kNoData);
  for (double x : zero) CHECK(x == 0.0);

  const MlpModel mlp(MlpSpec{{2, 3, 1}, Activation::tanh, LossKind::squared_error});
  Dataset data;
  data.inputs = Matrix(2, 8);
  data.targets = Matrix(1, 8);
  for (auto& x : data.inputs.entries()) x = rng.normal();
  for (auto& x : data.targets.entries()) x = rng.normal();
  ParamVector pm(mlp.param_count()), vm(mlp.param_count());
  for (double& x : pm) x = 0.5 * rng.normal();
  for (double& x : vm) x = rng.normal();
  const Vector via_hvp = hvp(mlp, pm, vm, data);
  const Vector via_fd = fd_hessian(mlp, pm, data) * vm;
  CHECK(norm2(sub(via_hvp, via_fd)) <= 1e-4 * std::max(1.0, norm2(via_fd)));
}

TEST_CASE("l2 steps: collapses and the scheme difference") {
  SplitMix64 rng(42);
  const std::size_t n = 3;
  ParamVector p(n), g(n);
  for (double& x : p) x = rng.normal();
  for (double& x : g) x = rng.normal();
  const Matrix m_raw = random_spd(n, 6.0, rng);
  const FixedPreconditioner m(m_raw);

  // lambda = 0 collapses to the plain preconditioned step, bit for bit
  CHECK(step_l2_in_z(p, g, 0.13, 0.0, m) == precond_gd_step(p, g, 0.13, m));
  CHECK(step_l2_in_p(p, g, 0.13, 0.0, m) == precond_gd_step(p, g, 0.13, m));

  // M = I collapses the two schemes
  const FixedPreconditioner eye = FixedPreconditioner::identity(n);
  const ParamVector in_z = step_l2_in_z(p, g, 0.13, 0.27, eye);
  const ParamVector in_p = step_l2_in_p(p, g, 0.13, 0.27, eye);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(in_z[i] == doctest::Approx(in_p[i]).epsilon(1e-15));

  // the worked diagonal example where the two schemes genuinely differ
  const FixedPreconditioner diag4(Matrix::diag({4.0, 4.0}));
  const ParamVector ones{1.0, 1.0};
  const ParamVector zero_g{0.0, 0.0};
  const ParamVector via_p = step_l2_in_p(ones, zero_g, 0.1, 0.1, diag4);
  const ParamVector via_z = step_l2_in_z(ones, zero_g, 0.1, 0.1, diag4);
  CHECK(via_p[0] == doctest::Approx(0.92));
  CHECK(via_z[0] == doctest::Approx(0.98));
}

TEST_CASE("step_l2_in_p equals one preconditioned step on the assembled loss") {
  SplitMix64 rng(48);
  const Matrix a = random_spd(3, 8.0, rng);
  const QuadraticModel model(a);
  const FixedPreconditioner m(random_spd(3, 3.0, rng));
  const double alpha = 0.02, lambda = 0.07;
  ParamVector p(3);
  for (double& x : p) x = rng.normal();

  auto assembled = [&](const ParamVector& x) {
    return model.loss(x, kNoData) + lambda * dot(x, x);
  };
  Vector fd_grad(3);
  for (std::size_t i = 0; i < 3; ++i) {
    ParamVector up = p, down = p;
    const double h = 1e-6 * (1.0 + std::abs(p[i]));
    up[i] += h;
    down[i] -= h;
    fd_grad[i] = (assembled(up) - assembled(down)) / (2.0 * h);
  }
  const ParamVector oracle = precond_gd_step(p, fd_grad, alpha, m);
  const ParamVector impl = step_l2_in_p(p, model.gradient(p, kNoData), alpha, lambda, m);
  CHECK(norm2(sub(impl, oracle)) <= 1e-8);
}

TEST_CASE("step_l2_in_z matches an explicit z-space simulation") {
  SplitMix64 rng(43);
  const Matrix a = random_spd(2, 10.0, rng);
  const QuadraticModel model(a);
  const FixedPreconditioner m(Matrix::diag({4.0, 4.0}));  // P = diag(2)
  const double alpha = 0.02, lambda = 0.05;
  ParamVector p{1.0, -0.5};
  Vector z{0.5, -0.25};
  for (int t = 0; t < 30; ++t) {
    p = step_l2_in_z(p, model.gradient(p, kNoData), alpha, lambda, m);
    const Vector g_z = scaled(model.gradient({2.0 * z[0], 2.0 * z[1]}, kNoData), 2.0);
    for (std::size_t i = 0; i < 2; ++i) z[i] -= alpha * (g_z[i] + 2.0 * lambda * z[i]);
    CHECK(p[0] == doctest::Approx(2.0 * z[0]).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(2.0 * z[1]).epsilon(1e-12));
  }
}

TEST_CASE("gradient regularization in p: arithmetic and fd oracle") {
  // worked example: diag(1,2), M = I, p = (1,1)
  const QuadraticModel model(Matrix::diag({1.0, 2.0}));
  const FixedPreconditioner eye = FixedPreconditioner::identity(2);
  const ParamVector stepped =
      step_grad_reg_in_p(model, {1.0, 1.0}, 0.1, 0.05, eye, kNoData);
  CHECK(stepped[0] == doctest::Approx(0.89).epsilon(1e-9));
  CHECK(stepped[1] == doctest::Approx(0.76).epsilon(1e-9));

  // lambda = 0 collapse, bit for bit
  SplitMix64 rng(44);
  const Matrix a = random_spd(3, 12.0, rng);
  const QuadraticModel q(a);
  ParamVector p(3);
  for (double& x : p) x = rng.normal();
  const FixedPreconditioner m(random_spd(3, 3.0, rng));
  CHECK(step_grad_reg_in_p(q, p, 0.05, 0.0, m, kNoData) ==
        precond_gd_step(p, q.gradient(p, kNoData), 0.05, m));

  // independent oracle: finite differences of the assembled loss L + lambda ||grad L||^2
  const double lambda = 0.03, alpha = 0.02;
  auto assembled = [&](const ParamVector& x) {
    const Vector gx = q.gradient(x, kNoData);
    return q.loss(x, kNoData) + lambda * dot(gx, gx);
  };
  Vector fd_grad(3);
  for (std::size_t i = 0; i < 3; ++i) {
    ParamVector up = p, down = p;
    const double h = 1e-6 * (1.0 + std::abs(p[i]));
    up[i] += h;
    down[i] -= h;
    fd_grad[i] = (assembled(up) - assembled(down)) / (2.0 * h);
  }
  const ParamVector oracle_step = precond_gd_step(p, fd_grad, alpha, m);
  const ParamVector impl_step = step_grad_reg_in_p(q, p, alpha, lambda, m, kNoData);
  CHECK(norm2(sub(impl_step, oracle_step)) <= 1e-6);
}

TEST_CASE("grad_reg_in_z collapses at M = I and descends the z-space objective") {
  SplitMix64 rng(45);
  const Matrix a = random_spd(4, 15.0, rng);
  const QuadraticModel model(a);
  ParamVector p(4);
  for (double& x : p) x = 0.8 * rng.normal();
  const FixedPreconditioner eye = FixedPreconditioner::identity(4);

  const ParamVector via_z = step_grad_reg_in_z(model, p, 0.02, 0.1, eye, kNoData);
  const ParamVector via_p = step_grad_reg_in_p(model, p, 0.02, 0.1, eye, kNoData);
  CHECK(norm2(sub(via_z, via_p)) <= 1e-12);

  // one small step strictly decreases L(Pz) + lambda ||grad_z L||^2
  const Matrix m_raw = random_spd(4, 5.0, rng);
  const FixedPreconditioner m(m_raw);
  const Matrix p_factor = m.factor();
  const double lambda = 0.05;
  auto z_objective = [&](const ParamVector& at) {
    const Vector g_z = p_factor.transposed() * model.gradient(at, kNoData);
    return model.loss(at, kNoData) + lambda * dot(g_z, g_z);
  };
  // alpha small enough for the regularized operator M(A + 2 lambda A M A)
  const ParamVector next = step_grad_reg_in_z(model, p, 1e-3, lambda, m, kNoData);
  CHECK(z_objective(next) < z_objective(p));
}

TEST_CASE("any factor of M yields the same p-trajectory") {
  SplitMix64 rng(46);
  const Matrix a = random_spd(3, 10.0, rng);
  const QuadraticModel model(a);
  const Matrix m_raw = random_spd(3, 7.0, rng);
  ParamVector p0(3);
  for (double& x : p0) x = rng.normal();

  const Matrix chol = cholesky_factor(m_raw);
  const Matrix sym_sqrt = symmetric_sqrt(m_raw);
  const auto traj_chol =
      z_space_l2_trajectory(model, chol, lower_triangular_solve(chol, p0), 0.03, 0.08, 40);
  const auto traj_sqrt =
      z_space_l2_trajectory(model, sym_sqrt, general_inverse(sym_sqrt) * p0, 0.03, 0.08, 40);
  for (std::size_t t = 0; t < traj_chol.size(); ++t)
    CHECK(norm2(sub(traj_chol[t], traj_sqrt[t])) <= 1e-10);

  // and both agree with the implicit p-space update
  ParamVector p = p0;
  const FixedPreconditioner m(m_raw);
  for (int t = 0; t < 40; ++t) p = step_l2_in_z(p, model.gradient(p, kNoData), 0.03, 0.08, m);
  CHECK(norm2(sub(p, traj_chol.back())) <= 1e-10);
}

TEST_CASE("adamw: collapse, pure decay, and the missing equivalence") {
  SplitMix64 rng(47);
  ParamVector p(3), g(3);
  for (double& x : p) x = rng.normal();
  for (double& x : g) x = rng.normal();
  OptimizerConfig cfg;
  cfg.alpha = 0.05;

  const StepResult plain = adam_step(OptimizerState::zeros(3), p, g, cfg);
  const StepResult decay0 = adamw_step(OptimizerState::zeros(3), p, g, 0.05, 0.0, cfg);
  CHECK(plain.p == decay0.p);

  // zero gradient and empty history: pure decay
  const StepResult pure =
      adamw_step(OptimizerState::zeros(3), p, Vector(3, 0.0), 0.05, 0.4, cfg);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(pure.p[i] == doctest::Approx(p[i] * (1.0 - 0.05 * 0.4)).epsilon(1e-15));

  // gd: the matched lambda reproduces decoupled decay; adam: nothing does
  const Matrix a = random_spd(3, 40.0, rng);
  const QuadraticModel model(a);
  ParamVector p0(3);
  for (double& x : p0) x = rng.normal();
  const double lambda_w = 0.2;
  const std::vector<double> grid{0.001, 0.01, lambda_w / 2.0, 0.5};
  const EquivalenceReport gd_report = verify_no_equivalence(
      model, kNoData, OptimizerKind::gd, 0.02, lambda_w, grid, 40, p0, cfg);
  CHECK(gd_report.min_distance <= 1e-10);
  CHECK(gd_report.best_lambda == doctest::Approx(lambda_w / 2.0));

  const EquivalenceReport adam_report = verify_no_equivalence(
      model, kNoData, OptimizerKind::adam, 0.05, 0.1, {1e-4, 1e-2, 1e-1, 1.0}, 50, p0, cfg);
  CHECK(adam_report.min_final_distance > 1e-3);

  const EquivalenceReport zero_steps = verify_no_equivalence(
      model, kNoData, OptimizerKind::adam, 0.05, 0.1, {1e-3}, 0, p0, cfg);
  CHECK(zero_steps.min_distance == 0.0);
}

TEST_CASE("reg mode validation") {
  RegMode ok{RegKind::l2_in_z, 0.1};
  ok.validate();
  RegMode bad{RegKind::none, 0.1};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  RegMode negative{RegKind::l2_in_p, -1.0};
  CHECK_THROWS_AS(negative.validate(), ValidationError);
  CHECK(reg_kind_from_name("grad_reg_in_z") == RegKind::grad_reg_in_z);
  CHECK_THROWS_AS((void)reg_kind_from_name("bogus"), ValidationError);
}
