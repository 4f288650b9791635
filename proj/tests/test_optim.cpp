#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "preclab/errors.hpp"
#include "preclab/harness.hpp"
#include "preclab/linalg.hpp"
#include "preclab/models.hpp"
#include "preclab/optim.hpp"
#include "preclab/rng.hpp"

using namespace preclab;

namespace {

const Dataset kNoData{};

OptimizerConfig cfg_with(double alpha, double eps = 1e-8,
                         InitConvention init = InitConvention::first_gradient_init) {
  OptimizerConfig cfg;
  cfg.alpha = alpha;
  cfg.epsilon = eps;
  cfg.init = init;
  return cfg;
}

}  // namespace

TEST_CASE("gd_step arithmetic") {
  const ParamVector p{1.0, 1.0};
  CHECK(gd_step(p, {0.0, 0.0}, 0.7) == p);
  CHECK(gd_step(p, {1.0, 3.0}, 0.0) == p);
  const ParamVector next = gd_step(p, {1.0, 3.0}, 0.5);  // diag(1,3) at optimal alpha
  CHECK(next[0] == doctest::Approx(0.5));
  CHECK(next[1] == doctest::Approx(-0.5));
}

TEST_CASE("precond_gd_step: identity, Newton, and sign steps") {
  SplitMix64 rng(21);
  const ParamVector p{0.3, -1.2, 0.7};
  const ParamVector g{1.0, -2.0, 0.5};
  CHECK(precond_gd_step(p, g, 0.1, FixedPreconditioner::identity(3)) == gd_step(p, g, 0.1));

  const Matrix a = random_spd(4, 50.0, rng);
  const QuadraticModel model(a);
  ParamVector q(4);
  for (double& x : q) x = rng.normal();
  const FixedPreconditioner inv(spd_inverse(a));
  const ParamVector after = precond_gd_step(q, model.gradient(q, kNoData), 1.0, inv);
  CHECK(norm2(after) <= 1e-10);  // one Newton step on a quadratic

  // M = diag(1/|g|) keeps only the signs
  const ParamVector p2{0.0, 0.0};
  const ParamVector g2{-2.0, 5.0};
  const FixedPreconditioner signs(Matrix::diag({0.5, 0.2}));
  const ParamVector moved = precond_gd_step(p2, g2, 0.3, signs);
  CHECK(moved[0] == doctest::Approx(0.3));
  CHECK(moved[1] == doctest::Approx(-0.3));
}

TEST_CASE("precond_kappa") {
  SplitMix64 rng(22);
  const Matrix a = random_spd(5, 80.0, rng);
  CHECK(precond_kappa(FixedPreconditioner(spd_inverse(a)), a) ==
        doctest::Approx(1.0).epsilon(1e-8));
  CHECK(precond_kappa(FixedPreconditioner::identity(5), a) ==
        doctest::Approx(condition_number(a)).epsilon(1e-9));

  // equilibration-derived diagonal never hurts on an ill-scaled Hessian
  Matrix scaled = random_spd(5, 4.0, rng);
  const Vector s{1.0, 10.0, 100.0, 0.1, 31.0};
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) scaled(i, j) *= s[i] * s[j];
  const FixedPreconditioner eq(row_equilibrate(scaled, 1.0));
  CHECK(precond_kappa(eq, scaled) <= condition_number(scaled));
}

TEST_CASE("optimal_lr and theoretical_rate") {
  CHECK(optimal_lr(1.0, 3.0) == doctest::Approx(0.5));
  CHECK(optimal_lr(4.0, 4.0) == doctest::Approx(0.25));
  CHECK(optimal_lr(1.0, 99.0) == doctest::Approx(0.02));
  CHECK_THROWS_AS((void)optimal_lr(0.0, 1.0), ValidationError);

  CHECK(theoretical_rate(1.0) == 0.0);
  CHECK(theoretical_rate(9.0) == doctest::Approx(0.8));
  CHECK(theoretical_rate(100.0) == doctest::Approx(99.0 / 101.0));
  CHECK_THROWS_AS((void)theoretical_rate(0.5), ValidationError);
}

TEST_CASE("adagrad_step accumulates and shrinks as 1/sqrt(t)") {
  OptimizerState state = OptimizerState::zeros(2);
  const ParamVector p{2.0, 2.0};
  const auto [s1, p1] = adagrad_step(state, p, {3.0, 4.0}, cfg_with(1.0, 0.0));
  CHECK(s1.r[0] == 9.0);
  CHECK(s1.r[1] == 16.0);
  CHECK(s1.t == 1);
  CHECK(p1[0] == doctest::Approx(1.0));  // p - g/|g| coordinatewise
  CHECK(p1[1] == doctest::Approx(1.0));

  const auto [s2, p2] = adagrad_step(s1, p1, {0.0, 0.0}, cfg_with(1.0, 0.0));
  CHECK(s2.r == s1.r);
  CHECK(p2 == p1);

  // constant gradient: consecutive step sizes shrink by sqrt(t/(t+1))
  OptimizerState st = OptimizerState::zeros(1);
  ParamVector q{0.0};
  const ParamVector g{2.5};
  Vector step_sizes;
  for (int t = 0; t < 6; ++t) {
    const auto res = adagrad_step(st, q, g, cfg_with(1.0, 0.0));
    step_sizes.push_back(std::abs(res.p[0] - q[0]));
    CHECK(res.state.r[0] >= st.r[0]);  // monotone accumulator
    st = res.state;
    q = res.p;
  }
  for (std::size_t t = 1; t < step_sizes.size(); ++t)
    CHECK(step_sizes[t] / step_sizes[t - 1] ==
          doctest::Approx(std::sqrt(static_cast<double>(t) / (t + 1.0))).epsilon(1e-12));
}

TEST_CASE("rmsprop_step seeding and the two-step average") {
  OptimizerState state = OptimizerState::zeros(1);
  const auto [s1, p1] = rmsprop_step(state, {0.0}, {2.0}, cfg_with(0.1));
  CHECK(s1.r[0] == 4.0);  // first call seeds r = g^2

  OptimizerConfig cfg = cfg_with(0.1);
  cfg.rho = 0.5;
  const auto [s2, p2] = rmsprop_step(s1, p1, {4.0}, cfg);
  CHECK(s2.r[0] == doctest::Approx(10.0));  // 0.5*4 + 0.5*16
  (void)p2;
}

TEST_CASE("rmsprop closed form equals the recursion") {
  CHECK(rmsprop_closed_form({{3.0}}, 0.9)[0] == doctest::Approx(9.0));
  const Vector two = rmsprop_closed_form({{2.0}, {4.0}}, 0.5);
  CHECK(two[0] == doctest::Approx(10.0));

  SplitMix64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vector> gs(5, Vector(3));
    for (auto& g : gs)
      for (double& x : g) x = rng.normal();
    const double rho = rng.uniform(0.1, 0.95);
    OptimizerConfig cfg = cfg_with(0.1);
    cfg.rho = rho;
    OptimizerState st = OptimizerState::zeros(3);
    ParamVector p(3, 0.0);
    for (const auto& g : gs) {
      auto res = rmsprop_step(st, p, g, cfg);
      st = res.state;
      p = res.p;
    }
    const Vector closed = rmsprop_closed_form(gs, rho);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(std::abs(st.r[i] - closed[i]) <= 1e-12 * (1.0 + std::abs(closed[i])));
  }
}

TEST_CASE("adam_step conventions") {
  const ParamVector p{1.0, -2.0};
  const ParamVector g{0.5, 1.5};

  // zero init: the very first corrected momentum is exactly g
  OptimizerConfig zero_cfg = cfg_with(0.1, 1e-8, InitConvention::zero_init_bias_corrected);
  const auto [sz, pz] = adam_step(OptimizerState::zeros(2), p, g, zero_cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    const double expect = p[i] - 0.1 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(pz[i] == doctest::Approx(expect).epsilon(1e-12));
  }

  // both conventions agree on the first step
  const auto [sf, pf] =
      adam_step(OptimizerState::zeros(2), p, g, cfg_with(0.1, 1e-8));
  for (std::size_t i = 0; i < 2; ++i) CHECK(pz[i] == doctest::Approx(pf[i]).epsilon(1e-12));
  (void)sz;
  (void)sf;

  // rho_hat = 0 turns adam into rmsprop, trajectory for trajectory
  SplitMix64 rng(24);
  OptimizerConfig no_momentum = cfg_with(0.05, 1e-8);
  no_momentum.rho_hat = 0.0;
  OptimizerState sa = OptimizerState::zeros(3), sr = OptimizerState::zeros(3);
  ParamVector pa(3, 1.0), pr(3, 1.0);
  for (int t = 0; t < 10; ++t) {
    Vector g3(3);
    for (double& x : g3) x = rng.normal();
    auto ra = adam_step(sa, pa, g3, no_momentum);
    auto rr = rmsprop_step(sr, pr, g3, no_momentum);
    sa = ra.state;
    pa = ra.p;
    sr = rr.state;
    pr = rr.p;
    CHECK(pa == pr);
  }

  // bias correction saturates once rho^t underflows
  OptimizerState old_state = OptimizerState::zeros(1);
  old_state.t = 1'000'000'000'000LL;
  old_state.r = {4.0};
  old_state.m = {2.0};
  const auto res = adam_step(old_state, {0.0}, {2.0}, zero_cfg);
  CHECK(std::isfinite(res.p[0]));
}

TEST_CASE("run records a contracting trajectory and empirical_rate measures it") {
  SplitMix64 rng(25);
  const Matrix a = random_spd(5, 9.0, rng);
  const QuadraticModel model(a);
  ParamVector p0(5);
  for (double& x : p0) x = rng.normal();
  const double alpha = optimal_lr(1.0, 9.0);
  const RunRecord record = run(
      model, kNoData,
      [alpha](const ParamVector& p, const ParamVector& g) { return gd_step(p, g, alpha); }, 200,
      p0);
  CHECK(record.rows.size() == 201);
  for (std::size_t i = 1; i < record.rows.size(); ++i)
    CHECK(record.rows[i].step == record.rows[i - 1].step + 1);
  CHECK(empirical_rate(record) == doctest::Approx(0.8).epsilon(0.025));

  // kappa = 1 with a power-of-two spectrum lands exactly on the optimum
  const QuadraticModel round_trip(Matrix::diag({2.0, 2.0}));
  const RunRecord exact = run(
      round_trip, kNoData,
      [](const ParamVector& p, const ParamVector& g) { return gd_step(p, g, 0.5); }, 10,
      {1.0, -3.0});
  CHECK(*exact.rows[1].dist_to_opt == 0.0);
  CHECK(empirical_rate(exact) == 0.0);

  // perfect preconditioning converges within two steps
  const FixedPreconditioner inv(spd_inverse(a));
  const RunRecord newton = run(
      model, kNoData,
      [&inv](const ParamVector& p, const ParamVector& g) {
        return precond_gd_step(p, g, 1.0, inv);
      },
      2, p0);
  CHECK(*newton.rows[2].dist_to_opt <= 1e-10);
}

TEST_CASE("rate law across random conditioning") {
  SplitMix64 rng(26);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = rng.uniform_index(2, 8);
    const double kappa = rng.log_uniform(2.0, 1e4);
    const QuadraticModel model(random_spd(n, kappa, rng));
    ParamVector p0(n);
    for (double& x : p0) x = rng.normal();
    const double alpha = optimal_lr(1.0, kappa);
    const RunRecord record = run(
        model, kNoData,
        [alpha](const ParamVector& p, const ParamVector& g) { return gd_step(p, g, alpha); }, 400,
        p0);
    const double emp = empirical_rate(record);
    const double theo = theoretical_rate(kappa);
    CHECK(std::abs(emp - theo) <= 0.02 * theo + 0.005);
  }
}

TEST_CASE("scale equivariance of the adaptive steps at epsilon = 0") {
  SplitMix64 rng(27);
  const Matrix a = random_spd(4, 30.0, rng);
  ParamVector p0(4);
  for (double& x : p0) x = rng.normal();

  for (OptimizerKind kind : {OptimizerKind::adagrad, OptimizerKind::rmsprop, OptimizerKind::adam}) {
    for (double c : {2.0, 3.0}) {
      const QuadraticModel base(a);
      Matrix scaled_a = a;
      scaled_a *= c;
      const QuadraticModel scaled(scaled_a);
      auto step1 = make_optimizer_step(kind, cfg_with(0.05, 0.0), 4);
      auto step2 = make_optimizer_step(kind, cfg_with(0.05, 0.0), 4);
      ParamVector pa = p0, pb = p0;
      for (int t = 0; t < 20; ++t) {
        pa = step1(pa, base.gradient(pa, kNoData));
        pb = step2(pb, scaled.gradient(pb, kNoData));
      }
      for (std::size_t i = 0; i < 4; ++i) {
        if (c == 2.0) {
          CHECK(pa[i] == pb[i]);  // power-of-two scaling is exact
        } else {
          CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("run aborts on divergence with a numerical error") {
  SplitMix64 rng(28);
  const QuadraticModel model(random_spd(3, 100.0, rng));
  ParamVector p0{1.0, 1.0, 1.0};
  CHECK_THROWS_AS(
      (void)run(
          model, kNoData,
          [](const ParamVector& p, const ParamVector& g) { return gd_step(p, g, 10.0); }, 200, p0),
      NumericalError);
}

TEST_CASE("empirical_rate input validation") {
  RunRecord record;
  for (int t = 0; t < 6; ++t)
    record.rows.push_back({t, 1.0, 1.0, std::pow(2.0, t)});  // doubling distances
  CHECK_THROWS_AS((void)empirical_rate(record), ValidationError);

  RunRecord no_dist;
  no_dist.rows.push_back({0, 1.0, 1.0, std::nullopt});
  no_dist.rows.push_back({1, 0.5, 0.5, std::nullopt});
  CHECK_THROWS_AS((void)empirical_rate(no_dist), ValidationError);
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig bad;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = OptimizerConfig{};
  bad.rho = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = OptimizerConfig{};
  bad.rho_hat = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = OptimizerConfig{};
  bad.epsilon = -1e-9;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
