#include "preclab/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "preclab/bnp.hpp"
#include "preclab/errors.hpp"
#include "preclab/harness.hpp"
#include "preclab/linalg.hpp"
#include "preclab/models.hpp"
#include "preclab/optim.hpp"
#include "preclab/regularize.hpp"
#include "preclab/rng.hpp"
#include "preclab/stats.hpp"

namespace preclab::verify {

namespace {

CaseResult make_case(const std::string& suite, const std::string& name, int criterion,
                     double observed, double tolerance, bool pass, std::string detail = {}) {
  return CaseResult{suite, name, criterion, pass, tolerance, observed, std::move(detail)};
}

CaseResult bounded_case(const std::string& suite, const std::string& name, int criterion,
                        double observed, double tolerance, std::string detail = {}) {
  return make_case(suite, name, criterion, observed, tolerance, observed <= tolerance,
                   std::move(detail));
}

double rel_frobenius_gap(const Matrix& a, const Matrix& b) {
  Matrix d = a;
  d -= b;
  const double ref = b.frobenius_norm();
  return d.frobenius_norm() / (ref > 0.0 ? ref : 1.0);
}

Matrix symmetrized(const Matrix& a) {
  Matrix s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

const Dataset kNoData{};

// ---- rate-law: optimal-learning-rate contraction and perfect preconditioning ----

std::vector<CaseResult> rate_law_cases() {
  std::vector<CaseResult> cases;
  const std::string suite = "rate-law";
  const auto t0 = std::chrono::steady_clock::now();

  SplitMix64 rng(20240901ULL);
  for (double kappa : {2.0, 9.0, 100.0, 1e4}) {
    const std::size_t n = 6;
    const QuadraticModel model(random_spd(n, kappa, rng));
    ParamVector p0(n);
    for (double& x : p0) x = rng.normal();
    const double alpha = optimal_lr(1.0, kappa);
    const auto record = run(
        model, kNoData,
        [alpha](const ParamVector& p, const ParamVector& g) { return gd_step(p, g, alpha); }, 400,
        p0);
    const double emp = empirical_rate(record);
    const double theo = theoretical_rate(kappa);
    const double rel_err = std::abs(emp - theo) / theo;
    const double tol = kappa == 100.0 ? 0.01 : 0.02;
    cases.push_back(bounded_case(suite, "gd-rate-kappa-" + format_g17(kappa), 1, rel_err, tol,
                                 "empirical " + format_g17(emp) + " vs " + format_g17(theo)));
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cases.push_back(bounded_case(suite, "rate-law-runtime-sec", 1, elapsed, 1.0));

  // M = A^{-1}, alpha = 1 lands on the minimizer in at most two steps.
  double worst = 0.0;
  for (double kappa : {10.0, 100.0, 1e4}) {
    const std::size_t n = 5;
    const Matrix a = random_spd(n, kappa, rng);
    const QuadraticModel model(a);
    const FixedPreconditioner inv(spd_inverse(a));
    ParamVector p(n);
    for (double& x : p) x = rng.normal();
    double best = norm2(p);
    for (int t = 0; t < 2; ++t) {
      p = precond_gd_step(p, model.gradient(p, kNoData), 1.0, inv);
      best = std::min(best, norm2(p));
    }
    worst = std::max(worst, best);
  }
  cases.push_back(bounded_case(suite, "newton-two-step-distance", 2, worst, 1e-10));
  return cases;
}

// ---- van-der-sluis: row equilibration near-optimality and the gradient proxy ----

double gram_kappa_ratio(const Matrix& gram) {
  const SymEig eig = sym_eigvals(gram);
  const double lmin = std::max(eig.eigenvalues.front(), 0.0);
  const double lmax = eig.eigenvalues.back();
  if (lmin <= 1e-14 * lmax) return std::numeric_limits<double>::infinity();
  return std::sqrt(lmax / lmin);
}

std::vector<CaseResult> van_der_sluis_cases() {
  std::vector<CaseResult> cases;
  const std::string suite = "van-der-sluis";
  SplitMix64 rng(77001ULL);

  double worst_ratio = 0.0;  // kappa(DA) / (sqrt(m) * sampled min)
  const int kMatrices = 200;
  const int kDiagonals = 10000;
  for (int trial = 0; trial < kMatrices; ++trial) {
    const std::size_t m = rng.uniform_index(2, 6);
    const std::size_t n = rng.uniform_index(2, m);
    Matrix a(m, n);
    double kappa_a = std::numeric_limits<double>::infinity();
    do {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = rng.normal();
      kappa_a = gram_kappa_ratio(a.transposed() * a);
    } while (!(kappa_a < 1e6));  // keep full column rank comfortably

    // Row outer products once; every scaled Gram is a weighted sum of them.
    std::vector<Matrix> outers;
    outers.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
      Matrix o(n, n);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) o(r, c) = a(i, r) * a(i, c);
      outers.push_back(std::move(o));
    }
    auto scaled_kappa = [&](const Vector& d) {
      Matrix gram(n, n);
      for (std::size_t i = 0; i < m; ++i) {
        const double w = d[i] * d[i];
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < n; ++c) gram(r, c) += w * outers[i](r, c);
      }
      return gram_kappa_ratio(gram);
    };

    const Matrix deq = row_equilibrate(a, 1.0);
    Vector d_eq(m);
    for (std::size_t i = 0; i < m; ++i) d_eq[i] = deq(i, i);
    const double kappa_eq = scaled_kappa(d_eq);

    double sampled_min = std::numeric_limits<double>::infinity();
    Vector d(m);
    for (int s = 0; s < kDiagonals; ++s) {
      for (std::size_t i = 0; i < m; ++i) d[i] = rng.log_uniform(1e-2, 1e2);
      sampled_min = std::min(sampled_min, scaled_kappa(d));
    }
    worst_ratio =
        std::max(worst_ratio, kappa_eq / (std::sqrt(static_cast<double>(m)) * sampled_min));
  }
  cases.push_back(bounded_case(suite, "equilibration-within-sqrt-m-of-sampled-min", 3, worst_ratio,
                               1.0 + 1e-9,
                               std::to_string(kMatrices) + " matrices x " +
                                   std::to_string(kDiagonals) + " sampled diagonals"));

  // Averaged gradient magnitudes near the minimizer track Hessian row norms.
  {
    const QuadraticModel model(Matrix::diag({1.0, 10.0, 100.0}));
    const ParamVector p_star(3, 0.0);
    const GradHessianProxy proxy =
        grad_hessian_row_proxy(model, p_star, kNoData, 500, 1e-3, 424242ULL);
    const double corr = pearson_correlation(proxy.avg_abs_grad, proxy.hessian_row_norms);
    cases.push_back(make_case(suite, "grad-magnitude-row-norm-correlation", 12, corr, 0.95,
                              corr >= 0.95, "pearson over spectrum {1,10,100}"));

    // A single iterate orthogonal to one Hessian row hides that row entirely.
    const ParamVector p{1e-3, 1e-3, 0.0};
    const ParamVector g = model.gradient(p, kNoData);
    const double ratio = std::abs(g[2]) / proxy.hessian_row_norms[2];
    cases.push_back(bounded_case(suite, "single-orthogonal-iterate-blind-spot", 12, ratio, 1e-6));
  }
  return cases;
}

// ---- theorem3-hessian: unit Hessian structure H_e S H_e^T ----

std::vector<CaseResult> theorem3_cases() {
  std::vector<CaseResult> cases;
  const std::string suite = "theorem3-hessian";
  SplitMix64 rng(990301ULL);

  double worst_mlp = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    // Random small architectures capped at 60 parameters.
    std::vector<std::size_t> widths;
    while (true) {
      const std::size_t depth = rng.uniform_index(1, 3);
      widths = {rng.uniform_index(2, 4)};
      for (std::size_t l = 0; l < depth; ++l) widths.push_back(rng.uniform_index(1, 4));
      std::size_t params = 0;
      for (std::size_t l = 1; l < widths.size(); ++l)
        params += widths[l] * widths[l - 1] + widths[l];
      if (params <= 60) break;
    }
    const Activation acts[] = {Activation::tanh, Activation::sigmoid, Activation::softplus};
    const bool xent = trial % 4 == 3;
    const MlpModel mlp(MlpSpec{widths, acts[trial % 3],
                               xent ? LossKind::cross_entropy : LossKind::squared_error});
    ParamVector p(mlp.param_count());
    for (double& x : p) x = 0.6 * rng.normal();
    const std::size_t n_samples = rng.uniform_index(5, 12);
    Dataset data;
    data.inputs = Matrix(widths.front(), n_samples);
    data.targets = Matrix(widths.back(), n_samples);
    for (std::size_t j = 0; j < n_samples; ++j) {
      for (std::size_t i = 0; i < widths.front(); ++i) data.inputs(i, j) = rng.normal();
      for (std::size_t i = 0; i < widths.back(); ++i)
        data.targets(i, j) = xent ? static_cast<double>(rng.uniform_index(0, 1)) : rng.normal();
    }
    const std::size_t layer = rng.uniform_index(1, mlp.layer_count());
    const std::size_t unit = rng.uniform_index(1, mlp.layer_width(layer));

    const LayerHessianParts parts = mlp.layer_hessian(p, data, layer, unit);
    const Matrix full = fd_hessian(mlp, p, data);
    const std::vector<std::size_t> idx = mlp.unit_param_indices(layer, unit);
    Matrix block(idx.size(), idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < idx.size(); ++c) block(r, c) = full(idx[r], idx[c]);
    worst_mlp = std::max(worst_mlp, rel_frobenius_gap(parts.hessian, block));
  }
  cases.push_back(bounded_case(suite, "mlp-unit-hessian-vs-fd-block", 4, worst_mlp, 1e-4,
                               "20 random networks (<= 60 parameters)"));

  // Linear regression: the unit Hessian is the mean extended Gram matrix.
  // Evaluated at the least-squares fit, where the per-example losses are at
  // the noise scale and the second-difference curvature is clean.
  {
    const std::size_t n = 4, cols = 25;
    Dataset data;
    data.inputs = Matrix(n, cols);
    data.targets = Matrix(1, cols);
    Vector w_true(n);
    for (double& w : w_true) w = rng.normal();
    for (std::size_t j = 0; j < cols; ++j) {
      double y = 0.3;
      for (std::size_t i = 0; i < n; ++i) {
        data.inputs(i, j) = 1.5 * rng.normal() + 0.5;
        y += w_true[i] * data.inputs(i, j);
      }
      data.targets(0, j) = y + 0.005 * rng.normal();
    }
    const MlpModel view(MlpSpec{{n, 1}, Activation::identity, LossKind::squared_error});
    const LinearRegressionModel linreg(n, 1);  // same flat layout as the 1-layer network
    const ParamVector p = linreg.optimum(data).value();
    const LayerHessianParts parts = view.layer_hessian(p, data, 1, 1);
    const Matrix xe = extend(data.inputs);
    Matrix gram = xe * xe.transposed();
    gram *= 1.0 / static_cast<double>(cols);
    cases.push_back(bounded_case(suite, "linreg-hessian-is-mean-extended-gram", 4,
                                 rel_frobenius_gap(parts.hessian, gram), 1e-10));
  }

  // Logistic regression: curvature y_hat (1 - y_hat) / N, checked both as a
  // matrix and against the finite-difference curvature entries.
  {
    const std::size_t n = 3, cols = 30;
    Dataset data;
    data.inputs = Matrix(n, cols);
    data.targets = Matrix(1, cols);
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t i = 0; i < n; ++i) data.inputs(i, j) = rng.normal();
      data.targets(0, j) = static_cast<double>(rng.uniform_index(0, 1));
    }
    const MlpModel view(MlpSpec{{n, 1}, Activation::identity, LossKind::cross_entropy});
    // Moderate pre-activations keep the second-difference roundoff well
    // below the curvature scale s(1-s).
    ParamVector p(view.param_count());
    for (double& x : p) x = 0.3 * rng.normal();
    const LayerHessianParts parts = view.layer_hessian(p, data, 1, 1);

    const LogisticRegressionModel logistic(n, 1);
    const Matrix analytic = logistic.hessian(p, data);
    // Map the analytic flat Hessian into [bias; weights] order.
    std::vector<std::size_t> idx{n, 0, 1, 2};
    Matrix analytic_block(n + 1, n + 1);
    for (std::size_t r = 0; r <= n; ++r)
      for (std::size_t c = 0; c <= n; ++c) analytic_block(r, c) = analytic(idx[r], idx[c]);
    cases.push_back(bounded_case(suite, "logistic-hessian-vs-analytic", 4,
                                 rel_frobenius_gap(parts.hessian, analytic_block), 1e-6));

    double worst_s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      double a = p[n];
      for (std::size_t k = 0; k < n; ++k) a += p[k] * data.inputs(k, j);
      const double s = 1.0 / (1.0 + std::exp(-a));
      const double exact = s * (1.0 - s) / static_cast<double>(cols);
      worst_s = std::max(worst_s, std::abs(parts.s[j] - exact) / exact);
    }
    cases.push_back(bounded_case(suite, "logistic-fd-curvature-vs-analytic", 4, worst_s, 1e-6));
  }
  return cases;
}

// ---- theorem4-centering: centering and standardization structure ----

std::vector<CaseResult> theorem4_cases() {
  std::vector<CaseResult> cases;
  const std::string suite = "theorem4-centering";
  SplitMix64 rng(550401ULL);

  double worst_slack = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = rng.uniform_index(2, 6);
    const std::size_t cols = rng.uniform_index(10, 50);
    Matrix x(n, cols);
    for (std::size_t i = 0; i < n; ++i) {
      const double shift = rng.uniform(-10.0, 10.0);
      const double scale = rng.log_uniform(0.3, 3.0);
      for (std::size_t j = 0; j < cols; ++j) x(i, j) = shift + scale * rng.normal();
    }
    const CenteringCheck cc = centering_inequality_check(x);
    worst_slack = std::max(worst_slack, cc.kappa_centered - cc.kappa_raw);
  }
  cases.push_back(bounded_case(suite, "centering-never-hurts", 5, std::max(worst_slack, 0.0),
                               1e-10, "100 random extended data matrices"));

  // Columns paired (v, -v) have exactly zero mean, so centering is a no-op.
  {
    const std::size_t n = 4, half = 12;
    Matrix x(n, 2 * half);
    for (std::size_t j = 0; j < half; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        const double v = rng.normal();
        x(i, j) = v;
        x(i, half + j) = -v;
      }
    const CenteringCheck cc = centering_inequality_check(x);
    cases.push_back(bounded_case(suite, "pre-centered-data-unchanged", 5,
                                 std::abs(cc.kappa_centered - cc.kappa_raw), 0.0));
  }

  double worst_norm_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = rng.uniform_index(2, 6);
    const std::size_t cols = rng.uniform_index(10, 60);
    Matrix x(n, cols);
    for (std::size_t i = 0; i < n; ++i) {
      const double shift = rng.uniform(-5.0, 5.0);
      const double scale = rng.log_uniform(0.1, 100.0);
      for (std::size_t j = 0; j < cols; ++j) x(i, j) = shift + scale * rng.normal();
    }
    const Matrix xe = extend(standardize(x).data);
    const double target = std::sqrt(static_cast<double>(cols));
    for (std::size_t i = 0; i < xe.rows(); ++i)
      worst_norm_gap = std::max(worst_norm_gap, std::abs(norm2(xe.row(i)) - target));
  }
  cases.push_back(bounded_case(suite, "standardized-rows-have-norm-sqrt-n", 6, worst_norm_gap,
                               1e-10, "100 random matrices"));
  return cases;
}

// ---- reg-equivalence: preconditioned regularization vs explicit z-space descent ----

std::vector<CaseResult> reg_equivalence_cases() {
  std::vector<CaseResult> cases;
  const std::string suite = "reg-equivalence";
  SplitMix64 rng(660701ULL);

  // Weight decay == L2 in the transformed coordinates, 100-step trajectories.
  {
    const std::size_t n = 4;
    const Matrix a = random_spd(n, 50.0, rng);
    const QuadraticModel model(a);
    Vector diag(n);
    for (double& d : diag) d = rng.log_uniform(0.25, 4.0);
    const FixedPreconditioner m(Matrix::diag(diag));
    const Matrix p_factor = cholesky_factor(m.matrix());
    const double alpha = 0.004, lambda = 0.1;

    ParamVector p(n);
    for (double& x : p) x = rng.normal();
    Vector z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = p[i] / p_factor(i, i);

    double worst = 0.0;
    ParamVector p_impl = p;
    for (int t = 0; t < 100; ++t) {
      p_impl = step_l2_in_z(p_impl, model.gradient(p_impl, kNoData), alpha, lambda, m);
      // Oracle: descend L(Pz) + lambda ||z||^2 in z, then map back by P.
      const Vector g_p = model.gradient(p_factor * z, kNoData);
      const Vector g_z = p_factor.transposed() * g_p;
      for (std::size_t i = 0; i < n; ++i) z[i] -= alpha * (g_z[i] + 2.0 * lambda * z[i]);
      worst = std::max(worst, norm_inf(sub(p_impl, p_factor * z)));
    }
    cases.push_back(bounded_case(suite, "l2-in-z-vs-z-space-oracle-100-steps", 7, worst, 1e-12,
                                 "fixed diagonal preconditioner"));
  }

  // Gradient-norm regularization in z, exact Hessian route on a quadratic.
  // Magnitudes stay O(1) so the finite-difference HVP noise sits well below
  // the pinned tolerance.
  {
    const std::size_t n = 5;
    const Matrix a = random_spd(n, 20.0, rng);
    const QuadraticModel model(a);
    const Matrix m_raw = random_spd(n, 4.0, rng);
    const FixedPreconditioner m(m_raw);
    const Matrix p_factor = m.factor();
    const double alpha = 0.01, lambda = 0.05;
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      ParamVector p(n);
      for (double& x : p) x = 0.5 * rng.normal();
      const ParamVector p_impl = step_grad_reg_in_z(model, p, alpha, lambda, m, kNoData);
      // z-space oracle with the exact quadratic Hessian.
      const Vector g_p = model.gradient(p, kNoData);
      const Vector g_z = p_factor.transposed() * g_p;
      const Matrix h_z = symmetrized(p_factor.transposed() * a * p_factor);
      const Vector reg = h_z * g_z;
      // Forward substitution solves the triangular system P z = p.
      Vector z(n);
      for (std::size_t i = 0; i < n; ++i) {
        double s = p[i];
        for (std::size_t k = 0; k < i; ++k) s -= p_factor(i, k) * z[k];
        z[i] = s / p_factor(i, i);
      }
      for (std::size_t i = 0; i < n; ++i) z[i] -= alpha * (g_z[i] + 2.0 * lambda * reg[i]);
      worst = std::max(worst, norm_inf(sub(p_impl, p_factor * z)));
    }
    cases.push_back(bounded_case(suite, "grad-reg-in-z-vs-oracle-quadratic", 7, worst, 1e-10));
  }

  // Same check on a small network, finite-difference Hessian route.
  {
    const MlpModel mlp(MlpSpec{{2, 3, 1}, Activation::tanh, LossKind::squared_error});
    Dataset data;
    data.inputs = Matrix(2, 12);
    data.targets = Matrix(1, 12);
    for (std::size_t j = 0; j < 12; ++j) {
      data.inputs(0, j) = rng.normal();
      data.inputs(1, j) = rng.normal();
      data.targets(0, j) = rng.normal();
    }
    const std::size_t n = mlp.param_count();
    Vector diag(n);
    for (double& d : diag) d = rng.log_uniform(0.5, 2.0);
    const FixedPreconditioner m(Matrix::diag(diag));
    const Matrix p_factor = m.factor();
    const double alpha = 0.05, lambda = 0.02;
    ParamVector p(n);
    for (double& x : p) x = 0.5 * rng.normal();

    const ParamVector p_impl = step_grad_reg_in_z(mlp, p, alpha, lambda, m, data);
    const Vector g_p = mlp.gradient(p, data);
    const Vector g_z = p_factor.transposed() * g_p;
    const Matrix h = fd_hessian(mlp, p, data);
    const Vector reg = p_factor.transposed() * (h * m.apply(g_p));
    Vector z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = p[i] / p_factor(i, i);
    for (std::size_t i = 0; i < n; ++i) z[i] -= alpha * (g_z[i] + 2.0 * lambda * reg[i]);
    cases.push_back(bounded_case(suite, "grad-reg-in-z-vs-oracle-mlp", 7,
                                 norm_inf(sub(p_impl, p_factor * z)), 1e-4,
                                 "finite-difference Hessian oracle"));
  }
  return cases;
}

// ---- rmsprop-closed-form ----

std::vector<CaseResult> rmsprop_closed_form_cases() {
  std::vector<CaseResult> cases;
  const std::string suite = "rmsprop-closed-form";
  SplitMix64 rng(880101ULL);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t t = rng.uniform_index(1, 20);
    const std::size_t dim = rng.uniform_index(1, 5);
    const double rho = rng.uniform(0.05, 0.99);
    std::vector<Vector> gs(t, Vector(dim));
    for (auto& g : gs)
      for (double& x : g) x = rng.normal();

    OptimizerConfig cfg;
    cfg.alpha = 0.1;
    cfg.rho = rho;
    cfg.init = InitConvention::first_gradient_init;
    OptimizerState state = OptimizerState::zeros(dim);
    ParamVector p(dim, 0.0);
    for (const Vector& g : gs) {
      StepResult res = rmsprop_step(std::move(state), p, g, cfg);
      state = std::move(res.state);
      p = std::move(res.p);
    }
    const Vector closed = rmsprop_closed_form(gs, rho);
    for (std::size_t i = 0; i < dim; ++i)
      worst = std::max(worst, std::abs(state.r[i] - closed[i]) / (1.0 + std::abs(closed[i])));
  }
  cases.push_back(bounded_case(suite, "recursion-matches-weighted-average", 9, worst, 1e-12,
                               "100 random gradient sequences, t <= 20"));
  return cases;
}

// ---- bnp-vector-form: vector path, neutrality, conditioning, training ----

std::vector<CaseResult> bnp_cases() {
  std::vector<CaseResult> cases;
  const std::string suite = "bnp-vector-form";
  SplitMix64 rng(440201ULL);

  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t w = rng.uniform_index(1, 12);
    BatchStats stats;
    stats.mu.resize(w);
    stats.sigma.resize(w);
    stats.count = 16;
    for (std::size_t i = 0; i < w; ++i) {
      stats.mu[i] = 3.0 * rng.normal();
      stats.sigma[i] = rng.log_uniform(1e-5, 10.0);  // exercises the floor too
    }
    const double g_b = rng.normal();
    Vector g_w(w);
    for (double& x : g_w) x = rng.normal();

    const auto [vb, vw] = bnp_apply(g_b, g_w, stats);
    const Matrix p = bnp_matrices(stats).p;
    Vector g_full(w + 1);
    g_full[0] = g_b;
    for (std::size_t i = 0; i < w; ++i) g_full[i + 1] = g_w[i];
    const Vector dense = (p * p.transposed()) * g_full;
    worst = std::max(worst, std::abs(vb - dense[0]) / (1.0 + norm2(dense)));
    for (std::size_t i = 0; i < w; ++i)
      worst = std::max(worst, std::abs(vw[i] - dense[i + 1]) / (1.0 + norm2(dense)));
  }
  cases.push_back(
      bounded_case(suite, "vector-apply-matches-dense", 10, worst, 1e-12, "500 random trials"));

  // Stats (0,1) make the preconditioner the identity, bit for bit.
  {
    const MlpModel mlp(MlpSpec{{3, 4, 2}, Activation::tanh, LossKind::squared_error});
    Dataset data;
    data.inputs = Matrix(3, 8);
    data.targets = Matrix(2, 8);
    for (std::size_t j = 0; j < 8; ++j) {
      for (std::size_t i = 0; i < 3; ++i) data.inputs(i, j) = rng.normal();
      for (std::size_t i = 0; i < 2; ++i) data.targets(i, j) = rng.normal();
    }
    ParamVector p(mlp.param_count());
    for (double& x : p) x = rng.normal();
    std::vector<BNPPreconditioner> preconds;
    for (std::size_t l = 1; l <= mlp.layer_count(); ++l)
      preconds.push_back(BNPPreconditioner::neutral(mlp.layer_width(l - 1)));
    const double alpha = 0.07;
    const ParamVector via_bnp = bnp_step(mlp, p, data, alpha, preconds);
    const ParamVector via_gd = gd_step(p, mlp.gradient(p, data), alpha);
    cases.push_back(bounded_case(suite, "neutral-stats-reduce-to-gd", 10,
                                 norm_inf(sub(via_bnp, via_gd)), 0.0, "exact equality required"));
  }

  // Ill-scaled regression inputs: the transform cuts the input-layer
  // condition number by at least 10x and wins the training comparison.
  {
    SyntheticSpec spec;
    spec.kind = SyntheticSpec::Kind::linear;
    spec.n_features = 6;
    spec.n_samples = 200;
    spec.scales = {1.0, 3.98107170553497, 15.848931924611133, 63.09573444801933,
                   251.18864315095797, 1000.0};  // log-spaced over [1, 1e3]
    spec.means = {1.0, 2.5, 4.0, 5.5, 7.0, 10.0};
    spec.noise = 0.01;
    spec.seed = 99;
    const Dataset data = generate_synthetic(spec);
    const MlpModel view(MlpSpec{{6, 1}, Activation::identity, LossKind::squared_error});
    ParamVector p0(view.param_count(), 0.0);

    const ConditioningReport report = layer_conditioning_report(view, p0, data, 1, 1);
    cases.push_back(bounded_case(suite, "input-layer-kappa-cut-10x", 11,
                                 report.kappa_bnp, report.kappa_raw / 10.0,
                                 "raw " + format_g17(report.kappa_raw) + " bnp " +
                                     format_g17(report.kappa_bnp)));

    // Best-of-sweep training comparison at 100 steps.
    Vector alphas;
    for (int i = 0; i < 13; ++i) alphas.push_back(std::pow(10.0, -6.0 + 0.5 * i));
    auto best_loss = [&](bool use_bnp) {
      double best = std::numeric_limits<double>::infinity();
      for (double alpha : alphas) {
        std::vector<BNPPreconditioner> preconds;
        for (std::size_t l = 1; l <= view.layer_count(); ++l) {
          BNPPreconditioner pc = BNPPreconditioner::neutral(view.layer_width(l - 1));
          pc.averaging = StatsAveraging::per_batch;
          preconds.push_back(std::move(pc));
        }
        try {
          const auto record = run(
              view, data,
              [&](const ParamVector& p, const ParamVector& g) {
                return use_bnp ? bnp_step(view, p, data, alpha, preconds)
                               : gd_step(p, g, alpha);
              },
              100, p0);
          best = std::min(best, record.final_loss);
        } catch (const NumericalError&) {
          // diverged at this alpha
        }
      }
      return best;
    };
    const double loss_bnp = best_loss(true);
    const double loss_gd = best_loss(false);
    cases.push_back(make_case(suite, "bnp-beats-gd-at-best-alpha", 11, loss_bnp, loss_gd,
                              loss_bnp <= loss_gd,
                              "bnp " + format_g17(loss_bnp) + " vs gd " + format_g17(loss_gd)));
  }
  return cases;
}

// ---- adamw-inequivalence ----

std::vector<CaseResult> adamw_cases() {
  std::vector<CaseResult> cases;
  const std::string suite = "adamw-inequivalence";
  SplitMix64 rng(730501ULL);
  const std::size_t n = 6;
  const QuadraticModel model(random_spd(n, 100.0, rng));
  ParamVector p0(n);
  for (double& x : p0) x = rng.normal();

  std::vector<double> grid;
  for (int i = 0; i < 13; ++i) grid.push_back(std::pow(10.0, -6.0 + 0.5 * i));
  const double alpha = 0.05, lambda_w = 0.1;

  OptimizerConfig cfg;
  cfg.rho = 0.999;
  cfg.rho_hat = 0.9;
  cfg.epsilon = 1e-8;
  const EquivalenceReport adam_report =
      verify_no_equivalence(model, kNoData, OptimizerKind::adam, alpha, lambda_w, grid, 50, p0, cfg);
  cases.push_back(make_case(suite, "adam-l2-never-matches-decay", 8,
                            adam_report.min_final_distance, 1e-3,
                            adam_report.min_final_distance > 1e-3,
                            "min over 13 lambdas of ||p_l2(50) - p_decay(50)||"));

  std::vector<double> grid_with_match = grid;
  grid_with_match.push_back(lambda_w / 2.0);  // exact match for plain gd
  // Plain gd needs a learning rate inside its stability region.
  const double alpha_gd = 0.01;
  const EquivalenceReport gd_report = verify_no_equivalence(
      model, kNoData, OptimizerKind::gd, alpha_gd, lambda_w, grid_with_match, 50, p0, cfg);
  cases.push_back(bounded_case(suite, "gd-matched-lambda-equivalence", 8, gd_report.min_distance,
                               1e-10, "lambda = lambda_w / 2"));
  return cases;
}

struct SuiteEntry {
  const char* name;
  std::vector<CaseResult> (*fn)();
};

const SuiteEntry kSuites[] = {
    {"rate-law", rate_law_cases},
    {"van-der-sluis", van_der_sluis_cases},
    {"theorem3-hessian", theorem3_cases},
    {"theorem4-centering", theorem4_cases},
    {"reg-equivalence", reg_equivalence_cases},
    {"rmsprop-closed-form", rmsprop_closed_form_cases},
    {"bnp-vector-form", bnp_cases},
    {"adamw-inequivalence", adamw_cases},
};

}  // namespace

bool SuiteResult::passed() const {
  for (const CaseResult& c : cases)
    if (!c.pass) return false;
  return true;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const SuiteEntry& s : kSuites) out.emplace_back(s.name);
    return out;
  }();
  return names;
}

SuiteResult run_suite(const std::string& name) {
  for (const SuiteEntry& s : kSuites)
    if (name == s.name) return SuiteResult{s.name, s.fn()};
  throw ValidationError("unknown verification suite '" + name + "'");
}

std::vector<SuiteResult> run_suites(const std::string& name_or_all) {
  std::vector<SuiteResult> out;
  if (name_or_all == "all") {
    for (const SuiteEntry& s : kSuites) out.push_back(SuiteResult{s.name, s.fn()});
  } else {
    out.push_back(run_suite(name_or_all));
  }
  return out;
}

}  // namespace preclab::verify
