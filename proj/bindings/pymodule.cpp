#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "preclab/bnp.hpp"
#include "preclab/errors.hpp"
#include "preclab/harness.hpp"
#include "preclab/linalg.hpp"
#include "preclab/models.hpp"
#include "preclab/optim.hpp"
#include "preclab/regularize.hpp"
#include "preclab/verify.hpp"

namespace py = pybind11;
using namespace preclab;

namespace {

Matrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Matrix();
  const std::size_t c = rows.front().size();
  Matrix m(rows.size(), c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != c) throw ValidationError("Matrix: ragged rows");
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

std::vector<std::vector<double>> matrix_to_rows(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m.row(i);
  return out;
}

py::dict case_to_dict(const verify::CaseResult& c) {
  py::dict d;
  d["suite"] = c.suite;
  d["name"] = c.name;
  d["criterion"] = c.criterion;
  d["pass"] = c.pass;
  d["tolerance"] = c.tolerance;
  d["observed"] = c.observed;
  d["detail"] = c.detail;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Preconditioned gradient descent laboratory";

  py::register_exception<ValidationError>(m, "ValidationError");
  py::register_exception<NumericalError>(m, "NumericalError");

  py::class_<Matrix>(m, "Matrix")
      .def(py::init(&matrix_from_rows), py::arg("rows"))
      .def_static("identity", &Matrix::identity)
      .def_static("diag", [](const Vector& d) { return Matrix::diag(d); })
      .def_property_readonly("rows", &Matrix::rows)
      .def_property_readonly("cols", &Matrix::cols)
      .def("at", [](const Matrix& m_, std::size_t i, std::size_t j) { return m_(i, j); })
      .def("tolist", &matrix_to_rows)
      .def("__repr__", [](const Matrix& m_) {
        return "Matrix(" + std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()) + ")";
      });

  // linalg
  m.def("sym_eigvals", [](const Matrix& a, bool with_vectors) {
    const SymEig eig = sym_eigvals(a, with_vectors);
    return py::make_tuple(eig.eigenvalues,
                          eig.eigenvectors ? py::cast(matrix_to_rows(*eig.eigenvectors))
                                           : py::object(py::none()));
  }, py::arg("a"), py::arg("with_vectors") = false);
  m.def("condition_number", &condition_number);
  m.def("stacked_condition_number", &stacked_condition_number);
  m.def("row_equilibrate", &row_equilibrate, py::arg("a"), py::arg("t") = 1.0);
  m.def("extend", &extend);
  m.def("standardize", [](const Matrix& x) {
    const Standardization s = standardize(x);
    return py::make_tuple(s.data, s.mu, s.sigma);
  });
  m.def("min_max_normalize", &min_max_normalize);
  m.def("centering_inequality_check", [](const Matrix& x) {
    const CenteringCheck c = centering_inequality_check(x);
    return py::make_tuple(c.kappa_centered, c.kappa_raw);
  });

  // datasets and models
  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](const Matrix& inputs, const Matrix& targets) {
             Dataset d{inputs, targets};
             d.validate();
             return d;
           }),
           py::arg("inputs"), py::arg("targets"))
      .def(py::init([]() { return Dataset{}; }))
      .def_readonly("inputs", &Dataset::inputs)
      .def_readonly("targets", &Dataset::targets);

  py::class_<LossModel, std::shared_ptr<LossModel>>(m, "LossModel")
      .def("param_count", &LossModel::param_count)
      .def("loss", &LossModel::loss)
      .def("gradient", &LossModel::gradient)
      .def("hessian", &LossModel::hessian)
      .def("optimum", &LossModel::optimum)
      .def("kind", &LossModel::kind);

  py::class_<QuadraticModel, LossModel, std::shared_ptr<QuadraticModel>>(m, "QuadraticModel")
      .def(py::init<Matrix, Vector>(), py::arg("a"), py::arg("center") = Vector{});

  py::class_<LinearRegressionModel, LossModel, std::shared_ptr<LinearRegressionModel>>(
      m, "LinearRegressionModel")
      .def(py::init<std::size_t, std::size_t>(), py::arg("in_dim"), py::arg("out_dim") = 1);

  py::class_<LogisticRegressionModel, LossModel, std::shared_ptr<LogisticRegressionModel>>(
      m, "LogisticRegressionModel")
      .def(py::init<std::size_t, std::size_t>(), py::arg("in_dim"), py::arg("out_dim") = 1);

  py::class_<LayerHessianParts>(m, "LayerHessianParts")
      .def_readonly("h_extended", &LayerHessianParts::h_extended)
      .def_readonly("s", &LayerHessianParts::s)
      .def_readonly("hessian", &LayerHessianParts::hessian);

  py::class_<MlpModel, LossModel, std::shared_ptr<MlpModel>>(m, "MlpModel")
      .def(py::init([](const std::vector<std::size_t>& widths, const std::string& activation,
                       const std::string& loss) {
             return std::make_shared<MlpModel>(
                 MlpSpec{widths, activation_from_name(activation), loss_from_name(loss)});
           }),
           py::arg("widths"), py::arg("activation") = "tanh",
           py::arg("loss") = "squared_error")
      .def("layer_count", &MlpModel::layer_count)
      .def("layer_hessian", &MlpModel::layer_hessian, py::arg("p"), py::arg("data"),
           py::arg("layer"), py::arg("unit"))
      .def("hidden_states", &MlpModel::hidden_states)
      .def("unit_param_indices", &MlpModel::unit_param_indices);

  m.def("fd_gradient", &fd_gradient, py::arg("model"), py::arg("p"), py::arg("data"),
        py::arg("h") = 1e-5);
  m.def("fd_hessian", &fd_hessian, py::arg("model"), py::arg("p"), py::arg("data"),
        py::arg("h") = 1e-4);
  m.def("grad_hessian_row_proxy", [](const LossModel& model, const ParamVector& p_star,
                                     const Dataset& data, std::size_t num_samples, double radius,
                                     std::uint64_t seed) {
    const GradHessianProxy proxy =
        grad_hessian_row_proxy(model, p_star, data, num_samples, radius, seed);
    return py::make_tuple(proxy.avg_abs_grad, proxy.hessian_row_norms);
  });

  // optimizers
  py::class_<OptimizerConfig>(m, "OptimizerConfig")
      .def(py::init([](double alpha, double rho, double rho_hat, double epsilon,
                       const std::string& init) {
             OptimizerConfig cfg;
             cfg.alpha = alpha;
             cfg.rho = rho;
             cfg.rho_hat = rho_hat;
             cfg.epsilon = epsilon;
             cfg.init = init == "zero_init_bias_corrected"
                            ? InitConvention::zero_init_bias_corrected
                            : InitConvention::first_gradient_init;
             cfg.validate();
             return cfg;
           }),
           py::arg("alpha") = 1e-3, py::arg("rho") = 0.9, py::arg("rho_hat") = 0.9,
           py::arg("epsilon") = 1e-8, py::arg("init") = "first_gradient_init")
      .def_readwrite("alpha", &OptimizerConfig::alpha)
      .def_readwrite("rho", &OptimizerConfig::rho)
      .def_readwrite("rho_hat", &OptimizerConfig::rho_hat)
      .def_readwrite("epsilon", &OptimizerConfig::epsilon);

  py::class_<OptimizerState>(m, "OptimizerState")
      .def_static("zeros", &OptimizerState::zeros)
      .def_readonly("t", &OptimizerState::t)
      .def_readonly("r", &OptimizerState::r)
      .def_readonly("m", &OptimizerState::m);

  py::class_<FixedPreconditioner>(m, "FixedPreconditioner")
      .def(py::init<Matrix>())
      .def("apply", &FixedPreconditioner::apply)
      .def_property_readonly("matrix", &FixedPreconditioner::matrix);

  m.def("gd_step", &gd_step);
  m.def("precond_gd_step", &precond_gd_step);
  m.def("precond_kappa", &precond_kappa);
  m.def("optimal_lr", &optimal_lr);
  m.def("theoretical_rate", &theoretical_rate);
  m.def("adagrad_step", [](const OptimizerState& s, const ParamVector& p, const ParamVector& g,
                           const OptimizerConfig& cfg) {
    StepResult r = adagrad_step(s, p, g, cfg);
    return py::make_tuple(r.state, r.p);
  });
  m.def("rmsprop_step", [](const OptimizerState& s, const ParamVector& p, const ParamVector& g,
                           const OptimizerConfig& cfg) {
    StepResult r = rmsprop_step(s, p, g, cfg);
    return py::make_tuple(r.state, r.p);
  });
  m.def("adam_step", [](const OptimizerState& s, const ParamVector& p, const ParamVector& g,
                        const OptimizerConfig& cfg) {
    StepResult r = adam_step(s, p, g, cfg);
    return py::make_tuple(r.state, r.p);
  });
  m.def("adamw_step", [](const OptimizerState& s, const ParamVector& p, const ParamVector& g,
                         double alpha, double lambda_w, const OptimizerConfig& cfg) {
    StepResult r = adamw_step(s, p, g, alpha, lambda_w, cfg);
    return py::make_tuple(r.state, r.p);
  });
  m.def("rmsprop_closed_form", &rmsprop_closed_form);

  py::class_<RunRecord>(m, "RunRecord")
      .def_property_readonly("rows",
                             [](const RunRecord& r) {
                               py::list rows;
                               for (const auto& row : r.rows) {
                                 py::dict d;
                                 d["step"] = row.step;
                                 d["loss"] = row.loss;
                                 d["grad_norm"] = row.grad_norm;
                                 d["dist_to_opt"] = row.dist_to_opt
                                                        ? py::object(py::cast(*row.dist_to_opt))
                                                        : py::object(py::none());
                                 rows.append(d);
                               }
                               return rows;
                             })
      .def_readonly("final_loss", &RunRecord::final_loss)
      .def_readonly("final_params", &RunRecord::final_params)
      .def_readonly("wall_time_sec", &RunRecord::wall_time_sec);

  m.def(
      "run_optimizer",
      [](const LossModel& model, const Dataset& data, const std::string& kind,
         const OptimizerConfig& cfg, std::int64_t steps, ParamVector p0, double weight_decay) {
        auto step = make_optimizer_step(optimizer_kind_from_name(kind), cfg, model.param_count(),
                                        std::nullopt, weight_decay);
        return run(model, data, step, steps, std::move(p0));
      },
      py::arg("model"), py::arg("data"), py::arg("kind"), py::arg("config"), py::arg("steps"),
      py::arg("p0"), py::arg("weight_decay") = 0.0);
  m.def("empirical_rate", &empirical_rate, py::arg("record"), py::arg("tail_fraction") = 0.5);

  // regularization
  m.def("hvp", &hvp);
  m.def("step_l2_in_z", &step_l2_in_z);
  m.def("step_l2_in_p", &step_l2_in_p);
  m.def("step_grad_reg_in_p", &step_grad_reg_in_p);
  m.def("step_grad_reg_in_z", &step_grad_reg_in_z);

  // batch-normalization preconditioning
  py::class_<BatchStats>(m, "BatchStats")
      .def(py::init([](Vector mu, Vector sigma) {
             BatchStats s;
             s.count = mu.size();
             s.mu = std::move(mu);
             s.sigma = std::move(sigma);
             if (s.mu.size() != s.sigma.size())
               throw ValidationError("BatchStats: mu and sigma sizes differ");
             return s;
           }),
           py::arg("mu"), py::arg("sigma"))
      .def_readonly("mu", &BatchStats::mu)
      .def_readonly("sigma", &BatchStats::sigma)
      .def_readonly("count", &BatchStats::count);

  m.def("batch_stats", &batch_stats);
  m.def("bn_forward", &bn_forward, py::arg("h"), py::arg("stats"), py::arg("params"),
        py::arg("sigma_floor") = kDefaultSigmaFloor);
  py::class_<BNParams>(m, "BNParams")
      .def(py::init([](Vector gamma, Vector beta) {
             return BNParams{std::move(gamma), std::move(beta)};
           }),
           py::arg("gamma"), py::arg("beta"))
      .def_readonly("gamma", &BNParams::gamma)
      .def_readonly("beta", &BNParams::beta);
  m.def("bn_reparameterize", &bn_reparameterize);
  m.def("bnp_matrices", [](const BatchStats& stats, double floor) {
    const BnpMatrices mats = bnp_matrices(stats, floor);
    return py::make_tuple(mats.u, mats.d, mats.p);
  }, py::arg("stats"), py::arg("sigma_floor") = kDefaultSigmaFloor);
  m.def("bnp_apply", &bnp_apply, py::arg("g_b"), py::arg("g_w"), py::arg("stats"),
        py::arg("sigma_floor") = kDefaultSigmaFloor);
  m.def(
      "bnp_run",
      [](const MlpModel& mlp, const Dataset& data, double alpha, std::int64_t steps,
         ParamVector p0, double sigma_floor) {
        std::vector<BNPPreconditioner> preconds;
        for (std::size_t l = 1; l <= mlp.layer_count(); ++l) {
          BNPPreconditioner pc = BNPPreconditioner::neutral(mlp.layer_width(l - 1));
          pc.averaging = StatsAveraging::per_batch;
          pc.sigma_floor = sigma_floor;
          preconds.push_back(std::move(pc));
        }
        return run(
            mlp, data,
            [&](const ParamVector& p, const ParamVector&) {
              return bnp_step(mlp, p, data, alpha, preconds);
            },
            steps, std::move(p0));
      },
      py::arg("mlp"), py::arg("data"), py::arg("alpha"), py::arg("steps"), py::arg("p0"),
      py::arg("sigma_floor") = kDefaultSigmaFloor);
  m.def("layer_conditioning_report", [](const MlpModel& mlp, const ParamVector& p,
                                        const Dataset& data, std::size_t layer, std::size_t unit,
                                        double floor) {
    const ConditioningReport r = layer_conditioning_report(mlp, p, data, layer, unit, floor);
    return py::make_tuple(r.kappa_raw, r.kappa_bnp);
  }, py::arg("mlp"), py::arg("p"), py::arg("data"), py::arg("layer"), py::arg("unit"),
        py::arg("sigma_floor") = kDefaultSigmaFloor);

  // harness
  m.def("generate_synthetic", [](const std::string& spec) {
    return generate_synthetic(parse_synthetic_spec(spec));
  });
  m.def("load_csv", &load_csv);
  m.def("diagnose_dataset", [](const Dataset& data) {
    py::list rows;
    for (const auto& row : diagnose_dataset(data).rows) {
      py::dict d;
      d["transform"] = row.transform;
      d["kappa_gram"] = row.kappa_gram;
      d["rate"] = row.rate;
      rows.append(d);
    }
    return rows;
  });

  m.def("run_verify_suite", [](const std::string& name) {
    py::list cases;
    for (const auto& suite : verify::run_suites(name))
      for (const auto& c : suite.cases) cases.append(case_to_dict(c));
    return cases;
  });
  m.def("verify_suite_names", [] { return verify::suite_names(); });
}
