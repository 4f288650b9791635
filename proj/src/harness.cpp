#include "preclab/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "preclab/bnp.hpp"
#include "preclab/errors.hpp"
#include "preclab/linalg.hpp"

namespace preclab {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": cannot parse number '" + s + "'");
  }
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": cannot parse integer '" + s + "'");
  }
}

std::int64_t parse_i64(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": cannot parse integer '" + s + "'");
  }
}

// "a:b:c" list, "logspace:lo:hi", or a single broadcast value.
struct AxisSpec {
  Vector values;       // explicit list (possibly a single broadcast entry)
  bool logspace = false;
  double lo = 1.0, hi = 1.0;

  Vector resolve(std::size_t n, const std::string& what) const {
    if (logspace) {
      if (n == 1) return Vector{lo};
      Vector out(n);
      for (std::size_t i = 0; i < n; ++i)
        out[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) *
                                             static_cast<double>(i) /
                                             static_cast<double>(n - 1));
      return out;
    }
    if (values.size() == 1) return Vector(n, values[0]);
    if (values.size() != n)
      throw ValidationError(what + ": expected 1 or " + std::to_string(n) + " values, got " +
                            std::to_string(values.size()));
    return values;
  }
};

AxisSpec parse_axis(const std::string& text, const std::string& what) {
  AxisSpec spec;
  const std::vector<std::string> parts = split(text, ':');
  if (!parts.empty() && parts[0] == "logspace") {
    if (parts.size() != 3) throw ValidationError(what + ": logspace needs lo and hi");
    spec.logspace = true;
    spec.lo = parse_double(parts[1], what);
    spec.hi = parse_double(parts[2], what);
    if (!(spec.lo > 0.0 && spec.hi > 0.0)) throw ValidationError(what + ": logspace needs positive bounds");
    return spec;
  }
  for (const std::string& p : parts) spec.values.push_back(parse_double(p, what));
  return spec;
}

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

}  // namespace

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  std::string body = text;
  if (body.rfind("synthetic:", 0) == 0) body = body.substr(10);
  SyntheticSpec spec;
  AxisSpec scales, means;
  scales.values = {1.0};
  means.values = {0.0};
  for (const std::string& item : split(body, ',')) {
    const std::string entry = trim(item);
    if (entry.empty()) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos)
      throw ValidationError("synthetic spec: expected key=value, got '" + entry + "'");
    const std::string key = trim(entry.substr(0, eq));
    const std::string val = trim(entry.substr(eq + 1));
    if (key == "kind") {
      if (val == "linreg" || val == "linear") spec.kind = SyntheticSpec::Kind::linear;
      else if (val == "logistic") spec.kind = SyntheticSpec::Kind::logistic;
      else throw ValidationError("synthetic spec: unknown kind '" + val + "'");
    } else if (key == "n") {
      spec.n_features = parse_u64(val, "synthetic n");
    } else if (key == "samples") {
      spec.n_samples = parse_u64(val, "synthetic samples");
    } else if (key == "scales") {
      scales = parse_axis(val, "synthetic scales");
    } else if (key == "means") {
      means = parse_axis(val, "synthetic means");
    } else if (key == "noise") {
      spec.noise = parse_double(val, "synthetic noise");
    } else if (key == "seed") {
      spec.seed = parse_u64(val, "synthetic seed");
    } else {
      throw ValidationError("synthetic spec: unknown key '" + key + "'");
    }
  }
  if (spec.n_features == 0 || spec.n_samples == 0)
    throw ValidationError("synthetic spec: n and samples must be positive");
  spec.scales = scales.resolve(spec.n_features, "synthetic scales");
  spec.means = means.resolve(spec.n_features, "synthetic means");
  for (double s : spec.scales)
    if (!(s > 0.0)) throw ValidationError("synthetic spec: scales must be positive");
  if (!(spec.noise >= 0.0)) throw ValidationError("synthetic spec: noise must be >= 0");
  return spec;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  const std::size_t n = spec.n_features, cols = spec.n_samples;
  if (spec.scales.size() != n || spec.means.size() != n)
    throw ValidationError("generate_synthetic: scales/means not sized to n_features");
  SplitMix64 rng(spec.seed);
  // Draw order: ground-truth weights, bias, then per sample the features
  // followed by one noise/label draw.
  Vector w_true(n);
  for (double& w : w_true) w = rng.normal();
  const double b_true = rng.normal();

  Dataset data;
  data.inputs = Matrix(n, cols);
  data.targets = Matrix(1, cols);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t k = 0; k < n; ++k)
      data.inputs(k, j) = spec.means[k] + spec.scales[k] * rng.normal();
    if (spec.kind == SyntheticSpec::Kind::linear) {
      double y = b_true;
      for (std::size_t k = 0; k < n; ++k) y += w_true[k] * data.inputs(k, j);
      data.targets(0, j) = y + spec.noise * rng.normal();
    } else {
      // Logits on standardized features keep the classes balanced under
      // wildly different scales.
      double z = b_true;
      for (std::size_t k = 0; k < n; ++k)
        z += w_true[k] * (data.inputs(k, j) - spec.means[k]) / spec.scales[k];
      data.targets(0, j) = rng.next_double() < sigmoid(z) ? 1.0 : 0.0;
    }
  }
  return data;
}

Dataset load_csv(const std::string& path, const std::vector<std::string>& target_columns) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_csv: cannot open '" + path + "'");
  if (target_columns.empty())
    throw ValidationError("load_csv: at least one target column is required");

  std::string line;
  if (!std::getline(in, line)) throw ValidationError("load_csv: missing header row in '" + path + "'");
  std::vector<std::string> header;
  for (const std::string& h : split(line, ',')) header.push_back(trim(h));
  const std::size_t ncols = header.size();

  std::vector<bool> is_target(ncols, false);
  for (const std::string& t : target_columns) {
    const std::string name = trim(t);
    auto it = std::find(header.begin(), header.end(), name);
    std::size_t idx;
    if (it != header.end()) {
      idx = static_cast<std::size_t>(it - header.begin());
    } else {
      bool numeric = !name.empty() &&
                     std::all_of(name.begin(), name.end(),
                                 [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
      if (!numeric)
        throw ValidationError("load_csv: target '" + name + "' is not a header name or column index");
      idx = parse_u64(name, "load_csv target index");
      if (idx >= ncols)
        throw ValidationError("load_csv: target index " + name + " out of range (have " +
                              std::to_string(ncols) + " columns)");
    }
    if (is_target[idx]) throw ValidationError("load_csv: duplicate target column '" + name + "'");
    is_target[idx] = true;
  }
  const std::size_t n_targets = target_columns.size();
  if (n_targets == ncols) throw ValidationError("load_csv: no feature columns remain");

  std::vector<Vector> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != ncols)
      throw ValidationError("load_csv: row " + std::to_string(lineno) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(ncols));
    Vector row(ncols);
    for (std::size_t c = 0; c < ncols; ++c) {
      const std::string cell = trim(cells[c]);
      try {
        std::size_t pos = 0;
        row[c] = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ValidationError("load_csv: row " + std::to_string(lineno) + ", column '" +
                              header[c] + "': non-numeric cell '" + cell + "'");
      }
      if (!std::isfinite(row[c]))
        throw ValidationError("load_csv: row " + std::to_string(lineno) + ", column '" +
                              header[c] + "': non-finite value");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("load_csv: no data rows in '" + path + "'");

  Dataset data;
  data.inputs = Matrix(ncols - n_targets, rows.size());
  data.targets = Matrix(n_targets, rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    std::size_t fi = 0, ti = 0;
    for (std::size_t c = 0; c < ncols; ++c) {
      if (is_target[c]) data.targets(ti++, j) = rows[j][c];
      else data.inputs(fi++, j) = rows[j][c];
    }
  }
  return data;
}

// ---- configuration ----

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "model.kind") cfg.model_kind = val;
    else if (key == "model.widths") {
      cfg.mlp_widths.clear();
      for (const std::string& w : split(val, ',')) {
        const std::uint64_t width = parse_u64(trim(w), "model.widths");
        if (width == 0) throw ValidationError("model.widths: zero width");
        cfg.mlp_widths.push_back(static_cast<std::size_t>(width));
      }
    } else if (key == "model.activation") cfg.activation = val;
    else if (key == "model.loss") cfg.loss = val;
    else if (key == "model.dim") cfg.quad_dim = parse_u64(val, "model.dim");
    else if (key == "model.kappa") cfg.quad_kappa = parse_double(val, "model.kappa");
    else if (key == "optim.kind") cfg.optim_kind = val;
    else if (key == "optim.alpha") cfg.optim.alpha = parse_double(val, "optim.alpha");
    else if (key == "optim.rho") cfg.optim.rho = parse_double(val, "optim.rho");
    else if (key == "optim.rho_hat") cfg.optim.rho_hat = parse_double(val, "optim.rho_hat");
    else if (key == "optim.epsilon") cfg.optim.epsilon = parse_double(val, "optim.epsilon");
    else if (key == "optim.init") {
      if (val == "zero_init" || val == "zero_init_bias_corrected")
        cfg.optim.init = InitConvention::zero_init_bias_corrected;
      else if (val == "first_gradient" || val == "first_gradient_init")
        cfg.optim.init = InitConvention::first_gradient_init;
      else throw ValidationError("optim.init: unknown convention '" + val + "'");
    } else if (key == "reg.kind") cfg.reg.kind = reg_kind_from_name(val);
    else if (key == "reg.lambda") cfg.reg.lambda = parse_double(val, "reg.lambda");
    else if (key == "precond.kind") cfg.precond_kind = val;
    else if (key == "precond.fixed.source") cfg.fixed_source = val;
    else if (key == "precond.bnp.sigma_floor")
      cfg.bnp_sigma_floor = parse_double(val, "precond.bnp.sigma_floor");
    else if (key == "precond.bnp.averaging") cfg.bnp_averaging = val;
    else if (key == "precond.bnp.momentum")
      cfg.bnp_momentum = parse_double(val, "precond.bnp.momentum");
    else if (key == "run.steps") cfg.steps = parse_i64(val, "run.steps");
    else if (key == "run.seed") cfg.seed = parse_u64(val, "run.seed");
    else if (key == "run.p0") cfg.p0_init = val;
    else if (key == "run.out") cfg.out_prefix = val;
    else if (key == "data.source") cfg.data_source = val;
    else if (key == "data.targets") {
      cfg.target_columns.clear();
      for (const std::string& t : split(val, ',')) cfg.target_columns.push_back(trim(t));
    } else throw ValidationError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return cfg;
}

// ---- shared utilities ----

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

Matrix random_orthogonal(std::size_t n, SplitMix64& rng) {
  if (n == 0) throw ValidationError("random_orthogonal: zero dimension");
  Matrix q(n, n);
  for (std::size_t col = 0; col < n; ++col) {
    Vector v(n);
    double nrm = 0.0;
    while (true) {
      for (double& x : v) x = rng.normal();
      // Modified Gram-Schmidt against the previous columns.
      for (std::size_t k = 0; k < col; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += q(i, k) * v[i];
        for (std::size_t i = 0; i < n; ++i) v[i] -= proj * q(i, k);
      }
      nrm = norm2(v);
      if (nrm > 1e-8) break;
    }
    for (std::size_t i = 0; i < n; ++i) q(i, col) = v[i] / nrm;
  }
  return q;
}

Matrix random_spd(std::size_t n, double kappa, SplitMix64& rng) {
  if (n == 0) throw ValidationError("random_spd: zero dimension");
  if (!(kappa >= 1.0)) throw ValidationError("random_spd: kappa must be >= 1");
  Vector eigs(n);
  eigs[0] = 1.0;
  if (n > 1) eigs[n - 1] = kappa;
  for (std::size_t i = 1; i + 1 < n; ++i) eigs[i] = rng.log_uniform(1.0, kappa);
  const Matrix q = random_orthogonal(n, rng);
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += q(i, k) * eigs[k] * q(j, k);
      a(i, j) = s;
      a(j, i) = s;
    }
  return a;
}

// ---- experiment assembly ----

namespace {

struct Built {
  std::shared_ptr<LossModel> model;
  std::shared_ptr<MlpModel> mlp_view;  // set when bnp stepping is possible
  Dataset data;
  ParamVector p0;
};

Dataset dataset_from_config(const ExperimentConfig& cfg) {
  if (cfg.data_source.empty())
    throw ValidationError("config: data.source is required for model.kind '" + cfg.model_kind + "'");
  if (cfg.data_source.rfind("synthetic:", 0) == 0) {
    SyntheticSpec spec = parse_synthetic_spec(cfg.data_source);
    if (cfg.data_source.find("seed=") == std::string::npos) spec.seed = cfg.seed;
    return generate_synthetic(spec);
  }
  return load_csv(cfg.data_source, cfg.target_columns);
}

Built build_experiment(const ExperimentConfig& cfg) {
  Built built;
  if (cfg.model_kind == "quadratic") {
    SplitMix64 rng(cfg.seed);
    if (cfg.quad_dim == 0) throw ValidationError("config: model.dim must be positive");
    if (!(cfg.quad_kappa >= 1.0)) throw ValidationError("config: model.kappa must be >= 1");
    built.model = std::make_shared<QuadraticModel>(random_spd(cfg.quad_dim, cfg.quad_kappa, rng));
    built.data = Dataset{Matrix(), Matrix()};
  } else {
    built.data = dataset_from_config(cfg);
    const std::size_t n = built.data.inputs.rows();
    const std::size_t m = built.data.targets.rows();
    if (cfg.model_kind == "linreg") {
      built.model = std::make_shared<LinearRegressionModel>(n, m);
      built.mlp_view = std::make_shared<MlpModel>(
          MlpSpec{{n, m}, Activation::identity, LossKind::squared_error});
    } else if (cfg.model_kind == "logistic") {
      built.model = std::make_shared<LogisticRegressionModel>(n, m);
      built.mlp_view = std::make_shared<MlpModel>(
          MlpSpec{{n, m}, Activation::identity, LossKind::cross_entropy});
    } else if (cfg.model_kind == "mlp") {
      if (cfg.mlp_widths.empty())
        throw ValidationError("config: model.widths is required for mlp");
      if (cfg.mlp_widths.back() != m)
        throw ValidationError("config: last width must match the target dimension " +
                              std::to_string(m));
      std::vector<std::size_t> widths{n};
      widths.insert(widths.end(), cfg.mlp_widths.begin(), cfg.mlp_widths.end());
      MlpSpec spec{widths, activation_from_name(cfg.activation),
                   cfg.loss.empty() ? LossKind::squared_error : loss_from_name(cfg.loss)};
      auto mlp = std::make_shared<MlpModel>(spec);
      built.model = mlp;
      built.mlp_view = mlp;
    } else {
      throw ValidationError("config: unknown model.kind '" + cfg.model_kind + "'");
    }
  }

  const std::size_t n_params = built.model->param_count();
  built.p0.assign(n_params, 0.0);
  if (cfg.p0_init == "gaussian") {
    SplitMix64 rng(cfg.seed + 1000003ULL);  // independent stream from the data seed
    for (double& x : built.p0) x = rng.normal();
  } else if (cfg.p0_init != "zeros") {
    throw ValidationError("config: run.p0 must be gaussian or zeros");
  }
  return built;
}

std::function<ParamVector(const ParamVector&, const ParamVector&)> build_stepper(
    const ExperimentConfig& cfg, const Built& built) {
  const OptimizerKind kind = optimizer_kind_from_name(cfg.optim_kind);
  cfg.optim.validate();
  cfg.reg.validate();
  const double alpha = cfg.optim.alpha;
  const double lambda = cfg.reg.lambda;

  if (cfg.precond_kind == "bnp") {
    if (kind != OptimizerKind::gd)
      throw ValidationError("config: precond.kind bnp requires optim.kind gd");
    if (!built.mlp_view)
      throw ValidationError("config: precond.kind bnp requires a layered model");
    if (cfg.reg.kind != RegKind::none)
      throw ValidationError("config: bnp preconditioning does not compose with reg.kind");
    const StatsAveraging avg = stats_averaging_from_name(cfg.bnp_averaging);
    std::vector<BNPPreconditioner> preconds;
    for (std::size_t l = 1; l <= built.mlp_view->layer_count(); ++l) {
      BNPPreconditioner pc = BNPPreconditioner::neutral(built.mlp_view->layer_width(l - 1));
      pc.sigma_floor = cfg.bnp_sigma_floor;
      pc.averaging = avg;
      pc.momentum = cfg.bnp_momentum;
      preconds.push_back(std::move(pc));
    }
    auto mlp = built.mlp_view;
    Dataset data = built.data;
    const double momentum = cfg.bnp_momentum;
    return [mlp, data, alpha, preconds, momentum](const ParamVector& p,
                                                  const ParamVector&) mutable {
      for (std::size_t l = 1; l <= mlp->layer_count(); ++l) {
        if (preconds[l - 1].averaging == StatsAveraging::running) {
          const BatchStats batch = batch_stats(mlp->hidden_states(p, data, l - 1));
          preconds[l - 1] = update_running_stats(std::move(preconds[l - 1]), batch, momentum);
        }
      }
      return bnp_step(*mlp, p, data, alpha, preconds);
    };
  }

  std::optional<FixedPreconditioner> fixed;
  if (cfg.precond_kind == "fixed") {
    if (kind != OptimizerKind::gd)
      throw ValidationError("config: precond.kind fixed requires optim.kind gd");
    const Matrix h = built.model->hessian(built.p0, built.data);
    if (cfg.fixed_source == "inverse_hessian") {
      fixed = FixedPreconditioner(spd_inverse(h));
    } else if (cfg.fixed_source == "equilibrated_hessian") {
      fixed = FixedPreconditioner(row_equilibrate(h, 1.0));
    } else {
      throw ValidationError("config: unknown precond.fixed.source '" + cfg.fixed_source + "'");
    }
  } else if (cfg.precond_kind == "adaptive") {
    if (kind == OptimizerKind::gd)
      throw ValidationError("config: precond.kind adaptive requires an adaptive optimizer");
  } else if (cfg.precond_kind != "none") {
    throw ValidationError("config: unknown precond.kind '" + cfg.precond_kind + "'");
  }

  const double weight_decay =
      cfg.reg.kind == RegKind::decoupled_weight_decay ? lambda : 0.0;
  if (cfg.reg.kind == RegKind::decoupled_weight_decay && kind != OptimizerKind::adamw)
    throw ValidationError("config: decoupled_weight_decay requires optim.kind adamw");
  if (kind == OptimizerKind::adamw && cfg.reg.kind != RegKind::decoupled_weight_decay &&
      cfg.reg.kind != RegKind::none)
    throw ValidationError("config: adamw supports reg.kind decoupled_weight_decay only");

  auto base = make_optimizer_step(kind, cfg.optim, built.model->param_count(), fixed,
                                  weight_decay);

  switch (cfg.reg.kind) {
    case RegKind::none:
    case RegKind::decoupled_weight_decay:
      return base;
    case RegKind::l2_in_p:
      return [base = std::move(base), lambda](const ParamVector& p, const ParamVector& g) mutable {
        Vector reg_g(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) reg_g[i] = g[i] + 2.0 * lambda * p[i];
        return base(p, reg_g);
      };
    case RegKind::l2_in_z:
      return [base = std::move(base), lambda, alpha](const ParamVector& p,
                                                     const ParamVector& g) mutable {
        ParamVector next = base(p, g);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] -= 2.0 * alpha * lambda * p[i];
        return next;
      };
    case RegKind::grad_reg_in_p: {
      auto model = built.model;
      Dataset data = built.data;
      return [base = std::move(base), model, data, lambda](const ParamVector& p,
                                                           const ParamVector& g) mutable {
        const Vector hg = hvp(*model, p, g, data);
        Vector reg_g(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) reg_g[i] = g[i] + 2.0 * lambda * hg[i];
        return base(p, reg_g);
      };
    }
    case RegKind::grad_reg_in_z: {
      if (kind != OptimizerKind::gd)
        throw ValidationError(
            "config: grad_reg_in_z needs the explicit preconditioner of gd (none or fixed)");
      auto model = built.model;
      Dataset data = built.data;
      FixedPreconditioner m =
          fixed ? *fixed : FixedPreconditioner::identity(built.model->param_count());
      return [model, data, alpha, lambda, m](const ParamVector& p, const ParamVector&) {
        return step_grad_reg_in_z(*model, p, alpha, lambda, m, data);
      };
    }
  }
  throw ValidationError("config: unknown reg.kind");
}

struct HessianSummary {
  std::optional<double> kappa;
  std::optional<double> optimal_alpha;
};

HessianSummary summarize_hessian(const LossModel& model, const ParamVector& p,
                                 const Dataset& data) {
  HessianSummary out;
  const std::string kind = model.kind();
  if (kind != "quadratic" && kind != "linreg" && kind != "logistic") return out;  // no exact Hessian
  try {
    const SymEig eig = sym_eigvals(model.hessian(p, data));
    const double lmin = eig.eigenvalues.front(), lmax = eig.eigenvalues.back();
    if (lmin > 1e-14 * lmax && lmin > 0.0) {
      out.kappa = lmax / lmin;
      out.optimal_alpha = optimal_lr(lmin, lmax);
    }
  } catch (const NumericalError&) {
    // leave the diagnostics empty
  }
  return out;
}

}  // namespace

DiagnoseReport diagnose_dataset(const Dataset& data) {
  data.validate();
  if (data.inputs.empty()) throw ValidationError("diagnose: empty dataset");
  const Matrix& x = data.inputs;

  DiagnoseReport report;
  auto push = [&report](const std::string& name, double stacked_kappa) {
    const double gram_kappa = stacked_kappa * stacked_kappa;
    report.rows.push_back({name, gram_kappa, theoretical_rate(std::max(1.0, gram_kappa))});
  };

  const CenteringCheck cc = centering_inequality_check(x);
  push("raw", cc.kappa_raw);
  push("centered", cc.kappa_centered);
  push("standardized", stacked_condition_number(extend(standardize(x).data)));
  push("min_max", stacked_condition_number(extend(min_max_normalize(x))));
  const Matrix xe = extend(x);
  push("equilibrated", stacked_condition_number(row_equilibrate(xe, 1.0) * xe));
  return report;
}

TrainResult train_experiment(const ExperimentConfig& cfg) {
  const Built built = build_experiment(cfg);
  const auto step = build_stepper(cfg, built);
  TrainResult result;
  result.record = run(*built.model, built.data, step, cfg.steps, built.p0);
  if (!result.record.rows.empty() && result.record.rows.back().dist_to_opt.has_value()) {
    try {
      result.record.empirical_rate = empirical_rate(result.record);
    } catch (const ValidationError&) {
      // non-contracting tail; leave the rate unset
    }
  }
  // Hessian diagnostics at the final iterate, when the model has an exact one.
  const HessianSummary hs =
      summarize_hessian(*built.model, result.record.final_params, built.data);
  result.hessian_kappa = hs.kappa;
  result.optimal_alpha = hs.optimal_alpha;
  return result;
}

void write_run_csv(const RunRecord& record, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("write_run_csv: cannot open '" + path + "'");
  out << "step,loss,grad_norm,dist_to_opt\n";
  for (const auto& row : record.rows) {
    out << row.step << ',' << format_g17(row.loss) << ',' << format_g17(row.grad_norm) << ',';
    if (row.dist_to_opt) out << format_g17(*row.dist_to_opt);
    out << '\n';
  }
}

void write_run_summary_json(const TrainResult& result, const ExperimentConfig& cfg,
                            const std::string& path) {
  nlohmann::json j;
  j["model"] = cfg.model_kind;
  j["optimizer"] = cfg.optim_kind;
  j["steps"] = result.record.rows.empty() ? 0 : result.record.rows.back().step;
  j["final_loss"] = result.record.final_loss;
  j["final_grad_norm"] = result.record.rows.empty() ? 0.0 : result.record.rows.back().grad_norm;
  j["empirical_rate"] =
      result.record.empirical_rate ? nlohmann::json(*result.record.empirical_rate) : nlohmann::json();
  j["hessian_kappa"] = result.hessian_kappa ? nlohmann::json(*result.hessian_kappa) : nlohmann::json();
  j["optimal_alpha"] = result.optimal_alpha ? nlohmann::json(*result.optimal_alpha) : nlohmann::json();
  j["wall_time_sec"] = result.record.wall_time_sec;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("write_run_summary_json: cannot open '" + path + "'");
  out << j.dump(2) << '\n';
}

SweepResult sweep_experiment(const ExperimentConfig& cfg, const std::vector<double>& alphas) {
  if (alphas.empty()) throw ValidationError("sweep: empty alpha list");
  SweepResult result;
  std::vector<std::future<SweepResult::Entry>> futures;
  futures.reserve(alphas.size());
  for (double alpha : alphas) {
    futures.push_back(std::async(std::launch::async, [cfg, alpha]() {
      ExperimentConfig local = cfg;
      local.optim.alpha = alpha;
      SweepResult::Entry entry{alpha, std::numeric_limits<double>::infinity(), std::nullopt, false};
      try {
        const TrainResult r = train_experiment(local);
        entry.final_loss = r.record.final_loss;
        entry.rate = r.record.empirical_rate;
      } catch (const NumericalError&) {
        entry.diverged = true;
      }
      return entry;
    }));
  }
  for (auto& f : futures) result.entries.push_back(f.get());

  result.best_index = 0;
  for (std::size_t i = 1; i < result.entries.size(); ++i) {
    const auto& best = result.entries[result.best_index];
    const auto& cur = result.entries[i];
    if (!cur.diverged && (best.diverged || cur.final_loss < best.final_loss))
      result.best_index = i;
  }

  const Built probe = build_experiment(cfg);
  const HessianSummary hs = summarize_hessian(*probe.model, probe.p0, probe.data);
  result.optimal_alpha = hs.optimal_alpha;
  return result;
}

}  // namespace preclab
