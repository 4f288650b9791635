#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "preclab/models.hpp"
#include "preclab/optim.hpp"
#include "preclab/regularize.hpp"
#include "preclab/rng.hpp"

namespace preclab {

// ---- synthetic data ----

struct SyntheticSpec {
  enum class Kind { linear, logistic };
  Kind kind = Kind::linear;
  std::size_t n_features = 4;
  std::size_t n_samples = 200;
  Vector scales;  // per-feature std; broadcast if a single entry
  Vector means;   // per-feature mean; broadcast if a single entry
  double noise = 0.01;
  std::uint64_t seed = 1;
};

// Grammar: "synthetic:kind=linreg,n=4,samples=200,scales=1:10:100,means=0,
// noise=0.01,seed=7". scales/means accept colon-separated lists, a single
// broadcast value, or "logspace:lo:hi".
SyntheticSpec parse_synthetic_spec(const std::string& text);

// Gaussian features with the requested per-feature means and stds; targets
// from hidden ground-truth weights plus noise (linear) or Bernoulli draws on
// standardized logits (logistic). Deterministic in the seed: the generator
// draws weights first, then per sample the features, then the noise/label.
Dataset generate_synthetic(const SyntheticSpec& spec);

// CSV ingestion: header row, comma separation, decimal-point numerals.
// Targets are selected by header name or 0-based index; the remaining
// columns become features. Errors carry row/column context.
Dataset load_csv(const std::string& path, const std::vector<std::string>& target_columns);

// ---- experiment configuration ----

// Flat key=value text with dotted sections; '#' starts a comment. Unknown
// keys are rejected.
struct ExperimentConfig {
  std::string model_kind = "quadratic";  // quadratic|linreg|logistic|mlp
  std::vector<std::size_t> mlp_widths;   // hidden..output; input width from data
  std::string activation = "tanh";
  std::string loss;                      // defaults per model kind
  std::size_t quad_dim = 8;
  double quad_kappa = 100.0;

  std::string optim_kind = "gd";
  OptimizerConfig optim;
  RegMode reg;

  std::string precond_kind = "none";  // none|fixed|adaptive|bnp
  std::string fixed_source = "inverse_hessian";  // or equilibrated_hessian
  double bnp_sigma_floor = 1e-3;
  std::string bnp_averaging = "per_batch";
  double bnp_momentum = 0.9;

  std::int64_t steps = 100;
  std::uint64_t seed = 1;
  std::string p0_init = "gaussian";  // gaussian|zeros
  std::string data_source;           // synthetic:... | csv path; empty for quadratic
  std::vector<std::string> target_columns;
  std::string out_prefix = "run";

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_text(const std::string& text);
};

// ---- commands ----

struct DiagnoseReport {
  struct Row {
    std::string transform;  // raw, centered, standardized, min_max, equilibrated
    double kappa_gram;      // kappa of the extended-data Gram matrix
    double rate;            // (kappa-1)/(kappa+1) on the Gram spectrum
  };
  std::vector<Row> rows;
};

DiagnoseReport diagnose_dataset(const Dataset& data);

struct TrainResult {
  RunRecord record;
  std::optional<double> hessian_kappa;   // at the final iterate, when exact
  std::optional<double> optimal_alpha;   // 2/(lmin+lmax) of that Hessian
};

TrainResult train_experiment(const ExperimentConfig& cfg);

void write_run_csv(const RunRecord& record, const std::string& path);
void write_run_summary_json(const TrainResult& result, const ExperimentConfig& cfg,
                            const std::string& path);

struct SweepResult {
  struct Entry {
    double alpha;
    double final_loss;
    std::optional<double> rate;
    bool diverged;
  };
  std::vector<Entry> entries;          // in the caller's alpha order
  std::size_t best_index = 0;          // lowest final loss among non-diverged
  std::optional<double> optimal_alpha; // theoretical, when the Hessian is exact
};

// Runs one experiment per alpha (concurrently; each run owns its state) and
// ranks the results by final loss. Divergent runs are kept, marked.
SweepResult sweep_experiment(const ExperimentConfig& cfg, const std::vector<double>& alphas);

// ---- shared utilities ----

// %.17g rendering so repeated runs are byte-identical.
std::string format_g17(double x);

Matrix random_orthogonal(std::size_t n, SplitMix64& rng);

// Symmetric positive definite with spectrum {1, kappa} plus log-uniform
// interior eigenvalues, conjugated by a random rotation.
Matrix random_spd(std::size_t n, double kappa, SplitMix64& rng);

}  // namespace preclab
