#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "preclab/errors.hpp"
#include "preclab/harness.hpp"
#include "preclab/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitVerifyFailed = 3;

// Seed precedence: --seed flag > PRECOND_LAB_SEED > config file.
void apply_seed_overrides(preclab::ExperimentConfig& cfg, const std::optional<std::uint64_t>& flag) {
  if (const char* env = std::getenv("PRECOND_LAB_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw preclab::ValidationError("PRECOND_LAB_SEED: cannot parse '" + std::string(env) + "'");
    }
  }
  if (flag) cfg.seed = *flag;
}

std::vector<double> parse_alpha_list(const std::string& text) {
  std::vector<double> alphas;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    try {
      std::size_t pos = 0;
      alphas.push_back(std::stod(cur, &pos));
      if (pos != cur.size()) throw std::invalid_argument(cur);
    } catch (const std::exception&) {
      throw preclab::ValidationError("--alphas: cannot parse '" + cur + "'");
    }
    cur.clear();
  };
  for (char c : text) {
    if (c == ',') flush();
    else if (!std::isspace(static_cast<unsigned char>(c))) cur += c;
  }
  flush();
  if (alphas.empty()) throw preclab::ValidationError("--alphas: empty list");
  return alphas;
}

int cmd_diagnose(const std::string& data_arg, const std::vector<std::string>& targets,
                 std::optional<std::uint64_t> seed) {
  preclab::Dataset data;
  if (data_arg.rfind("synthetic:", 0) == 0) {
    preclab::SyntheticSpec spec = preclab::parse_synthetic_spec(data_arg);
    if (seed && data_arg.find("seed=") == std::string::npos) spec.seed = *seed;
    data = preclab::generate_synthetic(spec);
  } else {
    data = preclab::load_csv(data_arg, targets);
  }
  const preclab::DiagnoseReport report = preclab::diagnose_dataset(data);
  std::printf("%-14s %-24s %s\n", "transform", "kappa(XeXe^T)", "gd_rate");
  for (const auto& row : report.rows)
    std::printf("%-14s %-24s %s\n", row.transform.c_str(),
                preclab::format_g17(row.kappa_gram).c_str(),
                preclab::format_g17(row.rate).c_str());
  return kExitOk;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_override) {
  preclab::ExperimentConfig cfg = preclab::ExperimentConfig::from_file(config_path);
  apply_seed_overrides(cfg, seed);
  if (!out_override.empty()) cfg.out_prefix = out_override;

  const preclab::TrainResult result = preclab::train_experiment(cfg);
  const std::string csv_path = cfg.out_prefix + ".csv";
  const std::string json_path = cfg.out_prefix + ".json";
  preclab::write_run_csv(result.record, csv_path);
  preclab::write_run_summary_json(result, cfg, json_path);

  std::printf("steps=%lld final_loss=%s", static_cast<long long>(cfg.steps),
              preclab::format_g17(result.record.final_loss).c_str());
  if (result.record.empirical_rate)
    std::printf(" empirical_rate=%s", preclab::format_g17(*result.record.empirical_rate).c_str());
  if (result.hessian_kappa)
    std::printf(" hessian_kappa=%s", preclab::format_g17(*result.hessian_kappa).c_str());
  std::printf("\nwrote %s and %s\n", csv_path.c_str(), json_path.c_str());
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& alphas_text,
              std::optional<std::uint64_t> seed) {
  preclab::ExperimentConfig cfg = preclab::ExperimentConfig::from_file(config_path);
  apply_seed_overrides(cfg, seed);
  const std::vector<double> alphas = parse_alpha_list(alphas_text);
  const preclab::SweepResult result = preclab::sweep_experiment(cfg, alphas);

  std::printf("%-22s %-24s %-22s %s\n", "alpha", "final_loss", "empirical_rate", "status");
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    const auto& e = result.entries[i];
    std::printf("%-22s %-24s %-22s %s%s\n", preclab::format_g17(e.alpha).c_str(),
                e.diverged ? "-" : preclab::format_g17(e.final_loss).c_str(),
                e.rate ? preclab::format_g17(*e.rate).c_str() : "-",
                e.diverged ? "diverged" : "ok", i == result.best_index ? "  <-- best" : "");
  }
  if (result.optimal_alpha)
    std::printf("theoretical optimum alpha = %s\n",
                preclab::format_g17(*result.optimal_alpha).c_str());
  return kExitOk;
}

int cmd_verify(const std::string& suite, bool list_only) {
  if (list_only) {
    for (const std::string& name : preclab::verify::suite_names()) std::printf("%s\n", name.c_str());
    return kExitOk;
  }
  const std::vector<preclab::verify::SuiteResult> results = preclab::verify::run_suites(suite);
  bool all_pass = true;
  for (const auto& sr : results) {
    for (const auto& c : sr.cases) {
      std::printf("[%s] %s/%s observed=%s tolerance=%s%s%s\n", c.pass ? "PASS" : "FAIL",
                  sr.name.c_str(), c.name.c_str(), preclab::format_g17(c.observed).c_str(),
                  preclab::format_g17(c.tolerance).c_str(), c.detail.empty() ? "" : "  # ",
                  c.detail.c_str());
      all_pass = all_pass && c.pass;
    }
    std::printf("suite %-22s %s\n", sr.name.c_str(), sr.passed() ? "PASS" : "FAIL");
  }
  std::printf("verification: %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"precond-lab: preconditioned gradient descent laboratory"};
  app.require_subcommand(1);

  std::string data_arg, targets_csv;
  std::optional<std::uint64_t> seed_flag;
  auto* diagnose = app.add_subcommand(
      "diagnose", "condition-number report for a dataset under the normalization transforms");
  diagnose->add_option("--data", data_arg, "CSV path or synthetic:<spec>")->required();
  diagnose->add_option("--targets", targets_csv, "target columns (names or 0-based indices)");
  diagnose->add_option("--seed", seed_flag, "seed override for synthetic data");

  std::string train_config, train_out;
  std::optional<std::uint64_t> train_seed;
  auto* train = app.add_subcommand("train", "run one training experiment from a config file");
  train->add_option("--config", train_config, "key=value config file")->required();
  train->add_option("--seed", train_seed, "seed override (flag > PRECOND_LAB_SEED > config)");
  train->add_option("--out", train_out, "output prefix for the .csv/.json logs");

  std::string sweep_config, sweep_alphas;
  std::optional<std::uint64_t> sweep_seed;
  auto* sweep = app.add_subcommand("sweep", "learning-rate sweep over a list of alphas");
  sweep->add_option("--config", sweep_config, "key=value config file")->required();
  sweep->add_option("--alphas", sweep_alphas, "comma-separated learning rates")->required();
  sweep->add_option("--seed", sweep_seed, "seed override");

  std::string suite = "all";
  bool list_suites = false;
  auto* verify = app.add_subcommand("verify", "run the verification suites");
  verify->add_option("suite", suite, "suite name or 'all'");
  verify->add_flag("--list", list_suites, "list suite names and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*diagnose) {
      std::vector<std::string> targets;
      if (!targets_csv.empty()) {
        std::string cur;
        for (char c : targets_csv) {
          if (c == ',') {
            targets.push_back(cur);
            cur.clear();
          } else {
            cur += c;
          }
        }
        targets.push_back(cur);
      }
      return cmd_diagnose(data_arg, targets, seed_flag);
    }
    if (*train) return cmd_train(train_config, train_seed, train_out);
    if (*sweep) return cmd_sweep(sweep_config, sweep_alphas, sweep_seed);
    if (*verify) return cmd_verify(suite, list_suites);
  } catch (const preclab::ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const preclab::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitOk;
}
