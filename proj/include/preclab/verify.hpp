#pragma once

#include <string>
#include <vector>

namespace preclab::verify {

// One checked property: observed error (or margin) against a pinned
// tolerance. `criterion` groups cases for the acceptance report.
struct CaseResult {
  std::string suite;
  std::string name;
  int criterion = 0;
  bool pass = false;
  double tolerance = 0.0;
  double observed = 0.0;
  std::string detail;
};

struct SuiteResult {
  std::string name;
  std::vector<CaseResult> cases;
  bool passed() const;
};

const std::vector<std::string>& suite_names();

// Throws ValidationError for unknown suite names.
SuiteResult run_suite(const std::string& name);

// name == "all" runs every suite in declaration order.
std::vector<SuiteResult> run_suites(const std::string& name_or_all);

}  // namespace preclab::verify
