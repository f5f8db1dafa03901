#pragma once

#include <string>
#include <vector>

namespace chi2rate::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  double seconds = 0.0;
  std::string detail;
};

// Run one numbered criterion (1..10). Exceptions become failures.
CriterionResult run_criterion(int id);

// Criterion ids for a named sub-suite: moments, covariance, bounds, stein,
// dist, or all.
std::vector<int> suite_ids(const std::string& suite);

std::vector<CriterionResult> run_suite(const std::vector<int>& ids);

}  // namespace chi2rate::acceptance
