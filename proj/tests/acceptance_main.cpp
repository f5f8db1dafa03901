// Runs the full acceptance suite and prints one line per criterion.
#include <cstdio>

#include "chi2rate/acceptance.hpp"

int main() {
  int failures = 0;
  for (int id : chi2rate::acceptance::suite_ids("all")) {
    auto res = chi2rate::acceptance::run_criterion(id);
    std::printf("criterion %2d %-24s %s (%.2fs) %s\n", res.id, res.name.c_str(),
                res.pass ? "PASS" : "FAIL", res.seconds, res.detail.c_str());
    std::fflush(stdout);
    if (!res.pass) ++failures;
  }
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
