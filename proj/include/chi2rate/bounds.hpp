#pragma once

#include <string>
#include <utility>
#include <vector>

#include "chi2rate/moments.hpp"
#include "chi2rate/smooth.hpp"

namespace chi2rate::bounds {

struct BoundInputs {
  moments::TrialModel model = moments::TrialModel::rank(2);
  long long n = 1;
  smooth::DominatingFunction P;
  smooth::TestFunction tf;
  // Replace exact expectations with the printed Holder-chain constants of the
  // rank-model derivation (supported by the zero-third-moment bound only).
  bool crude = false;
  // Family index for the relaxed even bound's hypothesis gate.
  double lambda = 1.0;
};

struct BoundReport {
  double value = 0.0;
  std::vector<std::pair<std::string, double>> terms;
  std::string regime;
  std::string inputs_echo;
};

BoundReport friedman_bound(int r, long long n, const smooth::TestFunction& tf);

struct ConstantCheckRow {
  int r = 0;
  double bracket = 0.0;  // assembled pre-simplification value per unit h_4
  double cap = 0.0;      // 10797 r^5
  double margin = 0.0;
  bool pass = false;
};

struct ConstantCheckReport {
  std::vector<ConstantCheckRow> rows;
  bool pass = false;
};

// Re-derive the closed-form constant: assemble the crude-moment bound at its
// worst case n = 1 for r = 2..r_max and compare against 10797 r^5 per unit h_4.
ConstantCheckReport verify_thm1_constant(int r_max);

// Non-negative definite covariance, class order 3: O(n^{-1/2}) bound.
BoundReport bound_general_halfrate(const BoundInputs& in);

// Positive definite covariance, class order 2: O(n^{-1/2}) bound with the
// minimum over whitened directions.
BoundReport bound_general_halfrate_pd(const BoundInputs& in);

// Even g, class order 6: the two-block O(n^{-1}) bound M.
BoundReport bound_even_M(const BoundInputs& in);

// Vanishing third moments, class order 4: the single-block O(n^{-1}) bound.
BoundReport bound_zero_third_moment(const BoundInputs& in);

// Perturbed even g (a + n^{-1/2} b), class order 6: M computed with Q plus the
// odd-part correction.
BoundReport bound_relaxed_even(const BoundInputs& in);

}  // namespace chi2rate::bounds
