#pragma once

#include <vector>

#include "chi2rate/common.hpp"

namespace chi2rate::stat {

// One complete block design: row i holds the ranks pi_i(1..r) of trial i.
struct RankMatrix {
  int n = 0;
  int r = 0;
  std::vector<std::vector<int>> ranks;

  static RankMatrix from_rows(std::vector<std::vector<int>> rows);
  void validate() const;
};

// Observed class counts U_1..U_r of n trials with cell probabilities p_j.
struct CellCounts {
  long long n = 0;
  int r = 0;
  std::vector<long long> counts;
  std::vector<double> probs;

  static CellCounts from(std::vector<long long> counts, std::vector<double> probs);
  void validate() const;
};

// Standardized per-trial scores X_ij.
struct StandardizedSample {
  int n = 0;
  int r = 0;
  std::vector<std::vector<double>> x;
};

// Normalized column sums W_j = n^{-1/2} sum_i X_ij.
struct WVector {
  std::vector<double> w;
  long long n = 0;
};

enum class LimitMode { exact, limit_zero, limit_minus_one };

// Family index lambda with automatic snapping to the limit statistics
// near the poles of 2/(lambda(lambda+1)).
struct PdIndex {
  double lambda = 1.0;
  LimitMode limit_mode = LimitMode::exact;

  static constexpr double lambda_switch = 1e-4;
  static PdIndex from(double lambda);
};

StandardizedSample standardize_ranks(const RankMatrix& rm);
WVector w_vector(const StandardizedSample& xs);
double friedman(const RankMatrix& rm);

WVector standardize_counts(const CellCounts& cc);
double pearson(const CellCounts& cc);

// Power divergence statistic T_lambda. A zero count with lambda < 0 makes the
// statistic diverge; +infinity is returned so samplers can count such events.
double power_divergence(const CellCounts& cc, const PdIndex& idx);

// Remainder R(w) = T_lambda - sum w_j^2, evaluated by its own bracket formula
// per class rather than by subtraction.
double pd_remainder(const WVector& w, const std::vector<double>& probs, const PdIndex& idx);

// Partial sum of the binomial series for R(w), terms k = 3..K.
double pd_series_remainder(const WVector& w, const std::vector<double>& probs,
                           double lambda, int K);

}  // namespace chi2rate::stat
