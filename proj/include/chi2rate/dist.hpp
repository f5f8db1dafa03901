#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "chi2rate/common.hpp"
#include "chi2rate/smooth.hpp"
#include "chi2rate/stat.hpp"

namespace chi2rate::dist {

// Exact finite-support law of a statistic. Probabilities are doubles; when
// exact is set, exact_probs holds the same values as rationals. Statistic
// values that diverge (power divergence with lambda < 0 and a zero cell) are
// pooled into diverged_mass instead of the support.
struct LatticeDistribution {
  std::string statistic;
  std::vector<double> values;
  std::vector<double> probs;
  bool exact = false;
  std::vector<Rational> exact_probs;
  double diverged_mass = 0.0;
  Rational exact_diverged_mass = 0;
};

enum class StatKind { friedman, pearson, pd };

struct StatisticSpec {
  StatKind kind = StatKind::friedman;
  stat::PdIndex idx;

  static StatisticSpec friedman();
  static StatisticSpec pearson();
  static StatisticSpec pd(double lambda);
  std::string name() const;
};

struct ModelSpec {
  enum class Kind { rank, pearson };
  Kind kind = Kind::rank;
  int r = 0;
  std::vector<double> probs;

  static ModelSpec rank(int r);
  static ModelSpec pearson(std::vector<double> probs);
  int dim() const { return kind == Kind::rank ? r : int(probs.size()); }
};

LatticeDistribution exact_friedman_distribution(int r, long long n);

// Exact covariance of W under the rank model at sample size n, from the same
// column-sum dynamic program that backs exact_friedman_distribution.
std::vector<std::vector<Rational>> rank_covariance_exact(int r, long long n);

LatticeDistribution exact_multinomial_distribution(const std::vector<double>& probs,
                                                   long long n, const StatisticSpec& spec);
LatticeDistribution exact_multinomial_distribution_rational(
    const std::vector<Rational>& probs, long long n, const StatisticSpec& spec);

// E h(statistic) under a lattice law; diverged mass contributes
// h's limit at infinity, which must then be present.
double lattice_expectation(const LatticeDistribution& ld, const smooth::TestFunction& tf);

double chisq_expectation(const smooth::TestFunction& tf, int df);

struct McResult {
  double mean = 0.0;
  double std_error = 0.0;
  double diverged_fraction = 0.0;
};

McResult mc_estimate(const ModelSpec& model, const StatisticSpec& spec,
                     const smooth::TestFunction& tf, long long n, long long reps,
                     std::uint64_t seed);

struct DistanceMode {
  bool exact = true;
  long long reps = 0;
  std::uint64_t seed = 0;

  static DistanceMode exact_mode() { return {true, 0, 0}; }
  static DistanceMode mc_mode(long long reps, std::uint64_t seed) {
    return {false, reps, seed};
  }
};

struct DistanceResult {
  double delta = 0.0;
  double std_error = 0.0;  // 0 in exact mode
  double expectation = 0.0;
  double reference = 0.0;
};

DistanceResult smooth_distance(const ModelSpec& model, const StatisticSpec& spec,
                               const smooth::TestFunction& tf, long long n,
                               const DistanceMode& mode);

struct RatePoint {
  double n = 0.0;
  double delta = 0.0;
  double std_error = 0.0;
  double fitted = 0.0;
  double residual = 0.0;
};

struct RateEstimate {
  double beta = 0.0;
  double intercept = 0.0;
  double beta_stderr = 0.0;
  std::vector<RatePoint> points;
  int dropped = 0;
};

// Weighted least squares of log delta = intercept - beta log n. Points with
// nonpositive delta are dropped; at least 3 must survive.
RateEstimate fit_rate(const std::vector<std::array<double, 3>>& pairs);

}  // namespace chi2rate::dist
