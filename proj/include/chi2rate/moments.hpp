#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "chi2rate/common.hpp"

namespace chi2rate::moments {

struct CovarianceMatrix {
  int r = 0;
  std::vector<std::vector<double>> entries;

  double at(int j, int k) const { return entries[size_t(j)][size_t(k)]; }
};

// Closed-form moments of the standardized rank score at a given r.
struct MomentTable {
  int r = 0;
  double x2 = 0, x4 = 0, x6 = 0, x8 = 0;
  Rational x2_exact, x4_exact, x6_exact, x8_exact;
};

CovarianceMatrix friedman_covariance(int r);
CovarianceMatrix pearson_covariance(const std::vector<double>& probs);

double rank_moment(int r, int m);
Rational rank_moment_exact(int r, int m);
MomentTable closed_form_moments(int r);

double w4_moment(int r, long long n);
Rational w4_moment_exact(int r, long long n);

double gaussian_abs_moment(double sigma2, double p);

CovarianceMatrix matrix_sqrt(const CovarianceMatrix& cov);

// Single-trial score model. Mixed moments are exact enumerations over one
// trial; W moments combine trials through independence.
class TrialModel {
 public:
  enum class Kind { rank, pearson, independent_sign };

  static TrialModel rank(int r);
  static TrialModel pearson(std::vector<double> probs);
  static TrialModel independent_sign(int d);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  const std::vector<double>& probs() const { return probs_; }
  CovarianceMatrix covariance() const;

  // E prod_j X_{1j}^{a_j} (signed) or E prod_j |X_{1j}|^{a_j}.
  // Signed moments require integer exponents.
  double mixed_abs_moment(const std::vector<double>& powers, bool signed_moment) const;

  // E |W_t|^p at sample size n, W_t = n^{-1/2} (X_{1t} + ... + X_{nt}).
  // Even integer p uses the block-partition moment formula; other p uses the
  // exact univariate distribution of the column sum.
  double w_abs_moment(int t, double p, long long n) const;

  // Largest |E X_j X_k X_l| over signed third moments, with the first
  // offending index triple when nonzero.
  bool third_moments_vanish(std::vector<int>* offending = nullptr) const;

 private:
  TrialModel() = default;

  double single_signed_moment(int t, int k) const;

  Kind kind_ = Kind::rank;
  int dim_ = 0;
  std::vector<double> probs_;

  struct Cache {
    std::mutex mu;
    std::map<std::pair<std::vector<double>, bool>, double> mixed;
    std::map<std::tuple<int, double, long long>, double> wmom;
  };
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

}  // namespace chi2rate::moments
