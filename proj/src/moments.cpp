#include "chi2rate/moments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

namespace chi2rate::moments {

namespace {

BigInt int_pow(BigInt base, int e) {
  BigInt out = 1;
  for (int i = 0; i < e; ++i) out *= base;
  return out;
}

BigInt factorial_big(int k) {
  BigInt out = 1;
  for (int i = 2; i <= k; ++i) out *= i;
  return out;
}

// All partitions of s into parts >= 2, as count-per-part-size maps.
void partitions_min2(int s, int max_part, std::vector<int>& current,
                     std::vector<std::vector<int>>& out) {
  if (s == 0) {
    out.push_back(current);
    return;
  }
  for (int part = std::min(s, max_part); part >= 2; --part) {
    if (s - part == 1) continue;  // a leftover of 1 can never be placed
    current.push_back(part);
    partitions_min2(s - part, part, current, out);
    current.pop_back();
  }
}

double falling_factorial(long long n, int b) {
  double out = 1.0;
  for (int i = 0; i < b; ++i) {
    if (n - i <= 0) return 0.0;
    out *= double(n - i);
  }
  return out;
}

double binomial_pmf(long long n, long long u, double p) {
  double logp = boost::math::lgamma(double(n) + 1.0) - boost::math::lgamma(double(u) + 1.0) -
                boost::math::lgamma(double(n - u) + 1.0) + u * std::log(p) +
                (n - u) * std::log1p(-p);
  return std::exp(logp);
}

}  // namespace

CovarianceMatrix friedman_covariance(int r) {
  if (r < 2) throw validation_error("covariance needs r >= 2");
  CovarianceMatrix cov;
  cov.r = r;
  cov.entries.assign(size_t(r), std::vector<double>(size_t(r), -1.0 / r));
  for (int j = 0; j < r; ++j) cov.entries[size_t(j)][size_t(j)] = double(r - 1) / r;
  return cov;
}

CovarianceMatrix pearson_covariance(const std::vector<double>& probs) {
  int r = int(probs.size());
  if (r < 2) throw validation_error("covariance needs r >= 2");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p > 0.0)) throw validation_error("probabilities must be positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw validation_error("probabilities must sum to 1");
  CovarianceMatrix cov;
  cov.r = r;
  cov.entries.assign(size_t(r), std::vector<double>(size_t(r)));
  for (int j = 0; j < r; ++j)
    for (int k = 0; k < r; ++k)
      cov.entries[size_t(j)][size_t(k)] =
          j == k ? 1.0 - probs[size_t(j)] : -std::sqrt(probs[size_t(j)] * probs[size_t(k)]);
  return cov;
}

Rational rank_moment_exact(int r, int m) {
  if (r < 2) throw validation_error("rank moment needs r >= 2");
  if (m < 0) throw validation_error("rank moment needs m >= 0");
  if (m == 0) return Rational(1);
  if (m % 2 == 1) return Rational(0);  // support is symmetric about 0
  // E X^m = (12/(r(r+1)))^{m/2} (1/r) sum_j (j-(r+1)/2)^m with half-integer
  // offsets written as (2j-r-1)/2.
  BigInt sum = 0;
  for (int j = 1; j <= r; ++j) sum += int_pow(BigInt(2 * j - r - 1), m);
  Rational scale(int_pow(BigInt(12), m / 2), int_pow(BigInt(r) * (r + 1), m / 2));
  return scale * Rational(sum, int_pow(BigInt(2), m) * r);
}

double rank_moment(int r, int m) { return rank_moment_exact(r, m).convert_to<double>(); }

MomentTable closed_form_moments(int r) {
  if (r < 2) throw validation_error("moment table needs r >= 2");
  MomentTable t;
  t.r = r;
  BigInt r2 = BigInt(r) * r;
  BigInt q = BigInt(r) * (r + 1);
  t.x2_exact = Rational(r - 1, r);
  t.x4_exact = Rational(BigInt(144) * (r2 - 1) * (3 * r2 - 7), int_pow(q, 2) * 240);
  t.x6_exact = Rational(int_pow(BigInt(12), 3) * (r2 - 1) * (3 * int_pow(r2, 2) - 18 * r2 + 31),
                        int_pow(q, 3) * 1344);
  t.x8_exact = Rational(int_pow(BigInt(12), 4) * (r2 - 1) *
                            (5 * int_pow(r2, 3) - 55 * int_pow(r2, 2) + 239 * r2 - 381),
                        int_pow(q, 4) * 11520);
  t.x2 = t.x2_exact.convert_to<double>();
  t.x4 = t.x4_exact.convert_to<double>();
  t.x6 = t.x6_exact.convert_to<double>();
  t.x8 = t.x8_exact.convert_to<double>();
  return t;
}

Rational w4_moment_exact(int r, long long n) {
  if (n < 1) throw validation_error("w moment needs n >= 1");
  Rational x2 = rank_moment_exact(r, 2);
  Rational x4 = rank_moment_exact(r, 4);
  return Rational(3) * Rational(n - 1, n) * x2 * x2 + x4 / n;
}

double w4_moment(int r, long long n) { return w4_moment_exact(r, n).convert_to<double>(); }

double gaussian_abs_moment(double sigma2, double p) {
  if (sigma2 < 0.0 || p < 0.0) throw validation_error("gaussian moment needs sigma2, p >= 0");
  if (p == 0.0) return 1.0;
  if (sigma2 == 0.0) return 0.0;
  return std::pow(2.0 * sigma2, p / 2.0) * std::tgamma((p + 1.0) / 2.0) /
         std::sqrt(std::acos(-1.0));
}

CovarianceMatrix matrix_sqrt(const CovarianceMatrix& cov) {
  int r = cov.r;
  Eigen::MatrixXd m(r, r);
  for (int j = 0; j < r; ++j)
    for (int k = 0; k < r; ++k) m(j, k) = cov.entries[size_t(j)][size_t(k)];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < r; ++i) {
    if (ev(i) < -1e-10)
      throw validation_error("matrix is not non-negative definite (eigenvalue " +
                             std::to_string(ev(i)) + ")");
    ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
  }
  Eigen::MatrixXd s = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  CovarianceMatrix out;
  out.r = r;
  out.entries.assign(size_t(r), std::vector<double>(size_t(r)));
  for (int j = 0; j < r; ++j)
    for (int k = 0; k < r; ++k) out.entries[size_t(j)][size_t(k)] = s(j, k);
  return out;
}

TrialModel TrialModel::rank(int r) {
  if (r < 2) throw validation_error("rank model needs r >= 2");
  if (r > 8) throw resource_error("rank model enumeration capped at r <= 8");
  TrialModel m;
  m.kind_ = Kind::rank;
  m.dim_ = r;
  return m;
}

TrialModel TrialModel::pearson(std::vector<double> probs) {
  if (probs.size() < 2) throw validation_error("pearson model needs r >= 2");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p > 0.0)) throw validation_error("probabilities must be positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw validation_error("probabilities must sum to 1");
  TrialModel m;
  m.kind_ = Kind::pearson;
  m.dim_ = int(probs.size());
  m.probs_ = std::move(probs);
  return m;
}

TrialModel TrialModel::independent_sign(int d) {
  if (d < 1) throw validation_error("sign model needs d >= 1");
  if (d > 16) throw resource_error("sign model capped at d <= 16");
  TrialModel m;
  m.kind_ = Kind::independent_sign;
  m.dim_ = d;
  return m;
}

CovarianceMatrix TrialModel::covariance() const {
  switch (kind_) {
    case Kind::rank:
      return friedman_covariance(dim_);
    case Kind::pearson:
      return pearson_covariance(probs_);
    case Kind::independent_sign: {
      CovarianceMatrix cov;
      cov.r = dim_;
      cov.entries.assign(size_t(dim_), std::vector<double>(size_t(dim_), 0.0));
      for (int j = 0; j < dim_; ++j) cov.entries[size_t(j)][size_t(j)] = 1.0;
      return cov;
    }
  }
  throw validation_error("unknown model kind");
}

double TrialModel::mixed_abs_moment(const std::vector<double>& powers, bool signed_moment) const {
  if (int(powers.size()) > dim_)
    throw validation_error("powers multi-index longer than model dimension");
  std::vector<double> a(powers);
  a.resize(size_t(dim_), 0.0);
  for (double e : a) {
    if (e < 0.0) throw validation_error("powers must be non-negative");
    if (signed_moment && std::abs(e - std::round(e)) > 1e-12)
      throw validation_error("signed moments need integer powers");
  }
  auto key = std::make_pair(a, signed_moment);
  {
    std::lock_guard<std::mutex> lk(cache_->mu);
    auto it = cache_->mixed.find(key);
    if (it != cache_->mixed.end()) return it->second;
  }

  double result = 0.0;
  switch (kind_) {
    case Kind::rank: {
      const double c = std::sqrt(12.0 / (double(dim_) * (dim_ + 1)));
      std::vector<double> values(size_t(dim_), 0.0);
      for (int j = 1; j <= dim_; ++j) values[size_t(j - 1)] = c * (j - (dim_ + 1) / 2.0);
      std::vector<int> perm(size_t(dim_), 0);
      std::iota(perm.begin(), perm.end(), 0);
      double sum = 0.0;
      long long count = 0;
      do {
        double prod = 1.0;
        for (int j = 0; j < dim_; ++j) {
          double e = a[size_t(j)];
          if (e == 0.0) continue;
          double x = values[size_t(perm[size_t(j)])];
          prod *= signed_moment ? std::pow(x, int(std::llround(e)))
                                : std::pow(std::abs(x), e);
        }
        sum += prod;
        ++count;
      } while (std::next_permutation(perm.begin(), perm.end()));
      result = sum / double(count);
      break;
    }
    case Kind::pearson: {
      double sum = 0.0;
      for (int i = 0; i < dim_; ++i) {
        double prod = 1.0;
        for (int j = 0; j < dim_; ++j) {
          double e = a[size_t(j)];
          if (e == 0.0) continue;
          double pj = probs_[size_t(j)];
          double x = ((i == j ? 1.0 : 0.0) - pj) / std::sqrt(pj);
          prod *= signed_moment ? std::pow(x, int(std::llround(e)))
                                : std::pow(std::abs(x), e);
        }
        sum += probs_[size_t(i)] * prod;
      }
      result = sum;
      break;
    }
    case Kind::independent_sign: {
      result = 1.0;
      if (signed_moment) {
        for (double e : a)
          if (std::llround(e) % 2 != 0) result = 0.0;
      }
      break;
    }
  }
  std::lock_guard<std::mutex> lk(cache_->mu);
  cache_->mixed[key] = result;
  return result;
}

double TrialModel::single_signed_moment(int t, int k) const {
  std::vector<double> a(size_t(dim_), 0.0);
  a[size_t(t)] = double(k);
  return mixed_abs_moment(a, true);
}

double TrialModel::w_abs_moment(int t, double p, long long n) const {
  if (t < 0 || t >= dim_) throw validation_error("coordinate out of range");
  if (n < 1) throw validation_error("w moment needs n >= 1");
  if (p < 0.0) throw validation_error("moment order must be non-negative");
  if (p == 0.0) return 1.0;
  auto key = std::make_tuple(t, p, n);
  {
    std::lock_guard<std::mutex> lk(cache_->mu);
    auto it = cache_->wmom.find(key);
    if (it != cache_->wmom.end()) return it->second;
  }

  double result;
  bool even_integer = std::abs(p - std::round(p)) < 1e-12 && std::llround(p) % 2 == 0;
  if (even_integer) {
    int s = int(std::llround(p));
    if (s > 40) throw resource_error("even-moment order capped at 40");
    // E(sum_i X_it)^s by grouping the s factors into blocks carried by
    // distinct trials; blocks of size 1 vanish since E X = 0.
    std::vector<std::vector<int>> parts;
    std::vector<int> current;
    partitions_min2(s, s, current, parts);
    double total = 0.0;
    for (const auto& shape : parts) {
      BigInt denom = 1;
      std::map<int, int> mult;
      for (int k : shape) mult[k]++;
      for (auto [k, c] : mult) denom *= int_pow(factorial_big(k), c) * factorial_big(c);
      double ways = Rational(factorial_big(s), denom).convert_to<double>();
      double prod = 1.0;
      for (int k : shape) prod *= single_signed_moment(t, k);
      total += ways * falling_factorial(n, int(shape.size())) * prod;
    }
    result = total / std::pow(double(n), p / 2.0);
  } else {
    switch (kind_) {
      case Kind::rank: {
        if (n > 4096)
          throw resource_error("exact column-sum distribution capped at n <= 4096; "
                               "use an even moment order or Monte Carlo");
        // Distribution of the rank column sum, one uniform rank per trial.
        int r = dim_;
        std::vector<double> pmf{1.0};
        long long lo = 0;
        for (long long i = 0; i < n; ++i) {
          std::vector<double> next(pmf.size() + size_t(r) - 1, 0.0);
          for (size_t s = 0; s < pmf.size(); ++s)
            for (int v = 0; v < r; ++v) next[s + size_t(v)] += pmf[s] / r;
          pmf = std::move(next);
          lo += 1;
        }
        const double c = std::sqrt(12.0 / (double(r) * (r + 1)));
        const double center = n * (r + 1) / 2.0;
        const double scale = c / std::sqrt(double(n));
        double sum = 0.0;
        for (size_t s = 0; s < pmf.size(); ++s) {
          double w = scale * (double(lo + (long long)s) - center);
          sum += pmf[s] * std::pow(std::abs(w), p);
        }
        result = sum;
        break;
      }
      case Kind::pearson: {
        if (n > 2000000) throw resource_error("binomial moment capped at n <= 2e6");
        double pt = probs_[size_t(t)];
        double m = double(n) * pt;
        double sum = 0.0;
        for (long long u = 0; u <= n; ++u) {
          double w = (double(u) - m) / std::sqrt(m);
          sum += binomial_pmf(n, u, pt) * std::pow(std::abs(w), p);
        }
        result = sum;
        break;
      }
      case Kind::independent_sign: {
        if (n > 2000000) throw resource_error("binomial moment capped at n <= 2e6");
        double sum = 0.0;
        for (long long k = 0; k <= n; ++k) {
          double w = (2.0 * double(k) - double(n)) / std::sqrt(double(n));
          sum += binomial_pmf(n, k, 0.5) * std::pow(std::abs(w), p);
        }
        result = sum;
        break;
      }
      default:
        throw validation_error("unknown model kind");
    }
  }
  std::lock_guard<std::mutex> lk(cache_->mu);
  cache_->wmom[key] = result;
  return result;
}

bool TrialModel::third_moments_vanish(std::vector<int>* offending) const {
  for (int j = 0; j < dim_; ++j)
    for (int k = 0; k < dim_; ++k)
      for (int l = 0; l < dim_; ++l) {
        std::vector<double> a(size_t(dim_), 0.0);
        a[size_t(j)] += 1.0;
        a[size_t(k)] += 1.0;
        a[size_t(l)] += 1.0;
        if (std::abs(mixed_abs_moment(a, true)) > 1e-12) {
          if (offending) *offending = {j, k, l};
          return false;
        }
      }
  return true;
}

}  // namespace chi2rate::moments
