#include "chi2rate/stat.hpp"

#include <cmath>
#include <limits>

namespace chi2rate::stat {

namespace {

double sqrt_scale(int r) { return std::sqrt(12.0 / (double(r) * (r + 1))); }

bool is_positive_integer(double lambda) {
  double rounded = std::round(lambda);
  return rounded >= 1.0 && std::abs(lambda - rounded) < 1e-12;
}

}  // namespace

RankMatrix RankMatrix::from_rows(std::vector<std::vector<int>> rows) {
  RankMatrix rm;
  rm.n = int(rows.size());
  rm.r = rows.empty() ? 0 : int(rows.front().size());
  rm.ranks = std::move(rows);
  rm.validate();
  return rm;
}

void RankMatrix::validate() const {
  if (n <= 0) throw validation_error("rank matrix needs at least one trial");
  if (r < 2) throw validation_error("rank matrix needs at least two treatments");
  if (int(ranks.size()) != n) throw validation_error("rank matrix row count mismatch");
  std::vector<int> seen(size_t(r), 0);
  for (int i = 0; i < n; ++i) {
    if (int(ranks[size_t(i)].size()) != r)
      throw validation_error("rank row " + std::to_string(i) + " has wrong length");
    std::fill(seen.begin(), seen.end(), 0);
    for (int v : ranks[size_t(i)]) {
      if (v < 1 || v > r || seen[size_t(v - 1)]++)
        throw validation_error("rank row " + std::to_string(i) +
                               " is not a permutation of 1.." + std::to_string(r));
    }
  }
}

CellCounts CellCounts::from(std::vector<long long> counts, std::vector<double> probs) {
  CellCounts cc;
  cc.r = int(counts.size());
  cc.counts = std::move(counts);
  cc.probs = std::move(probs);
  cc.n = 0;
  for (long long u : cc.counts) cc.n += u;
  cc.validate();
  return cc;
}

void CellCounts::validate() const {
  if (r < 2) throw validation_error("cell counts need at least two classes");
  if (int(counts.size()) != r || int(probs.size()) != r)
    throw validation_error("cell counts and probabilities must both have length r");
  long long total = 0;
  double psum = 0.0;
  for (int j = 0; j < r; ++j) {
    if (counts[size_t(j)] < 0)
      throw validation_error("count " + std::to_string(j) + " is negative");
    if (!(probs[size_t(j)] > 0.0))
      throw validation_error("probability " + std::to_string(j) + " must be positive");
    total += counts[size_t(j)];
    psum += probs[size_t(j)];
  }
  if (total != n) throw validation_error("counts do not sum to n");
  if (std::abs(psum - 1.0) > 1e-12)
    throw validation_error("probabilities must sum to 1");
}

PdIndex PdIndex::from(double lambda) {
  PdIndex idx;
  idx.lambda = lambda;
  if (std::abs(lambda) < lambda_switch)
    idx.limit_mode = LimitMode::limit_zero;
  else if (std::abs(lambda + 1.0) < lambda_switch)
    idx.limit_mode = LimitMode::limit_minus_one;
  else
    idx.limit_mode = LimitMode::exact;
  return idx;
}

StandardizedSample standardize_ranks(const RankMatrix& rm) {
  rm.validate();
  const double c = sqrt_scale(rm.r);
  const double center = (rm.r + 1) / 2.0;
  StandardizedSample xs;
  xs.n = rm.n;
  xs.r = rm.r;
  xs.x.assign(size_t(rm.n), std::vector<double>(size_t(rm.r)));
  for (int i = 0; i < rm.n; ++i)
    for (int j = 0; j < rm.r; ++j)
      xs.x[size_t(i)][size_t(j)] = c * (rm.ranks[size_t(i)][size_t(j)] - center);
  return xs;
}

WVector w_vector(const StandardizedSample& xs) {
  WVector wv;
  wv.n = xs.n;
  wv.w.assign(size_t(xs.r), 0.0);
  for (const auto& row : xs.x)
    for (int j = 0; j < xs.r; ++j) wv.w[size_t(j)] += row[size_t(j)];
  const double scale = 1.0 / std::sqrt(double(xs.n));
  for (double& wj : wv.w) wj *= scale;
  return wv;
}

double friedman(const RankMatrix& rm) {
  rm.validate();
  // W_j from integer column sums, avoiding the per-entry standardization pass.
  std::vector<long long> colsum(size_t(rm.r), 0);
  for (const auto& row : rm.ranks)
    for (int j = 0; j < rm.r; ++j) colsum[size_t(j)] += row[size_t(j)];
  const double c = sqrt_scale(rm.r) / std::sqrt(double(rm.n));
  const double center = rm.n * (rm.r + 1) / 2.0;
  double f = 0.0;
  for (int j = 0; j < rm.r; ++j) {
    double wj = c * (colsum[size_t(j)] - center);
    f += wj * wj;
  }
  return f;
}

WVector standardize_counts(const CellCounts& cc) {
  cc.validate();
  WVector wv;
  wv.n = cc.n;
  wv.w.assign(size_t(cc.r), 0.0);
  for (int j = 0; j < cc.r; ++j) {
    double m = cc.n * cc.probs[size_t(j)];
    wv.w[size_t(j)] = (cc.counts[size_t(j)] - m) / std::sqrt(m);
  }
  return wv;
}

double pearson(const CellCounts& cc) {
  cc.validate();
  double chi2 = 0.0;
  for (int j = 0; j < cc.r; ++j) {
    double m = cc.n * cc.probs[size_t(j)];
    double d = cc.counts[size_t(j)] - m;
    chi2 += d * d / m;
  }
  return chi2;
}

double power_divergence(const CellCounts& cc, const PdIndex& idx) {
  cc.validate();
  const double lambda = idx.lambda;
  double sum = 0.0;
  switch (idx.limit_mode) {
    case LimitMode::exact: {
      for (int j = 0; j < cc.r; ++j) {
        double u = double(cc.counts[size_t(j)]);
        double m = cc.n * cc.probs[size_t(j)];
        if (cc.counts[size_t(j)] == 0) {
          // Convention: zero counts contribute 0 for lambda > 0 and make the
          // statistic diverge for lambda < 0.
          if (lambda < 0.0) return std::numeric_limits<double>::infinity();
          continue;
        }
        sum += u * (std::pow(u / m, lambda) - 1.0);
      }
      return 2.0 / (lambda * (lambda + 1.0)) * sum;
    }
    case LimitMode::limit_zero: {
      for (int j = 0; j < cc.r; ++j) {
        if (cc.counts[size_t(j)] == 0) continue;
        double u = double(cc.counts[size_t(j)]);
        double m = cc.n * cc.probs[size_t(j)];
        sum += u * std::log(u / m);
      }
      return 2.0 * sum;
    }
    case LimitMode::limit_minus_one: {
      for (int j = 0; j < cc.r; ++j) {
        if (cc.counts[size_t(j)] == 0)
          throw validation_error("statistic diverges: zero count in class " +
                                 std::to_string(j) + " at lambda = -1");
        double u = double(cc.counts[size_t(j)]);
        double m = cc.n * cc.probs[size_t(j)];
        sum += m * std::log(m / u);
      }
      return 2.0 * sum;
    }
  }
  return 0.0;
}

double pd_remainder(const WVector& wv, const std::vector<double>& probs, const PdIndex& idx) {
  if (wv.n <= 0) throw validation_error("w vector needs a positive trial count");
  if (wv.w.size() != probs.size())
    throw validation_error("w vector and probabilities must have equal length");
  const double lambda = idx.lambda;
  const bool integer_lambda =
      idx.limit_mode == LimitMode::exact && is_positive_integer(lambda);
  if (integer_lambda && std::round(lambda) == 1.0) return 0.0;
  double sum = 0.0, comp = 0.0;
  for (size_t j = 0; j < probs.size(); ++j) {
    double m = wv.n * probs[j];
    if (!(m > 0.0)) throw validation_error("expected count must be positive");
    double x = wv.w[j] / std::sqrt(m);
    double bracket;
    switch (idx.limit_mode) {
      case LimitMode::exact: {
        if (!integer_lambda && !(1.0 + x > 0.0))
          throw validation_error("argument of fractional power is not positive in class " +
                                 std::to_string(j));
        double p = std::pow(1.0 + x, lambda + 1.0);
        bracket = 2.0 / (lambda * (lambda + 1.0)) * (p - 1.0 - (lambda + 1.0) * x) - x * x;
        break;
      }
      case LimitMode::limit_zero: {
        if (1.0 + x < 0.0)
          throw validation_error("argument of logarithm is negative in class " +
                                 std::to_string(j));
        double lg = (1.0 + x > 0.0) ? (1.0 + x) * std::log(1.0 + x) : 0.0;
        bracket = 2.0 * lg - 2.0 * x - x * x;
        break;
      }
      case LimitMode::limit_minus_one: {
        if (!(1.0 + x > 0.0))
          throw validation_error("argument of logarithm is not positive in class " +
                                 std::to_string(j));
        bracket = 2.0 * x - 2.0 * std::log(1.0 + x) - x * x;
        break;
      }
      default:
        bracket = 0.0;
    }
    double term = m * bracket - comp;
    double next = sum + term;
    comp = (next - sum) - term;
    sum = next;
  }
  return sum;
}

namespace {

// (2/(lambda(lambda+1))) * (-lambda-1)_k with the vanishing Pochhammer factor
// cancelled analytically at the poles lambda = 0 and lambda = -1.
double series_coefficient(double lambda, int k) {
  if (std::abs(lambda) < 1e-12) {
    double prod = 1.0;
    for (int i = 0; i < k; ++i)
      if (i != 1) prod *= -lambda - 1.0 + i;
    return -2.0 / (lambda + 1.0) * prod;
  }
  if (std::abs(lambda + 1.0) < 1e-12) {
    double prod = 1.0;
    for (int i = 1; i < k; ++i) prod *= -lambda - 1.0 + i;
    return -2.0 / lambda * prod;
  }
  double poch = 1.0;
  for (int i = 0; i < k; ++i) poch *= -lambda - 1.0 + i;
  return 2.0 / (lambda * (lambda + 1.0)) * poch;
}

}  // namespace

double pd_series_remainder(const WVector& wv, const std::vector<double>& probs,
                           double lambda, int K) {
  if (wv.n <= 0) throw validation_error("w vector needs a positive trial count");
  if (wv.w.size() != probs.size())
    throw validation_error("w vector and probabilities must have equal length");
  if (K > 170) throw resource_error("series order K capped at 170");
  double sum = 0.0;
  for (size_t j = 0; j < probs.size(); ++j) {
    double m = wv.n * probs[j];
    if (!(m > 0.0)) throw validation_error("expected count must be positive");
    double x = wv.w[j] / std::sqrt(m);
    if (std::abs(x) >= 1.0)
      throw validation_error("series requires |w_j| < sqrt(n p_j); violated in class " +
                             std::to_string(j));
    double factorial = 2.0;  // k! running value, seeded at k=2
    double xpow = x * x;     // (-x)^k running value up to sign
    double inner = 0.0;
    for (int k = 3; k <= K; ++k) {
      factorial *= k;
      xpow *= -x;
      inner += series_coefficient(lambda, k) * xpow / factorial;
    }
    sum += m * inner;
  }
  return sum;
}

}  // namespace chi2rate::stat
