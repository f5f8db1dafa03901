#include "chi2rate/dist.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <thread>
#include <unordered_map>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "chi2rate/quadrature.hpp"

namespace chi2rate::dist {

namespace {

BigInt factorial_big(int k) {
  BigInt out = 1;
  for (int i = 2; i <= k; ++i) out *= i;
  return out;
}

BigInt big_pow(BigInt base, long long e) {
  BigInt out = 1;
  for (long long i = 0; i < e; ++i) out *= base;
  return out;
}

uint64_t splitmix64(uint64_t state) {
  uint64_t z = state + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform01(std::mt19937_64& eng) {
  return double(eng() >> 11) * 0x1.0p-53;
}

struct RankDp {
  int r;
  long long n;
  // final column-sum states (first r-1 sums packed 16 bits each) with exact counts
  std::unordered_map<uint64_t, BigInt> states;
};

uint64_t pack_state(const std::vector<int>& s) {
  uint64_t key = 0;
  for (int v : s) key = (key << 16) | uint64_t(v);
  return key;
}

RankDp run_rank_dp(int r, long long n) {
  if (r < 2 || r > 5)
    throw resource_error("exact rank distribution supports 2 <= r <= 5");
  if (n < 1 || n > 512)
    throw resource_error("exact rank distribution capped at n <= 512; use Monte Carlo");
  if ((r == 4 && n > 128) || (r == 5 && n > 32))
    throw resource_error("exact rank distribution state space too large at this (r, n); "
                         "use Monte Carlo");
  std::vector<std::vector<int>> perms;
  std::vector<int> perm(size_t(r), 0);
  std::iota(perm.begin(), perm.end(), 1);
  do {
    perms.emplace_back(perm.begin(), perm.begin() + (r - 1));
  } while (std::next_permutation(perm.begin(), perm.end()));

  std::unordered_map<uint64_t, BigInt> current;
  current[0] = 1;
  std::vector<int> unpacked(size_t(r - 1), 0);
  for (long long step = 0; step < n; ++step) {
    std::unordered_map<uint64_t, BigInt> next;
    next.reserve(current.size() * 2);
    for (const auto& [key, count] : current) {
      uint64_t k = key;
      for (int j = r - 2; j >= 0; --j) {
        unpacked[size_t(j)] = int(k & 0xFFFF);
        k >>= 16;
      }
      for (const auto& p : perms) {
        uint64_t nk = 0;
        for (int j = 0; j < r - 1; ++j)
          nk = (nk << 16) | uint64_t(unpacked[size_t(j)] + p[size_t(j)]);
        next[nk] += count;
      }
    }
    current = std::move(next);
  }
  return RankDp{r, n, std::move(current)};
}

void unpack_state(uint64_t key, int r, long long n, std::vector<long long>& sums) {
  sums.assign(size_t(r), 0);
  long long total = n * r * (r + 1) / 2;
  long long acc = 0;
  for (int j = r - 2; j >= 0; --j) {
    sums[size_t(j)] = (long long)(key & 0xFFFF);
    acc += sums[size_t(j)];
    key >>= 16;
  }
  sums[size_t(r - 1)] = total - acc;
}

void compositions(long long n, int r, std::vector<long long>& u, int pos,
                  const std::function<void(const std::vector<long long>&)>& visit) {
  if (pos == r - 1) {
    u[size_t(pos)] = n;
    visit(u);
    return;
  }
  for (long long v = 0; v <= n; ++v) {
    u[size_t(pos)] = v;
    compositions(n - v, r, u, pos + 1, visit);
  }
}

void sort_support(LatticeDistribution& ld) {
  std::vector<size_t> order(ld.values.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return ld.values[a] < ld.values[b]; });
  LatticeDistribution out = ld;
  out.values.clear();
  out.probs.clear();
  out.exact_probs.clear();
  for (size_t i : order) {
    if (!out.values.empty() && out.values.back() == ld.values[i]) {
      out.probs.back() += ld.probs[i];
      if (ld.exact) out.exact_probs.back() += ld.exact_probs[i];
      continue;
    }
    out.values.push_back(ld.values[i]);
    out.probs.push_back(ld.probs[i]);
    if (ld.exact) out.exact_probs.push_back(ld.exact_probs[i]);
  }
  ld = std::move(out);
}

double evaluate_statistic(const StatisticSpec& spec, const std::vector<long long>& counts,
                          const std::vector<double>& probs, long long n) {
  stat::CellCounts cc;
  cc.n = n;
  cc.r = int(counts.size());
  cc.counts = counts;
  cc.probs = probs;
  switch (spec.kind) {
    case StatKind::pearson:
      return stat::pearson(cc);
    case StatKind::pd:
      return stat::power_divergence(cc, spec.idx);
    case StatKind::friedman:
      throw validation_error("friedman statistic needs the rank model");
  }
  return 0.0;
}

}  // namespace

StatisticSpec StatisticSpec::friedman() {
  StatisticSpec s;
  s.kind = StatKind::friedman;
  return s;
}

StatisticSpec StatisticSpec::pearson() {
  StatisticSpec s;
  s.kind = StatKind::pearson;
  return s;
}

StatisticSpec StatisticSpec::pd(double lambda) {
  StatisticSpec s;
  s.kind = StatKind::pd;
  s.idx = stat::PdIndex::from(lambda);
  return s;
}

std::string StatisticSpec::name() const {
  switch (kind) {
    case StatKind::friedman:
      return "friedman";
    case StatKind::pearson:
      return "pearson";
    case StatKind::pd:
      return "pd(lambda=" + std::to_string(idx.lambda) + ")";
  }
  return "";
}

ModelSpec ModelSpec::rank(int r) {
  if (r < 2) throw validation_error("rank model needs r >= 2");
  ModelSpec m;
  m.kind = Kind::rank;
  m.r = r;
  return m;
}

ModelSpec ModelSpec::pearson(std::vector<double> probs) {
  if (probs.size() < 2) throw validation_error("pearson model needs r >= 2");
  ModelSpec m;
  m.kind = Kind::pearson;
  m.r = int(probs.size());
  m.probs = std::move(probs);
  return m;
}

LatticeDistribution exact_friedman_distribution(int r, long long n) {
  RankDp dp = run_rank_dp(r, n);
  // Group by the integer key T = sum_j (2 S_j - n(r+1))^2; F = 3T/(r(r+1)n).
  std::map<long long, BigInt> by_t;
  std::vector<long long> sums;
  for (const auto& [key, count] : dp.states) {
    unpack_state(key, r, n, sums);
    long long t = 0;
    for (int j = 0; j < r; ++j) {
      long long d = 2 * sums[size_t(j)] - n * (r + 1);
      t += d * d;
    }
    by_t[t] += count;
  }
  BigInt total = big_pow(factorial_big(r), n);
  LatticeDistribution ld;
  ld.statistic = "friedman";
  ld.exact = true;
  for (const auto& [t, count] : by_t) {
    Rational p(count, total);
    ld.values.push_back(3.0 * double(t) / (double(r) * (r + 1) * double(n)));
    ld.probs.push_back(p.convert_to<double>());
    ld.exact_probs.push_back(p);
  }
  return ld;
}

std::vector<std::vector<Rational>> rank_covariance_exact(int r, long long n) {
  RankDp dp = run_rank_dp(r, n);
  // W_j = sqrt(12/(r(r+1)n)) (S_j - n(r+1)/2); second moments of the centered
  // sums are exact integers once doubled.
  std::vector<std::vector<BigInt>> m2(size_t(r), std::vector<BigInt>(size_t(r), 0));
  std::vector<long long> sums;
  for (const auto& [key, count] : dp.states) {
    unpack_state(key, r, n, sums);
    for (int j = 0; j < r; ++j)
      for (int k = 0; k < r; ++k) {
        long long dj = 2 * sums[size_t(j)] - n * (r + 1);
        long long dk = 2 * sums[size_t(k)] - n * (r + 1);
        m2[size_t(j)][size_t(k)] += count * dj * dk;
      }
  }
  BigInt total = big_pow(factorial_big(r), n);
  Rational scale(BigInt(12), BigInt(4) * r * (r + 1) * n);
  std::vector<std::vector<Rational>> cov(size_t(r), std::vector<Rational>(size_t(r), Rational(0)));
  for (int j = 0; j < r; ++j)
    for (int k = 0; k < r; ++k)
      cov[size_t(j)][size_t(k)] = scale * Rational(m2[size_t(j)][size_t(k)], total);
  return cov;
}

LatticeDistribution exact_multinomial_distribution(const std::vector<double>& probs,
                                                   long long n, const StatisticSpec& spec) {
  int r = int(probs.size());
  if (r < 2 || r > 4) throw resource_error("multinomial enumeration supports 2 <= r <= 4");
  if (n < 1 || n > 512) throw resource_error("multinomial enumeration capped at n <= 512");
  if (spec.kind == StatKind::friedman)
    throw validation_error("friedman statistic needs the rank model");
  double psum = 0.0;
  for (double p : probs) {
    if (!(p > 0.0)) throw validation_error("probabilities must be positive");
    psum += p;
  }
  if (std::abs(psum - 1.0) > 1e-12) throw validation_error("probabilities must sum to 1");

  std::vector<double> logp(size_t(r), 0.0);
  for (int j = 0; j < r; ++j) logp[size_t(j)] = std::log(probs[size_t(j)]);
  double lgn = boost::math::lgamma(double(n) + 1.0);

  LatticeDistribution ld;
  ld.statistic = spec.name();
  std::vector<long long> u(size_t(r), 0);
  compositions(n, r, u, 0, [&](const std::vector<long long>& counts) {
    double lp = lgn;
    for (int j = 0; j < r; ++j) {
      lp -= boost::math::lgamma(double(counts[size_t(j)]) + 1.0);
      lp += double(counts[size_t(j)]) * logp[size_t(j)];
    }
    double p = std::exp(lp);
    double value = evaluate_statistic(spec, counts, probs, n);
    if (std::isinf(value)) {
      ld.diverged_mass += p;
      return;
    }
    ld.values.push_back(value);
    ld.probs.push_back(p);
  });
  sort_support(ld);
  return ld;
}

LatticeDistribution exact_multinomial_distribution_rational(
    const std::vector<Rational>& probs, long long n, const StatisticSpec& spec) {
  int r = int(probs.size());
  if (r < 2 || r > 4) throw resource_error("multinomial enumeration supports 2 <= r <= 4");
  if (n < 1 || n > 512) throw resource_error("multinomial enumeration capped at n <= 512");
  if (spec.kind == StatKind::friedman)
    throw validation_error("friedman statistic needs the rank model");
  Rational psum = 0;
  for (const Rational& p : probs) {
    if (!(p > 0)) throw validation_error("probabilities must be positive");
    psum += p;
  }
  if (psum != 1) throw validation_error("probabilities must sum to 1 exactly");

  // Common denominator L: probability of a composition is
  // multinomial(n; U) * prod a_j^{U_j} / L^n with a_j = L p_j.
  BigInt L = 1;
  for (const Rational& p : probs)
    L = boost::multiprecision::lcm(L, boost::multiprecision::denominator(p));
  std::vector<BigInt> a(size_t(r), BigInt(0));
  std::vector<double> dprobs(size_t(r), 0.0);
  for (int j = 0; j < r; ++j) {
    const Rational& p = probs[size_t(j)];
    a[size_t(j)] = boost::multiprecision::numerator(p) *
                   (L / boost::multiprecision::denominator(p));
    dprobs[size_t(j)] = p.convert_to<double>();
  }
  BigInt den = big_pow(L, n);
  BigInt nfact = factorial_big(int(n));

  LatticeDistribution ld;
  ld.statistic = spec.name();
  ld.exact = true;
  std::vector<long long> u(size_t(r), 0);
  compositions(n, r, u, 0, [&](const std::vector<long long>& counts) {
    BigInt num = nfact;
    for (int j = 0; j < r; ++j) {
      num /= factorial_big(int(counts[size_t(j)]));
      num *= big_pow(a[size_t(j)], counts[size_t(j)]);
    }
    Rational p(num, den);
    double value = evaluate_statistic(spec, counts, dprobs, n);
    if (std::isinf(value)) {
      ld.exact_diverged_mass += p;
      ld.diverged_mass += p.convert_to<double>();
      return;
    }
    ld.values.push_back(value);
    ld.probs.push_back(p.convert_to<double>());
    ld.exact_probs.push_back(p);
  });
  sort_support(ld);
  return ld;
}

double lattice_expectation(const LatticeDistribution& ld, const smooth::TestFunction& tf) {
  if (ld.diverged_mass > 0.0 && !tf.has_limit_at_inf)
    throw validation_error("distribution has diverged mass but the test function "
                           "has no limit at infinity");
  double sum = 0.0, comp = 0.0;
  for (size_t i = 0; i < ld.values.size(); ++i) {
    double term = ld.probs[i] * tf.eval(ld.values[i]) - comp;
    double next = sum + term;
    comp = (next - sum) - term;
    sum = next;
  }
  if (ld.diverged_mass > 0.0) sum += ld.diverged_mass * tf.limit_at_inf;
  return sum;
}

double chisq_expectation(const smooth::TestFunction& tf, int df) {
  if (df < 1) throw validation_error("chi-square expectation needs df >= 1");
  // Substitute y = u^2: the integrand 2 u^{df-1} e^{-u^2/2} h(u^2) / Norm is
  // smooth at 0 for every df >= 1.
  double log_norm = (df / 2.0) * std::log(2.0) + boost::math::lgamma(df / 2.0);
  auto integrand = [&](double uu) {
    double log_density = std::log(2.0) + (df - 1) * std::log(uu) - 0.5 * uu * uu - log_norm;
    return tf.eval(uu * uu) * std::exp(log_density);
  };
  auto integrand0 = [&](double uu) {
    if (uu <= 0.0) return df == 1 ? 2.0 * std::exp(-log_norm) * tf.eval(0.0) : 0.0;
    return integrand(uu);
  };
  const double tail = 1e-14;
  double cutoff = std::sqrt(quad::chisq_upper_cutoff(df, tail));
  double error = 0.0;
  double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand0, 0.0, cutoff, 15, 1e-12, &error);
  double budget = error + tf.norms[0] * tail;
  if (budget > 1e-10)
    throw numeric_error("chi-square expectation quadrature missed tolerance", budget);
  return value;
}

McResult mc_estimate(const ModelSpec& model, const StatisticSpec& spec,
                     const smooth::TestFunction& tf, long long n, long long reps,
                     std::uint64_t seed) {
  if (reps < 100) throw validation_error("mc_estimate needs reps >= 100");
  if (n < 1) throw validation_error("mc_estimate needs n >= 1");
  if (model.kind == ModelSpec::Kind::rank && spec.kind != StatKind::friedman)
    throw validation_error("rank model pairs with the friedman statistic");
  if (model.kind == ModelSpec::Kind::pearson && spec.kind == StatKind::friedman)
    throw validation_error("friedman statistic needs the rank model");
  bool can_diverge = spec.kind == StatKind::pd &&
                     spec.idx.limit_mode == stat::LimitMode::exact && spec.idx.lambda < 0.0;
  if (can_diverge && !tf.has_limit_at_inf)
    throw validation_error("statistic can diverge; test function needs a limit at infinity");

  const int r = model.dim();
  std::vector<double> cumulative;
  if (model.kind == ModelSpec::Kind::pearson) {
    cumulative.resize(size_t(r));
    double acc = 0.0;
    for (int j = 0; j < r; ++j) {
      acc += model.probs[size_t(j)];
      cumulative[size_t(j)] = acc;
    }
    cumulative[size_t(r - 1)] = 1.0;
  }

  // One replicate, on its own stream derived from the root seed: replicate i
  // uses mt19937_64 seeded with splitmix64(seed + i + 1).
  auto run_replicate = [&](long long i, double& h_value, bool& diverged) {
    std::mt19937_64 eng(splitmix64(seed + uint64_t(i) + 1));
    double value = 0.0;
    if (model.kind == ModelSpec::Kind::rank) {
      std::vector<long long> colsum(size_t(r), 0);
      std::vector<int> perm(size_t(r), 0);
      for (long long trial = 0; trial < n; ++trial) {
        std::iota(perm.begin(), perm.end(), 1);
        for (int j = r - 1; j > 0; --j) {
          int k = int(uniform01(eng) * (j + 1));
          if (k > j) k = j;
          std::swap(perm[size_t(j)], perm[size_t(k)]);
        }
        for (int j = 0; j < r; ++j) colsum[size_t(j)] += perm[size_t(j)];
      }
      const double c = std::sqrt(12.0 / (double(r) * (r + 1))) / std::sqrt(double(n));
      const double center = n * (r + 1) / 2.0;
      for (int j = 0; j < r; ++j) {
        double wj = c * (double(colsum[size_t(j)]) - center);
        value += wj * wj;
      }
    } else {
      std::vector<long long> counts(size_t(r), 0);
      for (long long trial = 0; trial < n; ++trial) {
        double x = uniform01(eng);
        int j = int(std::lower_bound(cumulative.begin(), cumulative.end(), x) -
                    cumulative.begin());
        if (j >= r) j = r - 1;
        counts[size_t(j)]++;
      }
      value = evaluate_statistic(spec, counts, model.probs, n);
    }
    if (std::isinf(value)) {
      diverged = true;
      h_value = tf.limit_at_inf;
    } else {
      diverged = false;
      h_value = tf.eval(value);
    }
  };

  // Fixed-size blocks keep the reduction order independent of thread count.
  const long long block = 4096;
  const long long nblocks = (reps + block - 1) / block;
  struct Partial {
    double sum = 0.0, sumsq = 0.0;
    long long diverged = 0;
  };
  std::vector<Partial> partials(size_t(nblocks), Partial{});
  std::atomic<long long> next_block{0};
  unsigned workers = std::max(1u, std::min(std::thread::hardware_concurrency(),
                                           unsigned(nblocks)));
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto work = [&]() {
    try {
      for (;;) {
        long long b = next_block.fetch_add(1);
        if (b >= nblocks) break;
        Partial part;
        long long lo = b * block;
        long long hi = std::min(reps, lo + block);
        for (long long i = lo; i < hi; ++i) {
          double h = 0.0;
          bool div = false;
          run_replicate(i, h, div);
          part.sum += h;
          part.sumsq += h * h;
          if (div) part.diverged++;
        }
        partials[size_t(b)] = part;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lk(error_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  double sum = 0.0, sumsq = 0.0;
  long long diverged = 0;
  for (const auto& part : partials) {
    sum += part.sum;
    sumsq += part.sumsq;
    diverged += part.diverged;
  }
  McResult res;
  res.mean = sum / double(reps);
  double var = std::max(0.0, (sumsq - sum * sum / double(reps)) / double(reps - 1));
  res.std_error = std::sqrt(var / double(reps));
  res.diverged_fraction = double(diverged) / double(reps);
  return res;
}

DistanceResult smooth_distance(const ModelSpec& model, const StatisticSpec& spec,
                               const smooth::TestFunction& tf, long long n,
                               const DistanceMode& mode) {
  DistanceResult out;
  int df = model.dim() - 1;
  out.reference = chisq_expectation(tf, df);
  if (mode.exact) {
    LatticeDistribution ld;
    if (model.kind == ModelSpec::Kind::rank) {
      if (spec.kind != StatKind::friedman)
        throw validation_error("rank model pairs with the friedman statistic");
      ld = exact_friedman_distribution(model.r, n);
    } else {
      ld = exact_multinomial_distribution(model.probs, n, spec);
    }
    out.expectation = lattice_expectation(ld, tf);
    out.std_error = 0.0;
  } else {
    McResult mc = mc_estimate(model, spec, tf, n, mode.reps, mode.seed);
    out.expectation = mc.mean;
    out.std_error = mc.std_error;
  }
  out.delta = std::abs(out.expectation - out.reference);
  return out;
}

RateEstimate fit_rate(const std::vector<std::array<double, 3>>& pairs) {
  std::vector<std::array<double, 3>> kept;
  int dropped = 0;
  for (const auto& p : pairs) {
    if (p[1] > 0.0)
      kept.push_back(p);
    else
      ++dropped;
  }
  if (kept.size() < 3)
    throw validation_error("rate fit needs at least 3 points with positive delta");
  bool weighted = true;
  for (const auto& p : kept)
    if (!(p[2] > 0.0)) weighted = false;

  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  for (const auto& p : kept) {
    double x = std::log(p[0]);
    double y = std::log(p[1]);
    double sigma = weighted ? p[2] / p[1] : 1.0;  // delta-method sd of log delta
    double w = 1.0 / (sigma * sigma);
    sw += w;
    swx += w * x;
    swy += w * y;
    swxx += w * x * x;
    swxy += w * x * y;
  }
  double det = sw * swxx - swx * swx;
  if (det <= 0.0) throw validation_error("rate fit is degenerate (identical n values)");
  double slope = (sw * swxy - swx * swy) / det;  // y = intercept + slope x
  double intercept = (swy - slope * swx) / sw;

  RateEstimate est;
  est.beta = -slope;
  est.intercept = intercept;
  est.dropped = dropped;
  double rss = 0.0;
  for (const auto& p : kept) {
    double x = std::log(p[0]);
    double y = std::log(p[1]);
    double fit = intercept + slope * x;
    RatePoint pt;
    pt.n = p[0];
    pt.delta = p[1];
    pt.std_error = p[2];
    pt.fitted = std::exp(fit);
    pt.residual = y - fit;
    est.points.push_back(pt);
    double sigma = weighted ? p[2] / p[1] : 1.0;
    double resid = (y - fit) / sigma;
    rss += resid * resid;
  }
  double var_slope;
  if (weighted) {
    var_slope = sw / det;
  } else {
    double s2 = kept.size() > 2 ? rss / double(kept.size() - 2) : 0.0;
    var_slope = s2 * sw / det;
  }
  est.beta_stderr = std::sqrt(std::max(0.0, var_slope));
  return est;
}

}  // namespace chi2rate::dist
