#include "chi2rate/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "chi2rate/bounds.hpp"
#include "chi2rate/common.hpp"
#include "chi2rate/dist.hpp"
#include "chi2rate/moments.hpp"
#include "chi2rate/smooth.hpp"
#include "chi2rate/stat.hpp"
#include "chi2rate/stein.hpp"

namespace chi2rate::acceptance {
namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (detail.tellp() > 0) detail << "; ";
      detail << "FAILED: " << what;
    }
  }
};

bool close_rel(double a, double b, double rel) {
  return std::fabs(a - b) <= rel * std::max({1e-300, std::fabs(a), std::fabs(b)});
}

smooth::TestFunction exp_half_test_function() {
  smooth::TestFunction tf;
  tf.label = "exp_half";
  tf.eval = [](double y) { return std::exp(-0.5 * y); };
  tf.deriv = [](int k, double y) { return std::pow(-0.5, k) * std::exp(-0.5 * y); };
  for (int j = 0; j < 8; ++j) tf.norms[size_t(j)] = std::pow(0.5, j);
  tf.has_limit_at_inf = true;
  tf.limit_at_inf = 0.0;
  return tf;
}

// 1. Covariance of W from the exact rank-sum law matches the closed form.
Outcome criterion_covariance() {
  Outcome out;
  for (int r : {2, 3, 4}) {
    for (long long n : {1LL, 5LL}) {
      auto cov = dist::rank_covariance_exact(r, n);
      Rational diag(r - 1, r);
      Rational off(-1, r);
      for (int j = 0; j < r; ++j) {
        for (int k = 0; k < r; ++k) {
          const Rational& want = (j == k) ? diag : off;
          if (cov[size_t(j)][size_t(k)] != want) {
            std::ostringstream os;
            os << "entry (" << j << "," << k << ") at r=" << r << " n=" << n;
            out.require(false, os.str());
          }
        }
      }
    }
  }
  if (out.pass) out.detail << "exact match of (r-1)/r and -1/r for r in {2,3,4}, n in {1,5}";
  return out;
}

// 2. Closed-form moments equal enumeration; the stated caps hold.
Outcome criterion_moments() {
  Outcome out;
  Rational cap2(1), cap4(9, 5), cap6(27, 7), cap8(9), capw(24, 5);
  for (int r = 2; r <= 12; ++r) {
    auto mt = moments::closed_form_moments(r);
    const Rational vals[4] = {mt.x2_exact, mt.x4_exact, mt.x6_exact, mt.x8_exact};
    const Rational caps[4] = {cap2, cap4, cap6, cap8};
    const int ms[4] = {2, 4, 6, 8};
    for (int i = 0; i < 4; ++i) {
      Rational enumd = moments::rank_moment_exact(r, ms[i]);
      if (vals[i] != enumd) {
        std::ostringstream os;
        os << "closed form vs enumeration at r=" << r << " m=" << ms[i];
        out.require(false, os.str());
      }
      if (!(vals[i] <= caps[i])) {
        std::ostringstream os;
        os << "moment cap at r=" << r << " m=" << ms[i];
        out.require(false, os.str());
      }
    }
    for (long long n = 1; n <= 8; ++n) {
      if (!(moments::w4_moment_exact(r, n) <= capw)) {
        std::ostringstream os;
        os << "W fourth moment cap at r=" << r << " n=" << n;
        out.require(false, os.str());
      }
    }
  }
  if (out.pass) out.detail << "enumeration equality and caps hold for r=2..12, m in {2,4,6,8}";
  return out;
}

// 3. Friedman smooth distance: exact values, fitted rate, and the bound.
Outcome criterion_friedman_rate() {
  Outcome out;
  auto tf = smooth::make_sine(0.5);
  auto model = dist::ModelSpec::rank(3);
  auto spec = dist::StatisticSpec::friedman();
  const long long grid[5] = {8, 16, 32, 64, 128};
  const double frozen[5] = {1.687005e-02, 8.111090e-03, 3.979156e-03, 1.971137e-03,
                            9.810392e-04};
  std::vector<std::array<double, 3>> pts;
  for (int i = 0; i < 5; ++i) {
    auto res = dist::smooth_distance(model, spec, tf, grid[i], dist::DistanceMode::exact_mode());
    if (!close_rel(res.delta, frozen[i], 1e-6)) {
      std::ostringstream os;
      os << "delta at n=" << grid[i] << " got " << res.delta << " want " << frozen[i];
      out.require(false, os.str());
    }
    double cap = bounds::friedman_bound(3, grid[i], tf).value;
    if (!(res.delta <= cap)) {
      std::ostringstream os;
      os << "delta exceeds closed-form bound at n=" << grid[i];
      out.require(false, os.str());
    }
    pts.push_back({double(grid[i]), res.delta, 0.0});
  }
  auto fit = dist::fit_rate(pts);
  out.require(fit.beta >= 0.8 && fit.beta <= 1.2, "fitted rate outside [0.8, 1.2]");
  out.require(std::fabs(fit.beta - 1.0249) <= 5e-3, "fitted rate drifted from 1.0249");
  if (out.pass)
    out.detail << "beta=" << fit.beta << ", all five deltas under the closed-form bound";
  return out;
}

// 4. Power divergence rates at lambda 1 and 2; exploratory indices recorded.
Outcome criterion_pd_rate() {
  Outcome out;
  auto tf = smooth::make_sine(0.5);
  std::vector<double> probs(3, 1.0 / 3.0);
  auto model = dist::ModelSpec::pearson(probs);
  const long long grid[5] = {16, 32, 64, 128, 256};
  const double frozen1[5] = {1.117e-02, 5.381e-03, 2.646e-03, 1.312e-03, 6.536e-04};
  const double frozen2[5] = {4.829e-03, 2.523e-03, 1.284e-03, 6.466e-04, 3.244e-04};
  const double frozen_beta[2] = {1.023, 0.976};
  int li = 0;
  for (double lam : {1.0, 2.0}) {
    const double* frozen = (li == 0) ? frozen1 : frozen2;
    std::vector<std::array<double, 3>> pts;
    for (int i = 0; i < 5; ++i) {
      auto res = dist::smooth_distance(model, dist::StatisticSpec::pd(lam), tf, grid[i],
                                       dist::DistanceMode::exact_mode());
      if (!close_rel(res.delta, frozen[i], 5e-4)) {
        std::ostringstream os;
        os << "lambda=" << lam << " delta at n=" << grid[i] << " got " << res.delta
           << " want about " << frozen[i];
        out.require(false, os.str());
      }
      pts.push_back({double(grid[i]), res.delta, 0.0});
    }
    auto fit = dist::fit_rate(pts);
    if (!(fit.beta >= 0.75 && fit.beta <= 1.25)) {
      std::ostringstream os;
      os << "lambda=" << lam << " rate " << fit.beta << " outside [0.75, 1.25]";
      out.require(false, os.str());
    }
    out.require(std::fabs(fit.beta - frozen_beta[li]) <= 5e-3, "rate drifted from record");
    out.detail << "lambda=" << lam << " beta=" << fit.beta << "; ";
    ++li;
  }
  // Exploratory, not gating: document the observed rates only.
  try {
    std::vector<std::array<double, 3>> pts;
    for (long long n : grid) {
      auto res = dist::smooth_distance(model, dist::StatisticSpec::pd(2.0 / 3.0), tf, n,
                                       dist::DistanceMode::exact_mode());
      pts.push_back({double(n), res.delta, 0.0});
    }
    out.detail << "exploratory lambda=2/3 beta=" << dist::fit_rate(pts).beta << "; ";
  } catch (const std::exception& e) {
    out.detail << "exploratory lambda=2/3 skipped (" << e.what() << "); ";
  }
  try {
    auto bump = smooth::make_gauss_bump(4.0, 2.0);
    std::vector<std::array<double, 3>> pts;
    for (long long n : grid) {
      auto res = dist::smooth_distance(model, dist::StatisticSpec::pd(-0.5), bump, n,
                                       dist::DistanceMode::exact_mode());
      pts.push_back({double(n), res.delta, 0.0});
    }
    out.detail << "exploratory lambda=-1/2 beta=" << dist::fit_rate(pts).beta;
  } catch (const std::exception& e) {
    out.detail << "exploratory lambda=-1/2 skipped (" << e.what() << ")";
  }
  return out;
}

// 5. The closed-form constant dominates the assembled crude bracket.
Outcome criterion_constant() {
  Outcome out;
  auto rep = bounds::verify_thm1_constant(10);
  out.require(rep.pass, "bracket exceeded 10797 r^5 somewhere in r=2..10");
  for (const auto& row : rep.rows) {
    if (!(row.margin > 0.0 && row.margin < 1.0)) {
      std::ostringstream os;
      os << "margin out of range at r=" << row.r;
      out.require(false, os.str());
    }
  }
  if (!rep.rows.empty()) {
    out.require(close_rel(rep.rows.front().bracket, 345463.6, 1e-4),
                "r=2 bracket drifted from record");
  }
  if (out.pass) {
    out.detail << "r=2..10 hold; tightest margin "
               << [&] {
                    double m = 1.0;
                    for (const auto& row : rep.rows) m = std::min(m, row.margin);
                    return m;
                  }();
  }
  return out;
}

// 6. Bracket remainder versus its binomial series.
Outcome criterion_series() {
  Outcome out;
  const std::vector<double> probs = {0.2, 0.3, 0.5};
  const long long n = 16;
  std::mt19937_64 eng(987654321ULL);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    stat::WVector wv;
    wv.n = n;
    for (double p : probs) wv.w.push_back(unif(eng) * 0.5 * std::sqrt(double(n) * p));
    for (double lam : {-0.5, 1.0 / 3.0, 2.0, 5.5}) {
      double r = stat::pd_remainder(wv, probs, stat::PdIndex::from(lam));
      double s = stat::pd_series_remainder(wv, probs, lam, 40);
      worst = std::max(worst, std::fabs(r - s));
      if (std::fabs(r - s) > 1e-8) {
        std::ostringstream os;
        os << "series mismatch " << std::fabs(r - s) << " at lambda=" << lam << " point " << i;
        out.require(false, os.str());
      }
    }
    for (int lam : {1, 2, 3}) {
      double r = stat::pd_remainder(wv, probs, stat::PdIndex::from(lam));
      double s = stat::pd_series_remainder(wv, probs, double(lam), lam + 1);
      if (std::fabs(r - s) > 1e-12 * std::max(1.0, std::fabs(r))) {
        std::ostringstream os;
        os << "series should terminate exactly at lambda=" << lam;
        out.require(false, os.str());
      }
    }
  }
  if (out.pass) out.detail << "100 points, worst series gap " << worst;
  return out;
}

struct SteinFixtures {
  stein::SteinProblem p1;
  stein::SteinProblem p2;
  std::vector<std::vector<double>> pts1;
  std::vector<std::vector<double>> pts2;
};

SteinFixtures stein_fixtures() {
  SteinFixtures fx;
  auto tf = smooth::make_sine(0.5);
  moments::CovarianceMatrix unit;
  unit.r = 1;
  unit.entries = {{1.0}};
  fx.p1 = stein::make_problem(stein::quadratic_target(1), tf, unit);
  fx.p2 = stein::make_problem(stein::quadratic_target(2), tf,
                              moments::pearson_covariance({0.5, 0.5}));
  for (double w : {0.0, 0.25, -0.25, 0.5, -0.5, 0.75, -0.75, 1.0, -1.0, 1.5})
    fx.pts1.push_back({w});
  const double u = 1.0 / std::sqrt(2.0);
  for (double a : {0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9, 1.2, -1.2, 1.5})
    fx.pts2.push_back({a * u, -a * u});
  return fx;
}

// 7. The numerical solution satisfies the characterizing equation.
Outcome criterion_stein_residual() {
  Outcome out;
  auto fx = stein_fixtures();
  double worst = 0.0;
  for (const auto& w : fx.pts1) {
    double res = stein::stein_residual(fx.p1, w);
    worst = std::max(worst, res);
    if (res > 1e-3) {
      std::ostringstream os;
      os << "residual " << res << " at scalar point " << w[0];
      out.require(false, os.str());
    }
  }
  for (const auto& w : fx.pts2) {
    double res = stein::stein_residual(fx.p2, w);
    worst = std::max(worst, res);
    if (res > 1e-3) {
      std::ostringstream os;
      os << "residual " << res << " at reduced-rank point (" << w[0] << "," << w[1] << ")";
      out.require(false, os.str());
    }
  }
  if (out.pass) out.detail << "20 points, worst residual " << worst;
  return out;
}

// 8. Solution derivatives obey the polynomial-envelope bound.
Outcome criterion_derivative_bounds() {
  Outcome out;
  auto fx = stein_fixtures();
  // Same envelope family as dominating_quadratic_g, written out for d = 1.
  smooth::DominatingFunction P1{4.0, {16.0}, {4.0}};
  auto P2 = smooth::dominating_quadratic_g(smooth::QuadMode::order3, 2);
  std::vector<std::vector<double>> pts1;
  for (double w : {0.0, 1.0, -1.0, 2.0, -2.0}) pts1.push_back({w});
  std::vector<std::vector<double>> pts2;
  const double u = 1.0 / std::sqrt(2.0);
  for (double a : {0.0, 1.0, -1.0, 2.0, -2.0}) pts2.push_back({a * u, -a * u});
  double min_margin = 1e300;
  for (int m = 1; m <= 3; ++m) {
    auto rep1 = stein::check_derivative_bounds(fx.p1, P1, m, pts1);
    auto rep2 = stein::check_derivative_bounds(fx.p2, P2, m, pts2);
    for (const auto* rep : {&rep1, &rep2}) {
      for (const auto& row : rep->rows) min_margin = std::min(min_margin, row.margin);
      if (!rep->pass) {
        std::ostringstream os;
        os << "derivative bound violated at order " << m;
        out.require(false, os.str());
      }
    }
  }
  if (out.pass) out.detail << "orders 1..3 pass on both problems, smallest margin " << min_margin;
  return out;
}

// 9. Hypothesis gates reject the out-of-scope inputs and accept the valid ones.
Outcome criterion_gates() {
  Outcome out;
  auto tf = smooth::make_sine(0.5);

  bounds::BoundInputs bad;
  bad.model = moments::TrialModel::pearson({0.25, 0.75});
  bad.n = 10;
  bad.P = smooth::dominating_quadratic_g(smooth::QuadMode::order3, 2);
  bad.tf = tf;
  bool threw = false;
  try {
    bounds::bound_zero_third_moment(bad);
  } catch (const validation_error&) {
    threw = true;
  }
  out.require(threw, "skewed Pearson model not rejected by the zero-third-moment gate");

  for (int r : {2, 3, 4}) {
    bounds::BoundInputs good;
    good.model = moments::TrialModel::rank(r);
    good.n = 10;
    good.P = smooth::dominating_quadratic_g(smooth::QuadMode::order3, r);
    good.tf = tf;
    auto rep = bounds::bound_zero_third_moment(good);
    out.require(std::isfinite(rep.value) && rep.value >= 0.0, "rank model rejected");
  }

  std::vector<double> probs(3, 1.0 / 3.0);
  threw = false;
  try {
    smooth::pd_dominating_function(4.5, probs);
  } catch (const validation_error&) {
    threw = true;
  }
  out.require(threw, "envelope construction accepted lambda=4.5");

  threw = false;
  try {
    bounds::BoundInputs in;
    in.model = moments::TrialModel::pearson(probs);
    in.n = 10;
    in.P = smooth::dominating_quadratic_g(smooth::QuadMode::order6, 3);
    in.tf = tf;
    in.lambda = 4.5;
    bounds::bound_relaxed_even(in);
  } catch (const validation_error&) {
    threw = true;
  }
  out.require(threw, "relaxed even bound accepted lambda=4.5");

  for (double lam : {1.0, 2.0, 3.0, 5.5}) {
    bounds::BoundInputs in;
    in.model = moments::TrialModel::pearson(probs);
    in.n = 10;
    in.P = smooth::pd_dominating_function(lam, probs);
    in.tf = tf;
    in.lambda = lam;
    auto rep = bounds::bound_relaxed_even(in);
    if (!(std::isfinite(rep.value) && rep.value >= 0.0)) {
      std::ostringstream os;
      os << "relaxed even bound rejected lambda=" << lam;
      out.require(false, os.str());
    }
  }
  if (out.pass) out.detail << "rejections and acceptances all as required";
  return out;
}

// 10. Chi-square expectations against moment-generating and characteristic
// function values.
Outcome criterion_quadrature() {
  Outcome out;
  auto hexp = exp_half_test_function();
  auto hsin = smooth::make_sine(1.0);
  double worst = 0.0;
  for (int df : {1, 2, 5}) {
    double got = dist::chisq_expectation(hexp, df);
    double want = std::pow(2.0, -0.5 * df);
    worst = std::max(worst, std::fabs(got - want));
    if (std::fabs(got - want) > 1e-9) {
      std::ostringstream os;
      os << "exp(-y/2) expectation off at df=" << df;
      out.require(false, os.str());
    }
    double got_sin = dist::chisq_expectation(hsin, df);
    double want_sin = std::pow(std::complex<double>(1.0, -2.0), -0.5 * df).imag();
    worst = std::max(worst, std::fabs(got_sin - want_sin));
    if (std::fabs(got_sin - want_sin) > 1e-9) {
      std::ostringstream os;
      os << "sin expectation off at df=" << df;
      out.require(false, os.str());
    }
  }
  if (out.pass) out.detail << "df in {1,2,5}, worst gap " << worst;
  return out;
}

struct CriterionSpec {
  int id;
  const char* name;
  Outcome (*fn)();
};

const CriterionSpec kCriteria[] = {
    {1, "rank_covariance", criterion_covariance},
    {2, "rank_moments", criterion_moments},
    {3, "friedman_rate", criterion_friedman_rate},
    {4, "power_divergence_rate", criterion_pd_rate},
    {5, "constant_rederivation", criterion_constant},
    {6, "series_remainder", criterion_series},
    {7, "stein_residual", criterion_stein_residual},
    {8, "derivative_bounds", criterion_derivative_bounds},
    {9, "hypothesis_gates", criterion_gates},
    {10, "quadrature_oracle", criterion_quadrature},
};

}  // namespace

CriterionResult run_criterion(int id) {
  const CriterionSpec* spec = nullptr;
  for (const auto& c : kCriteria)
    if (c.id == id) spec = &c;
  if (!spec) throw validation_error("unknown acceptance criterion id");
  CriterionResult res;
  res.id = id;
  res.name = spec->name;
  auto start = std::chrono::steady_clock::now();
  try {
    Outcome out = spec->fn();
    res.pass = out.pass;
    res.detail = out.detail.str();
  } catch (const std::exception& e) {
    res.pass = false;
    res.detail = std::string("exception: ") + e.what();
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

std::vector<int> suite_ids(const std::string& suite) {
  if (suite == "covariance") return {1};
  if (suite == "moments") return {2, 6};
  if (suite == "bounds") return {5, 9};
  if (suite == "stein") return {7, 8};
  if (suite == "dist") return {3, 4, 10};
  if (suite == "all") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  throw validation_error("unknown suite (expected moments, covariance, bounds, stein, dist, all)");
}

std::vector<CriterionResult> run_suite(const std::vector<int>& ids) {
  std::vector<CriterionResult> out;
  for (int id : ids) out.push_back(run_criterion(id));
  return out;
}

}  // namespace chi2rate::acceptance
