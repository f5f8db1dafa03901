#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <vector>

#include "chi2rate/dist.hpp"
#include "doctest.h"

using namespace chi2rate;
using dist::LatticeDistribution;
using dist::ModelSpec;
using dist::StatisticSpec;

namespace {

double lattice_mean(const LatticeDistribution& ld) {
  double m = 0.0;
  for (size_t i = 0; i < ld.values.size(); ++i) m += ld.values[i] * ld.probs[i];
  return m;
}

Rational rational_prob_sum(const LatticeDistribution& ld) {
  Rational s = ld.exact_diverged_mass;
  for (const auto& p : ld.exact_probs) s += p;
  return s;
}

smooth::TestFunction constant_function(double c) {
  smooth::TestFunction tf;
  tf.eval = [c](double) { return c; };
  tf.deriv = [c](int k, double) { return k == 0 ? c : 0.0; };
  tf.norms.fill(0.0);
  tf.norms[0] = std::abs(c);
  tf.has_limit_at_inf = true;
  tf.limit_at_inf = c;
  tf.label = "constant";
  return tf;
}

smooth::TestFunction exp_half_function() {
  smooth::TestFunction tf;
  tf.eval = [](double y) { return std::exp(-0.5 * y); };
  tf.deriv = [](int k, double y) { return std::pow(-0.5, k) * std::exp(-0.5 * y); };
  for (int j = 0; j <= 7; ++j) tf.norms[size_t(j)] = std::pow(0.5, j);
  tf.has_limit_at_inf = true;
  tf.limit_at_inf = 0.0;
  tf.label = "exp_half";
  return tf;
}

}  // namespace

TEST_CASE("exact friedman distribution, small cases") {
  auto d1 = dist::exact_friedman_distribution(2, 1);
  REQUIRE(d1.values.size() == 1);
  CHECK(d1.values[0] == doctest::Approx(1.0));
  CHECK(d1.probs[0] == doctest::Approx(1.0));
  CHECK(rational_prob_sum(d1) == Rational(1));

  auto d2 = dist::exact_friedman_distribution(2, 2);
  std::map<double, double> law;
  for (size_t i = 0; i < d2.values.size(); ++i) law[d2.values[i]] = d2.probs[i];
  REQUIRE(law.size() == 2);
  CHECK(law.at(0.0) == doctest::Approx(0.5));
  CHECK(law.at(2.0) == doctest::Approx(0.5));

  auto d3 = dist::exact_friedman_distribution(3, 2);
  CHECK(lattice_mean(d3) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(rational_prob_sum(d3) == Rational(1));

  auto d4 = dist::exact_friedman_distribution(4, 3);
  CHECK(lattice_mean(d4) == doctest::Approx(3.0).epsilon(1e-13));

  CHECK_THROWS_AS(dist::exact_friedman_distribution(6, 4), resource_error);
  CHECK_THROWS_AS(dist::exact_friedman_distribution(3, 10000), resource_error);
}

TEST_CASE("exact rank covariance equals the closed form") {
  for (int r : {2, 3, 4}) {
    for (long long n : {1LL, 5LL}) {
      auto cov = dist::rank_covariance_exact(r, n);
      for (int j = 0; j < r; ++j)
        for (int k = 0; k < r; ++k) {
          Rational want = j == k ? Rational(r - 1, r) : Rational(-1, r);
          CHECK(cov[size_t(j)][size_t(k)] == want);
        }
    }
  }
}

TEST_CASE("exact multinomial distribution") {
  auto d = dist::exact_multinomial_distribution({0.5, 0.5}, 2, StatisticSpec::pearson());
  std::map<double, double> law;
  for (size_t i = 0; i < d.values.size(); ++i) law[d.values[i]] += d.probs[i];
  REQUIRE(law.size() == 2);
  CHECK(law.at(0.0) == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(law.at(2.0) == doctest::Approx(0.5).epsilon(1e-13));

  // Mean of the Pearson statistic is r - 1 for any probabilities.
  auto d2 = dist::exact_multinomial_distribution({0.2, 0.3, 0.5}, 6, StatisticSpec::pearson());
  CHECK(lattice_mean(d2) == doctest::Approx(2.0).epsilon(1e-12));

  // lambda = 1 reproduces the Pearson law. Support points can merge
  // differently at the last ulp, so compare through expectations.
  auto dpd = dist::exact_multinomial_distribution({0.2, 0.3, 0.5}, 6, StatisticSpec::pd(1.0));
  CHECK(dpd.diverged_mass == doctest::Approx(d2.diverged_mass));
  CHECK(lattice_mean(dpd) == doctest::Approx(lattice_mean(d2)).epsilon(1e-10));
  for (double a : {0.3, 0.7, 1.1}) {
    auto probe = smooth::make_sine(a);
    CHECK(dist::lattice_expectation(dpd, probe) ==
          doctest::Approx(dist::lattice_expectation(d2, probe)).epsilon(1e-10));
  }

  CHECK_THROWS_AS(
      dist::exact_multinomial_distribution({0.5, 0.5}, 100000, StatisticSpec::pearson()),
      resource_error);
}

TEST_CASE("divergent power divergence mass is pooled") {
  auto d = dist::exact_multinomial_distribution({0.5, 0.5}, 4, StatisticSpec::pd(-0.5));
  // P(U1 = 0) + P(U2 = 0) = 2/16.
  CHECK(d.diverged_mass == doctest::Approx(0.125).epsilon(1e-12));
  double mass = d.diverged_mass;
  for (double p : d.probs) mass += p;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

  // Expectations need a limit at infinity once mass has escaped.
  auto bump = smooth::make_gauss_bump(4.0, 2.0);
  CHECK(std::isfinite(dist::lattice_expectation(d, bump)));
  CHECK_THROWS_AS(dist::lattice_expectation(d, smooth::make_sine(0.5)), validation_error);

  auto rat = dist::exact_multinomial_distribution_rational(
      {Rational(1, 2), Rational(1, 2)}, 4, StatisticSpec::pd(-0.5));
  CHECK(rat.exact_diverged_mass == Rational(1, 8));
  CHECK(rational_prob_sum(rat) == Rational(1));
}

TEST_CASE("chi-square reference expectations") {
  auto hexp = exp_half_function();
  auto hsin = smooth::make_sine(1.0);
  for (int df : {1, 2, 5}) {
    double want_exp = std::pow(2.0, -0.5 * df);
    double want_sin = std::pow(std::complex<double>(1.0, -2.0), -0.5 * df).imag();
    CHECK(std::abs(dist::chisq_expectation(hexp, df) - want_exp) <= 1e-9);
    CHECK(std::abs(dist::chisq_expectation(hsin, df) - want_sin) <= 1e-9);
  }
  CHECK(dist::chisq_expectation(constant_function(1.0), 3) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK_THROWS_AS(dist::chisq_expectation(hexp, 0), validation_error);
}

TEST_CASE("monte carlo estimator") {
  auto model = ModelSpec::rank(3);
  auto spec = StatisticSpec::friedman();

  auto constant = dist::mc_estimate(model, spec, constant_function(0.25), 8, 500, 99);
  CHECK(constant.mean == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(constant.std_error == doctest::Approx(0.0).epsilon(1e-14));

  auto a = dist::mc_estimate(model, spec, smooth::make_sine(0.5), 8, 4000, 1234);
  auto b = dist::mc_estimate(model, spec, smooth::make_sine(0.5), 8, 4000, 1234);
  CHECK(a.mean == b.mean);
  CHECK(a.std_error == b.std_error);

  auto c = dist::mc_estimate(model, spec, smooth::make_sine(0.5), 8, 4000, 1235);
  CHECK(a.mean != c.mean);

  // Agreement with the exact law at a fixed seed.
  auto exact = dist::lattice_expectation(dist::exact_friedman_distribution(3, 8),
                                         smooth::make_sine(0.5));
  auto mc = dist::mc_estimate(model, spec, smooth::make_sine(0.5), 8, 20000, 31337);
  CHECK(std::abs(mc.mean - exact) <= 5.0 * mc.std_error);

  CHECK_THROWS_AS(dist::mc_estimate(model, spec, smooth::make_sine(0.5), 8, 50, 1),
                  validation_error);
}

TEST_CASE("smooth distance") {
  auto tf = smooth::make_sine(0.5);
  auto model = ModelSpec::rank(3);
  auto spec = StatisticSpec::friedman();

  auto d16 = dist::smooth_distance(model, spec, tf, 16, dist::DistanceMode::exact_mode());
  auto d256 = dist::smooth_distance(model, spec, tf, 256, dist::DistanceMode::exact_mode());
  CHECK(d16.std_error == 0.0);
  CHECK(d256.delta < d16.delta);
  CHECK(d16.delta <= 2.0 * tf.norms[0]);
  CHECK(d16.reference == doctest::Approx(dist::chisq_expectation(tf, 2)).epsilon(1e-12));

  // The frozen value for n = 16 from the exact pipeline.
  CHECK(d16.delta == doctest::Approx(8.111090e-03).epsilon(1e-6));

  auto mc = dist::smooth_distance(model, spec, tf, 16,
                                  dist::DistanceMode::mc_mode(20000, 777));
  CHECK(mc.std_error > 0.0);
  CHECK(std::abs(mc.delta - d16.delta) <= 6.0 * mc.std_error + 1e-12);
}

TEST_CASE("rate fitting") {
  std::vector<std::array<double, 3>> clean;
  for (double n : {8.0, 16.0, 32.0, 64.0, 128.0}) clean.push_back({n, 7.0 / n, 0.0});
  auto fit = dist::fit_rate(clean);
  CHECK(fit.beta == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::exp(fit.intercept) == doctest::Approx(7.0).epsilon(1e-9));
  CHECK(fit.dropped == 0);
  CHECK(fit.points.size() == 5);

  std::vector<std::array<double, 3>> half;
  for (double n : {8.0, 16.0, 32.0, 64.0}) half.push_back({n, 3.0 / std::sqrt(n), 0.0});
  CHECK(dist::fit_rate(half).beta == doctest::Approx(0.5).epsilon(1e-9));

  // Nonpositive deltas are dropped; too few survivors is an error.
  std::vector<std::array<double, 3>> with_zero = clean;
  with_zero.push_back({256.0, 0.0, 0.0});
  auto fit2 = dist::fit_rate(with_zero);
  CHECK(fit2.dropped == 1);
  CHECK(fit2.beta == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(dist::fit_rate({{8.0, 0.5, 0.0}, {16.0, 0.25, 0.0}}), validation_error);

  // Weighted fit: exact log-linear data stays exact under positive weights.
  std::vector<std::array<double, 3>> weighted;
  for (double n : {8.0, 16.0, 32.0, 64.0}) weighted.push_back({n, 7.0 / n, 0.001 * 7.0 / n});
  CHECK(dist::fit_rate(weighted).beta == doctest::Approx(1.0).epsilon(1e-9));
}
