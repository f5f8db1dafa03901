#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "chi2rate/stat.hpp"
#include "doctest.h"

using namespace chi2rate;
using stat::CellCounts;
using stat::PdIndex;
using stat::RankMatrix;

namespace {

CellCounts random_counts(std::mt19937_64& rng, int r, long long n) {
  std::vector<double> probs(size_t(r), 0.0);
  double tot = 0.0;
  std::uniform_real_distribution<double> u(0.2, 1.0);
  for (double& p : probs) {
    p = u(rng);
    tot += p;
  }
  for (double& p : probs) p /= tot;
  std::vector<long long> counts(size_t(r), 0);
  std::discrete_distribution<int> cell(probs.begin(), probs.end());
  for (long long i = 0; i < n; ++i) counts[size_t(cell(rng))]++;
  return CellCounts::from(counts, probs);
}

}  // namespace

TEST_CASE("standardize_ranks matches the closed form") {
  auto rm = RankMatrix::from_rows({{1, 2, 3}});
  auto xs = stat::standardize_ranks(rm);
  CHECK(xs.x[0][0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(xs.x[0][1] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(xs.x[0][2] == doctest::Approx(1.0).epsilon(1e-15));

  auto rm2 = RankMatrix::from_rows({{2, 1}});
  auto xs2 = stat::standardize_ranks(rm2);
  CHECK(xs2.x[0][0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(xs2.x[0][1] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("standardized rows sum to zero and E X^2 over all r=5 rows is 4/5") {
  std::vector<int> row = {1, 2, 3, 4, 5};
  double sum_sq = 0.0;
  long long rows = 0;
  do {
    auto xs = stat::standardize_ranks(RankMatrix::from_rows({row}));
    double s = 0.0;
    for (double v : xs.x[0]) {
      s += v;
      sum_sq += v * v;
    }
    CHECK(std::abs(s) <= 1e-12);
    ++rows;
  } while (std::next_permutation(row.begin(), row.end()));
  CHECK(rows == 120);
  CHECK(sum_sq / double(rows * 5) == doctest::Approx(4.0 / 5.0).epsilon(1e-13));
}

TEST_CASE("rank matrix validation names the offending row") {
  CHECK_THROWS_AS(RankMatrix::from_rows({{1, 1, 3}}), validation_error);
  CHECK_THROWS_AS(RankMatrix::from_rows({{1, 2, 4}}), validation_error);
  CHECK_THROWS_AS(RankMatrix::from_rows({{1, 2, 3}, {1, 2}}), validation_error);
  CHECK_THROWS_AS(RankMatrix::from_rows({{1}}), validation_error);
  CHECK_THROWS_AS(RankMatrix::from_rows({}), validation_error);
  try {
    RankMatrix::from_rows({{1, 2, 3}, {3, 3, 1}});
    CHECK(false);
  } catch (const validation_error& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("w_vector basics") {
  auto one = stat::w_vector(stat::standardize_ranks(RankMatrix::from_rows({{1, 2, 3}})));
  CHECK(one.w[0] == doctest::Approx(-1.0));
  CHECK(one.w[2] == doctest::Approx(1.0));

  auto twice =
      stat::w_vector(stat::standardize_ranks(RankMatrix::from_rows({{1, 2, 3}, {1, 2, 3}})));
  for (int j = 0; j < 3; ++j)
    CHECK(twice.w[size_t(j)] == doctest::Approx(std::sqrt(2.0) * one.w[size_t(j)]).epsilon(1e-14));

  auto cancel =
      stat::w_vector(stat::standardize_ranks(RankMatrix::from_rows({{1, 2, 3}, {3, 2, 1}})));
  for (double v : cancel.w) CHECK(std::abs(v) <= 1e-14);
}

TEST_CASE("friedman examples") {
  CHECK(stat::friedman(RankMatrix::from_rows({{1, 2, 3}})) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(stat::friedman(RankMatrix::from_rows({{1, 2, 3}, {3, 2, 1}})) ==
        doctest::Approx(0.0).epsilon(1e-14));
  CHECK(stat::friedman(RankMatrix::from_rows({{1, 2}, {1, 2}})) ==
        doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("friedman equals the sum of squared w entries") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    int r = 2 + int(rng() % 4);
    int n = 1 + int(rng() % 6);
    std::vector<std::vector<int>> rows;
    std::vector<int> base(size_t(r), 0);
    std::iota(base.begin(), base.end(), 1);
    for (int i = 0; i < n; ++i) {
      std::shuffle(base.begin(), base.end(), rng);
      rows.push_back(base);
    }
    auto rm = RankMatrix::from_rows(rows);
    auto w = stat::w_vector(stat::standardize_ranks(rm));
    double ssq = 0.0;
    for (double v : w.w) ssq += v * v;
    CHECK(stat::friedman(rm) == doctest::Approx(ssq).epsilon(1e-12));
  }
}

TEST_CASE("standardize_counts examples") {
  auto exact = stat::standardize_counts(CellCounts::from({2, 2}, {0.5, 0.5}));
  CHECK(std::abs(exact.w[0]) <= 1e-14);
  CHECK(std::abs(exact.w[1]) <= 1e-14);

  auto w1 = stat::standardize_counts(CellCounts::from({3, 1}, {0.5, 0.5}));
  CHECK(w1.w[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK(w1.w[1] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-14));

  double third = 1.0 / 3.0;
  auto w2 = stat::standardize_counts(CellCounts::from({5, 2, 2}, {third, third, third}));
  CHECK(w2.w[0] == doctest::Approx(2.0 / std::sqrt(3.0)).epsilon(1e-13));
  CHECK(w2.w[1] == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-13));
  CHECK(w2.w[2] == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-13));
}

TEST_CASE("weighted w sum vanishes for the count model") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto cc = random_counts(rng, 2 + int(rng() % 3), 12);
    auto w = stat::standardize_counts(cc);
    double s = 0.0;
    for (int j = 0; j < cc.r; ++j) s += std::sqrt(cc.probs[size_t(j)]) * w.w[size_t(j)];
    CHECK(std::abs(s) <= 1e-9);
  }
}

TEST_CASE("pearson examples and lambda=1 agreement") {
  CHECK(stat::pearson(CellCounts::from({2, 2}, {0.5, 0.5})) == doctest::Approx(0.0));
  CHECK(stat::pearson(CellCounts::from({3, 1}, {0.5, 0.5})) == doctest::Approx(1.0).epsilon(1e-14));

  std::mt19937_64 rng(23);
  auto idx = PdIndex::from(1.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto cc = random_counts(rng, 2 + int(rng() % 3), 8 + int(rng() % 20));
    CHECK(stat::power_divergence(cc, idx) ==
          doctest::Approx(stat::pearson(cc)).epsilon(1e-10));
  }
}

TEST_CASE("power divergence limit statistics") {
  auto cc = CellCounts::from({3, 1}, {0.5, 0.5});
  double t0 = stat::power_divergence(cc, PdIndex::from(0.0));
  CHECK(t0 == doctest::Approx(2.0 * (3.0 * std::log(1.5) + std::log(0.5))).epsilon(1e-12));
  CHECK(t0 == doctest::Approx(1.046496).epsilon(1e-5));

  // Continuity across the poles on counts with every cell occupied.
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto counts = random_counts(rng, 3, 30);
    bool all_positive = true;
    for (long long u : counts.counts) all_positive = all_positive && u > 0;
    if (!all_positive) continue;
    for (double pole : {0.0, -1.0}) {
      double limit = stat::power_divergence(counts, PdIndex::from(pole));
      for (double eps : {1e-6, -1e-6}) {
        double nearby = stat::power_divergence(counts, PdIndex::from(pole + eps));
        CHECK(std::abs(nearby - limit) <= 1e-4 * (1.0 + std::abs(limit)));
      }
    }
  }
}

TEST_CASE("pd index snapping") {
  CHECK(PdIndex::from(1e-5).limit_mode == stat::LimitMode::limit_zero);
  CHECK(PdIndex::from(-1.0 + 1e-5).limit_mode == stat::LimitMode::limit_minus_one);
  CHECK(PdIndex::from(1e-3).limit_mode == stat::LimitMode::exact);
  CHECK(PdIndex::from(2.0).limit_mode == stat::LimitMode::exact);
}

TEST_CASE("zero count conventions") {
  auto cc = CellCounts::from({4, 0}, {0.5, 0.5});
  CHECK(stat::power_divergence(cc, PdIndex::from(1.0)) ==
        doctest::Approx(stat::pearson(cc)).epsilon(1e-12));
  CHECK(std::isfinite(stat::power_divergence(cc, PdIndex::from(0.0))));
  CHECK(std::isinf(stat::power_divergence(cc, PdIndex::from(-0.5))));
  CHECK_THROWS_AS(stat::power_divergence(cc, PdIndex::from(-1.0)), validation_error);
}

TEST_CASE("statistic is nonnegative across the family") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 40; ++trial) {
    auto cc = random_counts(rng, 2 + int(rng() % 3), 10 + int(rng() % 30));
    for (double lambda : {-0.5, 0.0, 1.0 / 3.0, 1.0, 2.0, 5.5}) {
      double t = stat::power_divergence(cc, PdIndex::from(lambda));
      CHECK(t >= -1e-12);
    }
  }
}

TEST_CASE("remainder bracket formula") {
  std::vector<double> probs = {0.5, 0.5};
  stat::WVector zero;
  zero.w = {0.0, 0.0};
  zero.n = 16;
  CHECK(stat::pd_remainder(zero, probs, PdIndex::from(2.0)) == doctest::Approx(0.0));
  CHECK(stat::pd_remainder(zero, probs, PdIndex::from(-0.5)) == doctest::Approx(0.0));

  // lambda = 1 has no remainder for any w.
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    stat::WVector w;
    w.n = 25;
    double s = 0.0;
    w.w = {0.0, 0.0};
    w.w[0] = u(rng);
    w.w[1] = -w.w[0];  // keep the weighted-sum constraint for p = (1/2,1/2)
    s = stat::pd_remainder(w, probs, PdIndex::from(1.0));
    CHECK(std::abs(s) <= 1e-12);
  }
}

TEST_CASE("remainder is consistent with the statistic") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    auto cc = random_counts(rng, 2, 40);
    if (cc.counts[0] == 0 || cc.counts[1] == 0) continue;
    auto w = stat::standardize_counts(cc);
    for (double lambda : {2.0, 0.5, -0.5}) {
      auto idx = PdIndex::from(lambda);
      double t = stat::power_divergence(cc, idx);
      double wsq = w.w[0] * w.w[0] + w.w[1] * w.w[1];
      double rem = stat::pd_remainder(w, cc.probs, idx);
      CHECK(rem + wsq == doctest::Approx(t).epsilon(1e-9));
    }
  }
}

TEST_CASE("series remainder termination and validity") {
  std::vector<double> probs = {0.2, 0.3, 0.5};
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  long long n = 16;
  for (int trial = 0; trial < 50; ++trial) {
    stat::WVector w;
    w.n = n;
    w.w.resize(3);
    for (int j = 0; j < 3; ++j)
      w.w[size_t(j)] = 0.5 * std::sqrt(double(n) * probs[size_t(j)]) * u(rng);

    // Positive integer lambda: the binomial series is a polynomial that
    // terminates at k = lambda + 1.
    for (double lambda : {1.0, 2.0, 3.0}) {
      double direct = stat::pd_remainder(w, probs, PdIndex::from(lambda));
      double series = stat::pd_series_remainder(w, probs, lambda, int(lambda) + 1);
      CHECK(series == doctest::Approx(direct).epsilon(1e-10));
    }
    double direct = stat::pd_remainder(w, probs, PdIndex::from(-0.5));
    double series = stat::pd_series_remainder(w, probs, -0.5, 40);
    CHECK(std::abs(series - direct) <= 1e-8);
  }

  stat::WVector bad;
  bad.n = 4;
  bad.w = {10.0, 0.0, 0.0};
  CHECK_THROWS_AS(stat::pd_series_remainder(bad, probs, 2.0, 10), validation_error);
}
