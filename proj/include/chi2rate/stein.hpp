#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "chi2rate/moments.hpp"
#include "chi2rate/smooth.hpp"

namespace chi2rate::stein {

// Inner function g of the composite statistic h(g(W)), with optional analytic
// partial derivatives to order 3 (dirs lists coordinate indices).
struct TargetFunction {
  std::function<double(const std::vector<double>&)> eval;
  std::function<double(const std::vector<int>&, const std::vector<double>&)> deriv;
  bool even = false;
  std::string label;
};

TargetFunction quadratic_target(int d);
// Odd scalar target w^3/(1 + w^2); used to document the contrast with even g.
TargetFunction smooth_odd_target();

struct Workspace;

struct SteinProblem {
  TargetFunction g;
  smooth::TestFunction tf;
  moments::CovarianceMatrix cov;
  moments::CovarianceMatrix sqrt_cov;

  int gh_order = 40;
  long long mc_inner_reps = 200000;
  std::uint64_t mc_seed = 20260821;

  mutable std::shared_ptr<const Workspace> ws;
};

SteinProblem make_problem(TargetFunction g, smooth::TestFunction tf,
                          moments::CovarianceMatrix cov);

// Value of the solution f at w. The quadrature error estimate plus the small-t
// tail estimate must stay within 1e-6; the achieved figure is written to
// achieved_error when given.
double eval_solution(const SteinProblem& sp, const std::vector<double>& w,
                     double* achieved_error = nullptr);

// |(grad' Sigma grad f)(w) - w . grad f(w) - h(g(w)) + E h(g(Sigma^{1/2} Z))|
// with the derivatives of f taken by Richardson-extrapolated central
// differences.
double stein_residual(const SteinProblem& sp, const std::vector<double>& w);

struct DerivCheckRow {
  std::vector<double> point;
  std::vector<int> dirs;
  double fd_value = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  bool pass = false;
};

struct DerivCheckReport {
  std::vector<DerivCheckRow> rows;
  double budget = 0.0;
  bool pass = false;
};

// Compare every m-th order partial of f at the given points against
// (h_m / m) [A + sum_i 2^{r_i} B_i (|w_i|^{r_i} + E|Z_i|^{r_i})].
DerivCheckReport check_derivative_bounds(const SteinProblem& sp,
                                         const smooth::DominatingFunction& P, int m,
                                         const std::vector<std::vector<double>>& points);

// Magnitude of E over Sigma^{1/2} Z of the third partial of f along dirs.
// Vanishes analytically for even g; report-only for other targets.
double check_even_mean_third(const SteinProblem& sp,
                             const std::vector<int>& dirs = {0, 0, 0});

}  // namespace chi2rate::stein
