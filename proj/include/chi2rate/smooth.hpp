#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "chi2rate/common.hpp"

namespace chi2rate::smooth {

// Bounded test function with certified derivative sup-norms. norms[j] is an
// upper bound for sup |h^(j)|; analytic families fill it exactly, the others
// by numeric maximization with a 1.05 safety factor.
struct TestFunction {
  std::function<double(double)> eval;
  std::function<double(int, double)> deriv;  // k-th derivative, k <= 7
  std::array<double, 8> norms{};
  bool has_limit_at_inf = false;
  double limit_at_inf = 0.0;
  std::string label;
};

long long stirling2(int m, int j);

double h_m(const TestFunction& tf, int m);
double h_tilde_m(const TestFunction& tf, int m);

TestFunction make_sine(double a);
TestFunction make_cosine(double a);
TestFunction make_gauss_bump(double c, double s);
TestFunction make_logistic(double a, double c);
TestFunction linear_combination(double ca, const TestFunction& f1, double cb,
                                const TestFunction& f2);

// Parse a spec string such as "sine:a=0.5" or "gauss_bump:c=4,s=2".
TestFunction parse_test_function(const std::string& spec);

// Polynomial envelope P(w) = A + sum_i B_i |w_i|^{e_i}.
struct DominatingFunction {
  double A = 0.0;
  std::vector<double> B;
  std::vector<double> expo;

  int dim() const { return int(B.size()); }
  double eval(const std::vector<double>& w) const;
};

enum class QuadMode { order3, order6 };

// Envelopes for g(w) = sum w_j^2: order3 gives 4 + 16 sum w_j^4,
// order6 gives 8 + 64 sum w_j^6.
DominatingFunction dominating_quadratic_g(QuadMode mode, int r);

// Envelope Q for the decomposition T_lambda = a + n^{-1/2} b, valid for every
// n >= 1: the derivative quantities of a, of b, and the products |b| times
// derivative quantities of a are all bounded by Q. Requires lambda a positive
// integer or lambda >= 5.
DominatingFunction pd_dominating_function(double lambda, const std::vector<double>& probs);

using DerivEvaluator =
    std::function<double(const std::vector<int>& dirs, const std::vector<double>& w)>;

struct DominationReport {
  double max_excess = 0.0;
  std::vector<double> worst_point;
  std::vector<int> worst_dirs;
  bool pass = false;
};

// Check |d^k g|^{m/k} <= P(w) for k = 1..m over a grid of points.
DominationReport verify_domination(const DerivEvaluator& g_derivs, const DominatingFunction& P,
                                   int m, const std::vector<std::vector<double>>& grid);

}  // namespace chi2rate::smooth
