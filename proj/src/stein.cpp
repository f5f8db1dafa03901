#include "chi2rate/stein.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <Eigen/Dense>

#include "chi2rate/common.hpp"
#include "chi2rate/quadrature.hpp"

namespace chi2rate::stein {
namespace {

constexpr double kTMin = 1e-8;
constexpr double kSolutionTarget = 1e-6;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

// Shared read-only quadrature data: the discrete representation of the
// reference measure Sigma^{1/2} Z, the reference expectation, and the fixed
// panel decomposition of t in (0, 1]. Panels are fixed rather than adaptive so
// the quadrature error varies smoothly with w and cancels in the finite
// differences taken on top of eval_solution.
struct Workspace {
  int d = 0;
  int active = 0;
  std::vector<double> weights;  // one per support point
  std::vector<double> vpts;     // flattened, size weights.size() * d
  double e_inf = 0.0;
  std::vector<double> panel_lo;
  std::vector<double> panel_hi;
  bool mc_inner = false;
};

namespace {

const Workspace& workspace(const SteinProblem& sp) {
  if (sp.ws) return *sp.ws;
  if (sp.gh_order < 2 || sp.gh_order > 200)
    throw validation_error("tensor rule order must lie in [2, 200]");
  auto ws = std::make_shared<Workspace>();
  const int d = sp.cov.r;
  ws->d = d;
  Eigen::MatrixXd S(d, d);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) S(j, k) = sp.cov.at(j, k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success)
    throw numeric_error("covariance eigendecomposition failed", 0.0);
  std::vector<int> act;
  for (int i = 0; i < d; ++i) {
    double ev = es.eigenvalues()(i);
    if (ev < -1e-10) throw validation_error("covariance matrix has a negative eigenvalue");
    if (ev > 1e-10) act.push_back(i);
  }
  ws->active = int(act.size());
  const int k = ws->active;

  if (k == 0) {
    ws->weights = {1.0};
    ws->vpts.assign(size_t(d), 0.0);
  } else if (k <= 3) {
    const auto& gh = quad::gauss_hermite(sp.gh_order);
    const int q = int(gh.nodes.size());
    std::vector<int> idx(size_t(k), 0);
    for (;;) {
      double wgt = 1.0;
      std::vector<double> v(size_t(d), 0.0);
      for (int a = 0; a < k; ++a) {
        int col = act[size_t(a)];
        double scale = std::sqrt(es.eigenvalues()(col));
        double xi = gh.nodes[size_t(idx[size_t(a)])];
        wgt *= gh.weights[size_t(idx[size_t(a)])];
        for (int j = 0; j < d; ++j) v[size_t(j)] += scale * es.eigenvectors()(j, col) * xi;
      }
      ws->weights.push_back(wgt);
      ws->vpts.insert(ws->vpts.end(), v.begin(), v.end());
      int a = k - 1;
      while (a >= 0 && ++idx[size_t(a)] == q) {
        idx[size_t(a)] = 0;
        --a;
      }
      if (a < 0) break;
    }
  } else {
    // Too many active dimensions for a tensor rule: fixed-seed Monte Carlo
    // representation of the reference measure.
    ws->mc_inner = true;
    long long reps = std::max<long long>(sp.mc_inner_reps, 1000);
    std::uint64_t state = splitmix64(sp.mc_seed);
    auto unif = [&state]() {
      state = splitmix64(state);
      return 1.0 - double(state >> 11) * 0x1.0p-53;  // in (0, 1]
    };
    double w1 = 1.0 / double(reps);
    for (long long i = 0; i < reps; ++i) {
      std::vector<double> z(size_t(k), 0.0);
      for (int a = 0; a < k; a += 2) {
        double u1 = unif();
        double u2 = unif();
        double rad = std::sqrt(-2.0 * std::log(u1));
        z[size_t(a)] = rad * std::cos(2.0 * M_PI * u2);
        if (a + 1 < k) z[size_t(a) + 1] = rad * std::sin(2.0 * M_PI * u2);
      }
      std::vector<double> v(size_t(d), 0.0);
      for (int a = 0; a < k; ++a) {
        int col = act[size_t(a)];
        double scale = std::sqrt(es.eigenvalues()(col));
        for (int j = 0; j < d; ++j)
          v[size_t(j)] += scale * es.eigenvectors()(j, col) * z[size_t(a)];
      }
      ws->weights.push_back(w1);
      ws->vpts.insert(ws->vpts.end(), v.begin(), v.end());
    }
  }

  // Reference expectation at t = 0.
  {
    double s = 0.0;
    std::vector<double> arg(size_t(d), 0.0);
    for (size_t c = 0; c < ws->weights.size(); ++c) {
      const double* v = ws->vpts.data() + c * size_t(d);
      for (int j = 0; j < d; ++j) arg[size_t(j)] = v[j];
      s += ws->weights[c] * sp.tf.eval(sp.g.eval(arg));
    }
    ws->e_inf = s;
  }

  double hi = 1.0;
  const double step = std::sqrt(0.5);
  while (hi > kTMin) {
    double lo = std::max(hi * step, kTMin);
    ws->panel_lo.push_back(lo);
    ws->panel_hi.push_back(hi);
    hi = lo;
  }
  sp.ws = ws;
  return *sp.ws;
}

// E h(g(t w + sqrt(1 - t^2) V)) over the discrete reference measure.
double smoothed_expectation(const SteinProblem& sp, const Workspace& ws, double t,
                            const std::vector<double>& w) {
  const int d = ws.d;
  double s = std::sqrt(std::max(0.0, 1.0 - t * t));
  double total = 0.0;
  std::vector<double> arg(size_t(d), 0.0);
  for (size_t c = 0; c < ws.weights.size(); ++c) {
    const double* v = ws.vpts.data() + c * size_t(d);
    for (int j = 0; j < d; ++j) arg[size_t(j)] = t * w[size_t(j)] + s * v[j];
    total += ws.weights[c] * sp.tf.eval(sp.g.eval(arg));
  }
  return total;
}

double fd_step(double wj, double clamp) { return std::max(1e-3 * std::fabs(wj), clamp); }

}  // namespace

TargetFunction quadratic_target(int d) {
  if (d < 1) throw validation_error("target dimension must be positive");
  TargetFunction g;
  g.even = true;
  {
    std::ostringstream os;
    os << "sumsq(d=" << d << ")";
    g.label = os.str();
  }
  g.eval = [](const std::vector<double>& w) {
    double s = 0.0;
    for (double x : w) s += x * x;
    return s;
  };
  g.deriv = [](const std::vector<int>& dirs, const std::vector<double>& w) {
    if (dirs.size() == 1) return 2.0 * w[size_t(dirs[0])];
    if (dirs.size() == 2) return dirs[0] == dirs[1] ? 2.0 : 0.0;
    return 0.0;
  };
  return g;
}

TargetFunction smooth_odd_target() {
  TargetFunction g;
  g.even = false;
  g.label = "odd_cubic";
  g.eval = [](const std::vector<double>& w) {
    double x = w[0];
    return x * x * x / (1.0 + x * x);
  };
  g.deriv = nullptr;
  return g;
}

SteinProblem make_problem(TargetFunction g, smooth::TestFunction tf,
                          moments::CovarianceMatrix cov) {
  if (cov.r < 1) throw validation_error("covariance must have positive dimension");
  SteinProblem sp;
  sp.g = std::move(g);
  sp.tf = std::move(tf);
  sp.sqrt_cov = moments::matrix_sqrt(cov);  // also validates non-negative definiteness
  sp.cov = std::move(cov);
  return sp;
}

double eval_solution(const SteinProblem& sp, const std::vector<double>& w,
                     double* achieved_error) {
  const Workspace& ws = workspace(sp);
  if (int(w.size()) != ws.d) throw validation_error("point dimension does not match covariance");
  double total = 0.0;
  double err_total = 0.0;
  auto integrand = [&](double t) {
    return (smoothed_expectation(sp, ws, t, w) - ws.e_inf) / t;
  };
  for (size_t p = 0; p < ws.panel_lo.size(); ++p) {
    double err = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        integrand, ws.panel_lo[p], ws.panel_hi[p], 0, 0.0, &err);
    err_total += err;
  }
  // Below t_min the integrand is bounded by roughly |D(t_min) - D(0)| / t_min,
  // so the omitted mass is about |D(t_min) - D(0)|.
  double tail = std::fabs(smoothed_expectation(sp, ws, kTMin, w) - ws.e_inf);
  double achieved = err_total + tail;
  if (achieved_error) *achieved_error = achieved;
  if (achieved > kSolutionTarget)
    throw numeric_error("solution quadrature missed the 1e-6 target", achieved);
  return -total;
}

namespace {

double fd_first(const SteinProblem& sp, const std::vector<double>& w, int j) {
  double h = fd_step(w[size_t(j)], 1e-4);
  auto at = [&](double hh, double sgn) {
    auto p = w;
    p[size_t(j)] += sgn * hh;
    return eval_solution(sp, p);
  };
  auto diff = [&](double hh) { return (at(hh, 1.0) - at(hh, -1.0)) / (2.0 * hh); };
  double d1 = diff(h);
  double d2 = diff(h / 2.0);
  return (4.0 * d2 - d1) / 3.0;
}

double fd_second(const SteinProblem& sp, const std::vector<double>& w, int j, int k,
                 double f0) {
  if (j == k) {
    double h = fd_step(w[size_t(j)], 1e-4);
    auto at = [&](double hh, double sgn) {
      auto p = w;
      p[size_t(j)] += sgn * hh;
      return eval_solution(sp, p);
    };
    auto diff = [&](double hh) {
      return (at(hh, 1.0) - 2.0 * f0 + at(hh, -1.0)) / (hh * hh);
    };
    double d1 = diff(h);
    double d2 = diff(h / 2.0);
    return (4.0 * d2 - d1) / 3.0;
  }
  double hj = fd_step(w[size_t(j)], 1e-4);
  double hk = fd_step(w[size_t(k)], 1e-4);
  auto at = [&](double sj, double sk, double scale) {
    auto p = w;
    p[size_t(j)] += sj * hj * scale;
    p[size_t(k)] += sk * hk * scale;
    return eval_solution(sp, p);
  };
  auto diff = [&](double scale) {
    return (at(1, 1, scale) - at(1, -1, scale) - at(-1, 1, scale) + at(-1, -1, scale)) /
           (4.0 * hj * hk * scale * scale);
  };
  double d1 = diff(1.0);
  double d2 = diff(0.5);
  return (4.0 * d2 - d1) / 3.0;
}

// Third-order partial along sorted dirs. Steps are clamped to 1e-3 because the
// stencil divides by the cube of the step and must stay above rounding noise.
double fd_third(const SteinProblem& sp, const std::vector<double>& w,
                std::vector<int> dirs) {
  std::sort(dirs.begin(), dirs.end());
  int a = dirs[0], b = dirs[1], c = dirs[2];
  const double clamp = 1e-3;
  if (a == b && b == c) {
    double h = fd_step(w[size_t(a)], clamp);
    auto at = [&](double off) {
      auto p = w;
      p[size_t(a)] += off;
      return eval_solution(sp, p);
    };
    auto diff = [&](double hh) {
      return (at(2.0 * hh) - 2.0 * at(hh) + 2.0 * at(-hh) - at(-2.0 * hh)) /
             (2.0 * hh * hh * hh);
    };
    double d1 = diff(h);
    double d2 = diff(h / 2.0);
    return (4.0 * d2 - d1) / 3.0;
  }
  if (a == b || b == c) {
    int dbl = (a == b) ? a : c;
    int sgl = (a == b) ? c : a;
    double hd = fd_step(w[size_t(dbl)], clamp);
    double hs = fd_step(w[size_t(sgl)], clamp);
    auto at = [&](double od, double os) {
      auto p = w;
      p[size_t(dbl)] += od;
      p[size_t(sgl)] += os;
      return eval_solution(sp, p);
    };
    auto diff = [&](double scale) {
      double hds = hd * scale, hss = hs * scale;
      double plus = at(hds, hss) - 2.0 * at(0.0, hss) + at(-hds, hss);
      double minus = at(hds, -hss) - 2.0 * at(0.0, -hss) + at(-hds, -hss);
      return (plus - minus) / (2.0 * hss * hds * hds);
    };
    double d1 = diff(1.0);
    double d2 = diff(0.5);
    return (4.0 * d2 - d1) / 3.0;
  }
  double ha = fd_step(w[size_t(a)], clamp);
  double hb = fd_step(w[size_t(b)], clamp);
  double hc = fd_step(w[size_t(c)], clamp);
  auto at = [&](double sa, double sb, double sc, double scale) {
    auto p = w;
    p[size_t(a)] += sa * ha * scale;
    p[size_t(b)] += sb * hb * scale;
    p[size_t(c)] += sc * hc * scale;
    return eval_solution(sp, p);
  };
  auto diff = [&](double s) {
    double tot = 0.0;
    for (int sa = -1; sa <= 1; sa += 2)
      for (int sb = -1; sb <= 1; sb += 2)
        for (int sc = -1; sc <= 1; sc += 2) tot += sa * sb * sc * at(sa, sb, sc, s);
    return tot / (8.0 * ha * hb * hc * s * s * s);
  };
  double d1 = diff(1.0);
  double d2 = diff(0.5);
  return (4.0 * d2 - d1) / 3.0;
}

}  // namespace

double stein_residual(const SteinProblem& sp, const std::vector<double>& w) {
  const Workspace& ws = workspace(sp);
  if (int(w.size()) != ws.d) throw validation_error("point dimension does not match covariance");
  double f0 = eval_solution(sp, w);
  double lhs = 0.0;
  for (int j = 0; j < ws.d; ++j) {
    for (int k = j; k < ws.d; ++k) {
      double sjk = sp.cov.at(j, k);
      if (sjk == 0.0) continue;
      double fact = (j == k) ? 1.0 : 2.0;
      lhs += fact * sjk * fd_second(sp, w, j, k, f0);
    }
  }
  for (int j = 0; j < ws.d; ++j) {
    if (w[size_t(j)] == 0.0) continue;
    lhs -= w[size_t(j)] * fd_first(sp, w, j);
  }
  double rhs = sp.tf.eval(sp.g.eval(w)) - ws.e_inf;
  return std::fabs(lhs - rhs);
}

DerivCheckReport check_derivative_bounds(const SteinProblem& sp,
                                         const smooth::DominatingFunction& P, int m,
                                         const std::vector<std::vector<double>>& points) {
  const Workspace& ws = workspace(sp);
  if (m < 1 || m > 3)
    throw validation_error("finite differences of the solution support order 1 to 3");
  if (P.dim() != ws.d)
    throw validation_error("dominating function dimension does not match covariance");
  double hm = smooth::h_m(sp.tf, m);
  std::vector<double> zmom(size_t(ws.d), 0.0);
  for (int i = 0; i < ws.d; ++i)
    zmom[size_t(i)] = moments::gaussian_abs_moment(sp.cov.at(i, i), P.expo[size_t(i)]);

  DerivCheckReport report;
  report.budget = 1e-3;
  report.pass = true;

  // All nondecreasing direction multisets of size m.
  std::vector<std::vector<int>> dir_sets;
  std::vector<int> cur(size_t(m), 0);
  for (;;) {
    dir_sets.push_back(cur);
    int a = m - 1;
    while (a >= 0 && cur[size_t(a)] == ws.d - 1) --a;
    if (a < 0) break;
    int v = cur[size_t(a)] + 1;
    for (int b = a; b < m; ++b) cur[size_t(b)] = v;
  }

  for (const auto& pt : points) {
    if (int(pt.size()) != ws.d) throw validation_error("point dimension mismatch");
    double rhs = P.A;
    for (int i = 0; i < ws.d; ++i) {
      rhs += std::pow(2.0, P.expo[size_t(i)]) * P.B[size_t(i)] *
             (std::pow(std::fabs(pt[size_t(i)]), P.expo[size_t(i)]) + zmom[size_t(i)]);
    }
    rhs *= hm / double(m);
    double f0 = eval_solution(sp, pt);
    for (const auto& ds : dir_sets) {
      double fd = 0.0;
      if (m == 1) {
        fd = fd_first(sp, pt, ds[0]);
      } else if (m == 2) {
        fd = fd_second(sp, pt, ds[0], ds[1], f0);
      } else {
        fd = fd_third(sp, pt, ds);
      }
      DerivCheckRow row;
      row.point = pt;
      row.dirs = ds;
      row.fd_value = std::fabs(fd);
      row.bound = rhs;
      row.margin = rhs + report.budget - row.fd_value;
      row.pass = row.fd_value <= rhs + report.budget;
      report.pass = report.pass && row.pass;
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

double check_even_mean_third(const SteinProblem& sp, const std::vector<int>& dirs) {
  const Workspace& ws = workspace(sp);
  if (dirs.size() != 3) throw validation_error("needs a direction multiset of size 3");
  for (int d0 : dirs)
    if (d0 < 0 || d0 >= ws.d) throw validation_error("direction index out of range");
  if (ws.active > 2)
    throw resource_error("outer expectation supports at most two active dimensions");
  double total = 0.0;
  std::vector<double> pt(size_t(ws.d), 0.0);
  for (size_t c = 0; c < ws.weights.size(); ++c) {
    // The extreme tensor nodes carry weights far below every tolerance in
    // play while |d^3 f| grows only polynomially, so their contribution is
    // immaterial and not worth a full solution evaluation.
    if (ws.weights[c] < 1e-12) continue;
    const double* v = ws.vpts.data() + c * size_t(ws.d);
    for (int j = 0; j < ws.d; ++j) pt[size_t(j)] = v[j];
    total += ws.weights[c] * fd_third(sp, pt, dirs);
  }
  return std::fabs(total);
}

}  // namespace chi2rate::stein
