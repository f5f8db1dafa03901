#include "chi2rate/smooth.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>

namespace chi2rate::smooth {

namespace {

constexpr int kMaxM = 12;

struct StirlingTable {
  long long v[kMaxM + 1][kMaxM + 1] = {};
};

const StirlingTable& stirling_table() {
  static StirlingTable table;
  static std::once_flag once;
  std::call_once(once, [] {
    // Alternating-sum formula in big integers, cross-checked against the
    // recurrence before the table is published.
    for (int m = 0; m <= kMaxM; ++m)
      for (int j = 0; j <= m; ++j) {
        BigInt sum = 0;
        BigInt binom = 1;  // C(j, i) built incrementally
        for (int i = 0; i <= j; ++i) {
          BigInt term = binom;
          for (int e = 0; e < m; ++e) term *= i;
          sum += ((j - i) % 2 == 0) ? term : -term;
          binom = binom * (j - i) / (i + 1);
        }
        BigInt jfact = 1;
        for (int i = 2; i <= j; ++i) jfact *= i;
        table.v[m][j] = (long long)(sum / jfact);
      }
    for (int m = 1; m <= kMaxM; ++m)
      for (int j = 1; j <= m; ++j) {
        long long rec = j * table.v[m - 1][j] + table.v[m - 1][j - 1];
        if (rec != table.v[m][j])
          throw numeric_error("stirling table recurrence mismatch", 0.0);
      }
  });
  return table;
}

double scan_norm(const std::function<double(double)>& f, double lo, double hi, int points) {
  double best = 0.0;
  for (int i = 0; i <= points; ++i) {
    double x = lo + (hi - lo) * i / points;
    best = std::max(best, std::abs(f(x)));
  }
  return best;
}

// Probabilists' Hermite polynomial He_k(u).
double hermite_e(int k, double u) {
  double h0 = 1.0, h1 = u;
  if (k == 0) return h0;
  for (int i = 1; i < k; ++i) {
    double h2 = u * h1 - i * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

double checked_norm(const TestFunction& tf, int j) {
  if (j < 0 || j > 7) throw validation_error("derivative norm index out of range");
  double v = tf.norms[size_t(j)];
  if (!std::isfinite(v) || v < 0.0)
    throw validation_error("missing derivative norm of order " + std::to_string(j));
  return v;
}

}  // namespace

long long stirling2(int m, int j) {
  if (m < 0 || j < 0 || j > m || m > kMaxM)
    throw validation_error("stirling2 needs 0 <= j <= m <= 12");
  return stirling_table().v[m][j];
}

double h_m(const TestFunction& tf, int m) {
  if (m < 0 || m > 6) throw validation_error("h_m supports m <= 6");
  double sum = 0.0;
  for (int j = 1; j <= m; ++j) sum += double(stirling2(m, j)) * checked_norm(tf, j);
  return sum;
}

double h_tilde_m(const TestFunction& tf, int m) {
  if (m < 0 || m > 6) throw validation_error("h_tilde_m supports m <= 6");
  double sum = 0.0;
  double two_m = std::pow(2.0, m);
  for (int k = 1; k <= m; ++k)
    sum += double(stirling2(m, k)) * (two_m * checked_norm(tf, k) + checked_norm(tf, k + 1));
  return sum;
}

TestFunction make_sine(double a) {
  if (!(a > 0.0)) throw validation_error("sine needs a > 0");
  TestFunction tf;
  tf.label = "sine(a=" + std::to_string(a) + ")";
  tf.eval = [a](double x) { return std::sin(a * x); };
  tf.deriv = [a](int k, double x) {
    return std::pow(a, k) * std::sin(a * x + k * std::acos(-1.0) / 2.0);
  };
  for (int j = 0; j < 8; ++j) tf.norms[size_t(j)] = std::pow(a, j);
  tf.norms[0] = 1.0;
  return tf;
}

TestFunction make_cosine(double a) {
  if (!(a > 0.0)) throw validation_error("cosine needs a > 0");
  TestFunction tf;
  tf.label = "cosine(a=" + std::to_string(a) + ")";
  tf.eval = [a](double x) { return std::cos(a * x); };
  tf.deriv = [a](int k, double x) {
    return std::pow(a, k) * std::cos(a * x + k * std::acos(-1.0) / 2.0);
  };
  for (int j = 0; j < 8; ++j) tf.norms[size_t(j)] = std::pow(a, j);
  tf.norms[0] = 1.0;
  return tf;
}

TestFunction make_gauss_bump(double c, double s) {
  if (!(s > 0.0)) throw validation_error("gauss_bump needs s > 0");
  TestFunction tf;
  tf.label = "gauss_bump(c=" + std::to_string(c) + ",s=" + std::to_string(s) + ")";
  tf.eval = [c, s](double x) {
    double u = (x - c) / s;
    return std::exp(-0.5 * u * u);
  };
  tf.deriv = [c, s](int k, double x) {
    double u = (x - c) / s;
    double sign = (k % 2 == 0) ? 1.0 : -1.0;
    return sign * std::pow(s, -k) * hermite_e(k, u) * std::exp(-0.5 * u * u);
  };
  tf.norms[0] = 1.0;
  for (int k = 1; k < 8; ++k) {
    auto dk = [&tf, k](double x) { return tf.deriv(k, x); };
    tf.norms[size_t(k)] = 1.05 * scan_norm(dk, c - 10.0 * s, c + 10.0 * s, 40000);
  }
  tf.has_limit_at_inf = true;
  tf.limit_at_inf = 0.0;
  return tf;
}

TestFunction make_logistic(double a, double c) {
  if (!(a > 0.0)) throw validation_error("logistic needs a > 0");
  TestFunction tf;
  tf.label = "logistic(a=" + std::to_string(a) + ",c=" + std::to_string(c) + ")";
  // h^(k)(x) = a^k Q_k(sigma) with Q_0 = sigma and
  // Q_{k+1} = Q_k'(sigma) * sigma(1-sigma).
  std::vector<std::vector<double>> polys(8);
  polys[0] = {0.0, 1.0};
  for (int k = 1; k < 8; ++k) {
    const auto& prev = polys[size_t(k - 1)];
    std::vector<double> deriv_poly(prev.size() > 1 ? prev.size() - 1 : 1, 0.0);
    for (size_t i = 1; i < prev.size(); ++i) deriv_poly[i - 1] = double(i) * prev[i];
    // multiply by sigma - sigma^2
    std::vector<double> next(deriv_poly.size() + 2, 0.0);
    for (size_t i = 0; i < deriv_poly.size(); ++i) {
      next[i + 1] += deriv_poly[i];
      next[i + 2] -= deriv_poly[i];
    }
    polys[size_t(k)] = std::move(next);
  }
  auto poly_eval = [](const std::vector<double>& p, double x) {
    double v = 0.0;
    for (size_t i = p.size(); i-- > 0;) v = v * x + p[i];
    return v;
  };
  tf.eval = [a, c](double x) { return 1.0 / (1.0 + std::exp(-a * (x - c))); };
  tf.deriv = [a, c, polys, poly_eval](int k, double x) {
    double sig = 1.0 / (1.0 + std::exp(-a * (x - c)));
    return std::pow(a, k) * poly_eval(polys[size_t(k)], sig);
  };
  tf.norms[0] = 1.0;
  for (int k = 1; k < 8; ++k) {
    auto dk = [&tf, k](double x) { return tf.deriv(k, x); };
    tf.norms[size_t(k)] = 1.05 * scan_norm(dk, c - 40.0 / a, c + 40.0 / a, 40000);
  }
  tf.has_limit_at_inf = true;
  tf.limit_at_inf = 1.0;
  return tf;
}

TestFunction linear_combination(double ca, const TestFunction& f1, double cb,
                                const TestFunction& f2) {
  TestFunction tf;
  tf.label = "combo(" + f1.label + "," + f2.label + ")";
  auto e1 = f1.eval, e2 = f2.eval;
  auto d1 = f1.deriv, d2 = f2.deriv;
  tf.eval = [ca, cb, e1, e2](double x) { return ca * e1(x) + cb * e2(x); };
  tf.deriv = [ca, cb, d1, d2](int k, double x) { return ca * d1(k, x) + cb * d2(k, x); };
  for (int j = 0; j < 8; ++j)
    tf.norms[size_t(j)] =
        std::abs(ca) * f1.norms[size_t(j)] + std::abs(cb) * f2.norms[size_t(j)];
  if (f1.has_limit_at_inf && f2.has_limit_at_inf) {
    tf.has_limit_at_inf = true;
    tf.limit_at_inf = ca * f1.limit_at_inf + cb * f2.limit_at_inf;
  }
  return tf;
}

TestFunction parse_test_function(const std::string& spec) {
  std::string name = spec;
  std::string args;
  auto colon = spec.find(':');
  if (colon != std::string::npos) {
    name = spec.substr(0, colon);
    args = spec.substr(colon + 1);
  }
  std::map<std::string, double> kv;
  size_t pos = 0;
  while (pos < args.size()) {
    auto comma = args.find(',', pos);
    std::string item = args.substr(pos, comma == std::string::npos ? args.size() - pos
                                                                   : comma - pos);
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw validation_error("bad test-function argument '" + item + "'");
    try {
      kv[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw validation_error("bad test-function argument '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  auto get = [&kv](const std::string& key, double fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  };
  if (name == "sine") return make_sine(get("a", 1.0));
  if (name == "cosine") return make_cosine(get("a", 1.0));
  if (name == "gauss_bump") return make_gauss_bump(get("c", 4.0), get("s", 1.0));
  if (name == "logistic") return make_logistic(get("a", 1.0), get("c", 2.0));
  throw validation_error("unknown test function '" + name + "'");
}

double DominatingFunction::eval(const std::vector<double>& w) const {
  if (w.size() != B.size())
    throw validation_error("dominating function dimension mismatch");
  double v = A;
  for (size_t i = 0; i < B.size(); ++i)
    v += B[i] * std::pow(std::abs(w[i]), expo[i]);
  return v;
}

DominatingFunction dominating_quadratic_g(QuadMode mode, int r) {
  if (r < 2) throw validation_error("dominating function needs r >= 2");
  DominatingFunction P;
  if (mode == QuadMode::order3) {
    P.A = 4.0;
    P.B.assign(size_t(r), 16.0);
    P.expo.assign(size_t(r), 4.0);
  } else {
    P.A = 8.0;
    P.B.assign(size_t(r), 64.0);
    P.expo.assign(size_t(r), 6.0);
  }
  return P;
}

namespace {

struct Monomial {
  double coeff;
  int coord;  // -1 means constant
  double expo;
};

using Family = std::vector<Monomial>;

// Split a cross term |w_j|^a |w_k|^b into single-coordinate monomials of total
// degree a+b by the weighted arithmetic-geometric mean inequality.
void push_cross(Family& fam, double coeff, int j, double a, int k, double b) {
  if (j == k) {
    fam.push_back({coeff, j, a + b});
    return;
  }
  double t = a + b;
  fam.push_back({coeff * a / t, j, t});
  fam.push_back({coeff * b / t, k, t});
}

// Collapse a family to (A, B per coordinate) at the common exponent E using
// c|w|^e <= c + c|w|^E for 0 <= e <= E.
void family_envelope(const Family& fam, int d, double E, double& A, std::vector<double>& B) {
  A = 0.0;
  B.assign(size_t(d), 0.0);
  for (const auto& mono : fam) {
    if (mono.coord < 0 || mono.expo == 0.0) {
      A += mono.coeff;
      continue;
    }
    if (mono.expo > E + 1e-12)
      throw numeric_error("monomial degree exceeds envelope degree", mono.expo);
    if (mono.expo < E) A += mono.coeff;
    B[size_t(mono.coord)] += mono.coeff;
  }
}

}  // namespace

DominatingFunction pd_dominating_function(double lambda, const std::vector<double>& probs) {
  int d = int(probs.size());
  if (d < 2) throw validation_error("dominating function needs r >= 2");
  for (double p : probs)
    if (!(p > 0.0)) throw validation_error("probabilities must be positive");
  bool integer_lambda =
      std::abs(lambda - std::round(lambda)) < 1e-12 && std::round(lambda) >= 1.0;
  if (!integer_lambda && !(lambda >= 5.0))
    throw validation_error("lambda must be a positive integer or at least 5");
  if (integer_lambda && std::llround(lambda) == 1)
    return dominating_quadratic_g(QuadMode::order6, d);

  const double E = std::max(12.0, 6.0 * lambda);
  // Bounds on b and its derivatives, every n power already clamped at its
  // worst case n = 1: per coordinate,
  //   |b|       <= sum_j c3_j |w_j|^3 + cl_j |w_j|^{lambda+1}
  //   |d_j b|   <= d1 (p^-1/2 w^2 + p^{(1-l)/2} |w|^l)
  //   |d2_j b|  <= d2 (p^-1/2 |w| + p^{-(l-1)/2} |w|^{l-1})
  //   |dm_j b|  <= dm_m p^{1-m/2} (1 + p^{-(l+1-m)/2} |w|^{l+1-m}), m = 3..6.
  std::vector<double> c3(size_t(d), 0.0), cl(size_t(d), 0.0);
  double bpref = std::pow(2.0, lambda + 2.0) / (lambda * (lambda + 1.0));
  for (int j = 0; j < d; ++j) {
    c3[size_t(j)] = bpref / std::sqrt(probs[size_t(j)]);
    cl[size_t(j)] = bpref * std::pow(probs[size_t(j)], -(lambda - 1.0) / 2.0);
  }
  const double d1 = std::pow(2.0, lambda + 1.0) / lambda;
  const double d2 = std::pow(2.0, lambda);
  auto dm_coeff = [lambda](int m) {
    double c = std::pow(2.0, lambda + 2.0 - m);
    for (int i = 1; i <= m - 2; ++i) c *= std::abs(lambda - i);
    return c;
  };

  std::vector<Family> families;

  // Quantities of a(w) = sum w_j^2 at class order 6.
  {
    Family f;
    for (int j = 0; j < d; ++j) f.push_back({64.0, j, 6.0});
    families.push_back(f);
    families.push_back({{8.0, -1, 0.0}});
  }

  // |d^k b|^{6/k} per coordinate; b splits across coordinates so mixed
  // partials vanish.
  for (int j = 0; j < d; ++j) {
    double p = probs[size_t(j)];
    {
      Family f;
      double c = 32.0 * std::pow(d1, 6.0);  // (u+v)^6 <= 2^5 (u^6 + v^6)
      f.push_back({c * std::pow(p, -3.0), j, 12.0});
      f.push_back({c * std::pow(p, 3.0 * (1.0 - lambda)), j, 6.0 * lambda});
      families.push_back(f);
    }
    {
      Family f;
      double c = 4.0 * std::pow(d2, 3.0);  // (u+v)^3 <= 4 (u^3 + v^3)
      f.push_back({c * std::pow(p, -1.5), j, 3.0});
      f.push_back({c * std::pow(p, -1.5 * (lambda - 1.0)), j, 3.0 * (lambda - 1.0)});
      families.push_back(f);
    }
    for (int m = 3; m <= 6; ++m) {
      double cm = dm_coeff(m);
      if (cm == 0.0) continue;
      double q = 6.0 / m;
      double base = std::pow(cm * std::pow(p, 1.0 - m / 2.0), q) * std::pow(2.0, q - 1.0);
      Family f;
      f.push_back({base, -1, 0.0});
      double tail_expo = q * (lambda + 1.0 - m);
      f.push_back({base * std::pow(p, -0.5 * q * (lambda + 1.0 - m)), j, tail_expo});
      families.push_back(f);
    }
  }

  // |b| times the a quantities: |b| * 64 w_k^6 for each k, and |b| * 8.
  for (int k = 0; k < d; ++k) {
    Family f;
    for (int j = 0; j < d; ++j) {
      push_cross(f, 64.0 * c3[size_t(j)], j, 3.0, k, 6.0);
      push_cross(f, 64.0 * cl[size_t(j)], j, lambda + 1.0, k, 6.0);
    }
    families.push_back(f);
  }
  {
    Family f;
    for (int j = 0; j < d; ++j) {
      f.push_back({8.0 * c3[size_t(j)], j, 3.0});
      f.push_back({8.0 * cl[size_t(j)], j, lambda + 1.0});
    }
    families.push_back(f);
  }

  DominatingFunction Q;
  Q.A = 0.0;
  Q.B.assign(size_t(d), 0.0);
  Q.expo.assign(size_t(d), E);
  for (const auto& fam : families) {
    double A;
    std::vector<double> B;
    family_envelope(fam, d, E, A, B);
    Q.A = std::max(Q.A, A);
    for (int j = 0; j < d; ++j) Q.B[size_t(j)] = std::max(Q.B[size_t(j)], B[size_t(j)]);
  }
  return Q;
}

DominationReport verify_domination(const DerivEvaluator& g_derivs, const DominatingFunction& P,
                                   int m, const std::vector<std::vector<double>>& grid) {
  if (m < 1) throw validation_error("class order must be at least 1");
  DominationReport report;
  report.max_excess = -std::numeric_limits<double>::infinity();
  int d = P.dim();
  for (const auto& w : grid) {
    if (int(w.size()) != d) throw validation_error("grid point dimension mismatch");
    double pw = P.eval(w);
    for (int k = 1; k <= m; ++k) {
      std::vector<int> dirs(size_t(k), 0);
      // multisets of directions, nondecreasing
      while (true) {
        double q = std::pow(std::abs(g_derivs(dirs, w)), double(m) / k);
        double excess = q - pw;
        if (excess > report.max_excess) {
          report.max_excess = excess;
          report.worst_point = w;
          report.worst_dirs = dirs;
        }
        int pos = k - 1;
        while (pos >= 0 && dirs[size_t(pos)] == d - 1) --pos;
        if (pos < 0) break;
        int v = dirs[size_t(pos)] + 1;
        for (int i = pos; i < k; ++i) dirs[size_t(i)] = v;
      }
    }
  }
  report.pass = report.max_excess <= 1e-9;
  return report;
}

}  // namespace chi2rate::smooth
