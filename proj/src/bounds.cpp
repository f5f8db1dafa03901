#include "chi2rate/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/hypergeometric_1F1.hpp>

#include <Eigen/Dense>

#include "chi2rate/common.hpp"

namespace chi2rate::bounds {
namespace {

// Single-trial moment accessors used by the bound assemblies. The exact
// provider enumerates the score model; the crude provider substitutes the
// closed-form worst-case constants of the rank-model derivation.
struct MomentProvider {
  int d = 0;
  std::function<double(const std::vector<double>&)> abs_moment;  // E|prod X^a|
  std::function<double(const std::vector<double>&)> signed_abs;  // |E prod X^a|
  std::function<double(int, double)> w_moment;                   // E|W_t|^p
  std::function<double(int, double)> z_moment;                   // E|Z_t|^p
};

std::vector<double> powers_of(int d, std::initializer_list<int> idx) {
  std::vector<double> p(size_t(d), 0.0);
  for (int i : idx) p[size_t(i)] += 1.0;
  return p;
}

double total_degree(const std::vector<double>& powers) {
  return std::accumulate(powers.begin(), powers.end(), 0.0);
}

MomentProvider exact_provider(const moments::TrialModel& model, long long n) {
  MomentProvider mp;
  mp.d = model.dim();
  const auto cov = std::make_shared<moments::CovarianceMatrix>(model.covariance());
  mp.abs_moment = [model](const std::vector<double>& p) {
    return model.mixed_abs_moment(p, false);
  };
  mp.signed_abs = [model](const std::vector<double>& p) {
    return std::fabs(model.mixed_abs_moment(p, true));
  };
  mp.w_moment = [model, n](int t, double p) { return model.w_abs_moment(t, p, n); };
  mp.z_moment = [cov](int t, double p) {
    return moments::gaussian_abs_moment(cov->at(t, t), p);
  };
  return mp;
}

double crude_abs_by_degree(double deg) {
  auto near = [deg](double v) { return std::fabs(deg - v) < 1e-9; };
  if (near(1.0) || near(2.0)) return 1.0;
  if (near(4.0)) return std::pow(9.0 / 5.0, 0.25);
  if (near(6.0)) return std::pow(27.0 / 7.0, 1.0 / 6.0);
  if (near(8.0)) return std::pow(9.0, 0.125);
  std::ostringstream os;
  os << "crude moment mode has no constant for total degree " << deg;
  throw validation_error(os.str());
}

MomentProvider crude_provider(int d) {
  MomentProvider mp;
  mp.d = d;
  mp.abs_moment = [](const std::vector<double>& p) {
    return crude_abs_by_degree(total_degree(p));
  };
  mp.signed_abs = [](const std::vector<double>& p) {
    if (std::fabs(total_degree(p) - 2.0) < 1e-9) return 1.0;
    throw validation_error("crude moment mode bounds signed moments of degree two only");
  };
  mp.w_moment = [](int, double p) {
    if (std::fabs(p - 4.0) < 1e-9) return 24.0 / 5.0;
    throw validation_error("crude moment mode knows E|W|^4 only");
  };
  mp.z_moment = [](int, double p) {
    if (std::fabs(p - 4.0) < 1e-9) return 3.0;
    throw validation_error("crude moment mode knows E|Z|^4 only");
  };
  return mp;
}

// Shared t-sum: sum_t outer^{r_t} B_t (2^{r_t} base EW_t^{r_t}
//   + (2^{r_t}/n^{r_t/2}) cross(t) + zfac(t) base).
// base is the moment multiplying the W and Z factors, cross(t) the moment with
// the extra power r_t attached to coordinate t.
double t_sum(const MomentProvider& mp, const smooth::DominatingFunction& P, long long n,
             double outer_base, double base, const std::function<double(int, double)>& cross,
             const std::function<double(int)>& zfac) {
  double s = 0.0;
  for (int t = 0; t < mp.d; ++t) {
    double rt = P.expo[size_t(t)];
    double Bt = P.B[size_t(t)];
    if (Bt == 0.0) continue;
    double two_rt = std::pow(2.0, rt);
    double outer = std::pow(outer_base, rt);
    s += outer * Bt *
         (two_rt * base * mp.w_moment(t, rt) +
          two_rt / std::pow(double(n), rt / 2.0) * cross(t, rt) + zfac(t) * base);
  }
  return s;
}

struct BlockParts {
  double main_part = 0.0;
  double pair_part = 0.0;
};

// The third-order structure shared by the half-rate bounds and the h6 block:
//   sum_{jkl} { A E|XjXkXl| + t-sum over E|XjXkXl Xt^{rt}| }
//   + 2 (sum_{jk} |E XjXk|) sum_l { A E|Xl| + t-sum over E|Xl Xt^{rt}| }.
BlockParts third_order_structure(const MomentProvider& mp, const smooth::DominatingFunction& P,
                                 long long n, double outer_base,
                                 const std::function<double(int)>& zfac) {
  BlockParts parts;
  for (int j = 0; j < mp.d; ++j) {
    for (int k = 0; k < mp.d; ++k) {
      for (int l = 0; l < mp.d; ++l) {
        auto pw = powers_of(mp.d, {j, k, l});
        double m3 = mp.abs_moment(pw);
        auto cross = [&](int t, double rt) {
          auto px = pw;
          px[size_t(t)] += rt;
          return mp.abs_moment(px);
        };
        parts.main_part += P.A * m3 + t_sum(mp, P, n, outer_base, m3, cross, zfac);
      }
    }
  }
  double s2 = 0.0;
  for (int j = 0; j < mp.d; ++j)
    for (int k = 0; k < mp.d; ++k) s2 += mp.signed_abs(powers_of(mp.d, {j, k}));
  double inner = 0.0;
  for (int l = 0; l < mp.d; ++l) {
    auto pw = powers_of(mp.d, {l});
    double m1 = mp.abs_moment(pw);
    auto cross = [&](int t, double rt) {
      auto px = pw;
      px[size_t(t)] += rt;
      return mp.abs_moment(px);
    };
    inner += P.A * m1 + t_sum(mp, P, n, outer_base, m1, cross, zfac);
  }
  parts.pair_part = 2.0 * s2 * inner;
  return parts;
}

// First sub-block of the fourth-order structure: sum over quadruples jklm.
double fourth_order_main(const MomentProvider& mp, const smooth::DominatingFunction& P,
                         long long n, const std::function<double(int)>& zfac) {
  double total = 0.0;
  for (int j = 0; j < mp.d; ++j) {
    for (int k = 0; k < mp.d; ++k) {
      for (int l = 0; l < mp.d; ++l) {
        for (int m = 0; m < mp.d; ++m) {
          auto pw = powers_of(mp.d, {j, k, l, m});
          double m4 = mp.abs_moment(pw);
          auto cross = [&](int t, double rt) {
            auto px = pw;
            px[size_t(t)] += rt;
            return mp.abs_moment(px);
          };
          total += P.A * m4 + t_sum(mp, P, n, 2.0, m4, cross, zfac);
        }
      }
    }
  }
  return total;
}

// Second sub-block: 9 (sum_{jk} |E XjXk|) sum_{lm} { A E|XlXm| + t-sum }.
double fourth_order_pair(const MomentProvider& mp, const smooth::DominatingFunction& P,
                         long long n, const std::function<double(int)>& zfac) {
  double s2 = 0.0;
  for (int j = 0; j < mp.d; ++j)
    for (int k = 0; k < mp.d; ++k) s2 += mp.signed_abs(powers_of(mp.d, {j, k}));
  double inner = 0.0;
  for (int l = 0; l < mp.d; ++l) {
    for (int m = 0; m < mp.d; ++m) {
      auto pw = powers_of(mp.d, {l, m});
      double m2 = mp.abs_moment(pw);
      auto cross = [&](int t, double rt) {
        auto px = pw;
        px[size_t(t)] += rt;
        return mp.abs_moment(px);
      };
      inner += P.A * m2 + t_sum(mp, P, n, 2.0, m2, cross, zfac);
    }
  }
  return 9.0 * s2 * inner;
}

// Third sub-block of the even-g bound: 3 (sum_{jkl} |E XjXkXl|) sum_m { ... }.
// The cross term here carries the bare moment E|Xt^{rt}| exactly as displayed.
double fourth_order_triple(const MomentProvider& mp, const smooth::DominatingFunction& P,
                           long long n, const std::function<double(int)>& zfac) {
  double s3 = 0.0;
  for (int j = 0; j < mp.d; ++j)
    for (int k = 0; k < mp.d; ++k)
      for (int l = 0; l < mp.d; ++l) s3 += mp.signed_abs(powers_of(mp.d, {j, k, l}));
  if (s3 == 0.0) return 0.0;
  double inner = 0.0;
  for (int m = 0; m < mp.d; ++m) {
    auto pw = powers_of(mp.d, {m});
    double m1 = mp.abs_moment(pw);
    auto cross = [&](int t, double rt) {
      auto px = powers_of(mp.d, {});
      px[size_t(t)] += rt;
      return mp.abs_moment(px);
    };
    inner += P.A * m1 + t_sum(mp, P, n, 2.0, m1, cross, zfac);
  }
  return 3.0 * s3 * inner;
}

double signed_third_sum(const MomentProvider& mp) {
  double s3 = 0.0;
  for (int j = 0; j < mp.d; ++j)
    for (int k = 0; k < mp.d; ++k)
      for (int l = 0; l < mp.d; ++l) s3 += mp.signed_abs(powers_of(mp.d, {j, k, l}));
  return s3;
}

std::string model_label(const moments::TrialModel& model) {
  std::ostringstream os;
  switch (model.kind()) {
    case moments::TrialModel::Kind::rank:
      os << "rank(r=" << model.dim() << ")";
      break;
    case moments::TrialModel::Kind::pearson: {
      os << "pearson(p=";
      const auto& p = model.probs();
      for (size_t i = 0; i < p.size(); ++i) os << (i ? "," : "") << p[i];
      os << ")";
      break;
    }
    case moments::TrialModel::Kind::independent_sign:
      os << "sign(d=" << model.dim() << ")";
      break;
  }
  return os.str();
}

std::string echo_inputs(const BoundInputs& in) {
  std::ostringstream os;
  os << "model=" << model_label(in.model) << " n=" << in.n << " P(A=" << in.P.A;
  os << " B=";
  for (size_t i = 0; i < in.P.B.size(); ++i) os << (i ? "," : "") << in.P.B[i];
  os << " e=";
  for (size_t i = 0; i < in.P.expo.size(); ++i) os << (i ? "," : "") << in.P.expo[i];
  os << ") tf=" << in.tf.label;
  if (in.crude) os << " crude";
  return os.str();
}

void validate_common(const BoundInputs& in) {
  if (in.n < 1) throw validation_error("sample size must be at least 1");
  if (in.P.dim() != in.model.dim())
    throw validation_error("dominating function dimension does not match the model");
  if (int(in.P.expo.size()) != in.P.dim())
    throw validation_error("dominating function has mismatched coefficient lists");
}

BoundReport finish_report(BoundReport rep) {
  double s = 0.0;
  for (const auto& t : rep.terms) s += t.second;
  double scale = std::max(1.0, std::fabs(rep.value));
  if (!(std::fabs(s - rep.value) <= 1e-9 * scale))
    throw numeric_error("bound decomposition does not sum to the reported value",
                        std::fabs(s - rep.value));
  if (!(rep.value >= 0.0) || !std::isfinite(rep.value))
    throw numeric_error("bound value is not a finite nonnegative number", rep.value);
  return rep;
}

// E[ |Y| |V|^p ] for jointly Gaussian (Y, V), mean zero, Var Y = sy2,
// Var V = sv2, Cov(Y, V) = cyv. Used for the whitened-direction cross moments
// where Y is a coordinate of the inverse-root transform and V a limit
// coordinate; their covariance is 0 or 1 by construction.
double gaussian_cross_abs_moment(double sy2, double sv2, double cyv, double p) {
  if (p == 0.0) return moments::gaussian_abs_moment(sy2, 1.0);
  double sy = std::sqrt(sy2);
  double sv = std::sqrt(sv2);
  double rho = cyv / (sy * sv);
  if (std::fabs(rho) < 1e-14)
    return moments::gaussian_abs_moment(sy2, 1.0) * moments::gaussian_abs_moment(sv2, p);
  if (1.0 - rho * rho < 1e-12) {
    // Y is almost surely proportional to V.
    return (sy / sv) * moments::gaussian_abs_moment(sv2, p + 1.0);
  }
  double pr = std::round(p);
  bool even_int = std::fabs(p - pr) < 1e-12 && std::fmod(pr, 2.0) == 0.0;
  if (even_int) {
    int ip = int(pr);
    double total = 0.0;
    double binom = 1.0;
    for (int k = 0; k <= ip; ++k) {
      if (k % 2 == 0) {
        int q = ip - k;  // even
        double dfact = 1.0;
        for (int v = q - 1; v >= 2; v -= 2) dfact *= v;
        total += binom * std::pow(rho, k) * std::pow(1.0 - rho * rho, (ip - k) / 2.0) *
                 moments::gaussian_abs_moment(1.0, k + 1.0) * dfact;
      }
      binom = binom * (ip - k) / (k + 1);
    }
    return sy * std::pow(sv, p) * total;
  }
  // General exponent: condition on Y and use the absolute moment of a
  // noncentral Gaussian via Kummer's function.
  double beta = cyv / sy2;            // regression slope of V on Y
  double tau2 = sv2 - cyv * cyv / sy2;  // residual variance
  double tau = std::sqrt(tau2);
  double base = std::pow(tau, p) * std::pow(2.0, p / 2.0) *
                boost::math::tgamma((p + 1.0) / 2.0) / std::sqrt(M_PI);
  auto cond = [&](double y) {
    double mu = beta * y;
    double z = -mu * mu / (2.0 * tau2);
    return base * boost::math::hypergeometric_1F1(-p / 2.0, 0.5, z);
  };
  auto integrand = [&](double y) {
    double phi = std::exp(-y * y / (2.0 * sy2)) / (sy * std::sqrt(2.0 * M_PI));
    return y * phi * (cond(y) + cond(-y));
  };
  boost::math::quadrature::gauss_kronrod<double, 31> gk;
  double err = 0.0;
  double val = gk.integrate(integrand, 0.0, 12.0 * sy, 10, 1e-12, &err);
  if (err > 1e-8 * std::max(1.0, std::fabs(val)))
    throw numeric_error("cross moment quadrature did not converge", err);
  return val;
}

}  // namespace

BoundReport friedman_bound(int r, long long n, const smooth::TestFunction& tf) {
  if (r < 2) throw validation_error("need at least two treatments");
  if (n < 1) throw validation_error("sample size must be at least 1");
  double h4 = smooth::h_m(tf, 4);
  BoundReport rep;
  rep.value = 10797.0 * std::pow(double(r), 5.0) * h4 / double(n);
  rep.terms = {{"closed_form", rep.value}};
  rep.regime = "friedman_closed_form";
  std::ostringstream os;
  os << "r=" << r << " n=" << n << " tf=" << tf.label;
  rep.inputs_echo = os.str();
  return finish_report(std::move(rep));
}

ConstantCheckReport verify_thm1_constant(int r_max) {
  if (r_max < 2) throw validation_error("need at least two treatments");
  ConstantCheckReport report;
  report.pass = true;
  const long long n = 1;  // worst case of the bracket
  for (int r = 2; r <= r_max; ++r) {
    smooth::DominatingFunction P;
    P.A = 4.0;
    P.B.assign(size_t(r), 16.0);
    P.expo.assign(size_t(r), 4.0);
    MomentProvider mp = crude_provider(r);
    auto zfac = [&](int t) { return mp.z_moment(t, P.expo[size_t(t)]); };
    double sub1 = fourth_order_main(mp, P, n, zfac);
    double sub2 = fourth_order_pair(mp, P, n, zfac);
    // Per unit h_4; the 1/(24 n^2) prefactor times the trial factor n.
    double lhs = (sub1 + sub2) / (24.0 * double(n));
    double cap = 10797.0 * std::pow(double(r), 5.0);
    ConstantCheckRow row;
    row.r = r;
    row.bracket = lhs;
    row.cap = cap;
    row.margin = 1.0 - lhs / cap;
    row.pass = lhs <= cap;
    report.pass = report.pass && row.pass;
    report.rows.push_back(row);
  }
  return report;
}

BoundReport bound_general_halfrate(const BoundInputs& in) {
  validate_common(in);
  if (in.crude)
    throw validation_error("crude moment mode applies to the zero-third-moment bound only");
  double h3 = smooth::h_m(in.tf, 3);
  MomentProvider mp = exact_provider(in.model, in.n);
  auto zfac = [&](int t) { return mp.z_moment(t, in.P.expo[size_t(t)]); };
  BlockParts parts = third_order_structure(mp, in.P, in.n, 2.0, zfac);
  double pref = h3 / (6.0 * std::pow(double(in.n), 1.5)) * double(in.n);
  BoundReport rep;
  rep.terms = {{"third_order_block", pref * parts.main_part},
               {"pair_block", pref * parts.pair_part}};
  rep.value = rep.terms[0].second + rep.terms[1].second;
  rep.regime = "halfrate_nnd";
  rep.inputs_echo = echo_inputs(in);
  return finish_report(std::move(rep));
}

BoundReport bound_general_halfrate_pd(const BoundInputs& in) {
  validate_common(in);
  if (in.crude)
    throw validation_error("crude moment mode applies to the zero-third-moment bound only");
  double h2 = smooth::h_m(in.tf, 2);
  const int d = in.model.dim();
  auto cov = in.model.covariance();
  Eigen::MatrixXd S(d, d);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) S(j, k) = cov.at(j, k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success)
    throw numeric_error("covariance eigendecomposition failed", 0.0);
  if (es.eigenvalues().minCoeff() <= 1e-10)
    throw validation_error("covariance matrix is not positive definite");
  Eigen::MatrixXd Sinv = S.inverse();

  MomentProvider mp = exact_provider(in.model, in.n);
  double best = 0.0;
  int best_s = -1;
  BlockParts best_parts;
  double best_eys = 0.0;
  for (int s = 0; s < d; ++s) {
    double sy2 = Sinv(s, s);
    double eys = moments::gaussian_abs_moment(sy2, 1.0);
    auto zfac = [&](int t) {
      double rt = in.P.expo[size_t(t)];
      double cyv = (s == t) ? 1.0 : 0.0;
      return gaussian_cross_abs_moment(sy2, cov.at(t, t), cyv, rt) / eys;
    };
    BlockParts parts = third_order_structure(mp, in.P, in.n, 2.0, zfac);
    double total = eys * (parts.main_part + parts.pair_part);
    if (best_s < 0 || total < best) {
      best = total;
      best_s = s;
      best_parts = parts;
      best_eys = eys;
    }
  }
  double pref = h2 / (2.0 * std::pow(double(in.n), 1.5)) * double(in.n);
  BoundReport rep;
  rep.terms = {{"third_order_block", pref * best_eys * best_parts.main_part},
               {"pair_block", pref * best_eys * best_parts.pair_part}};
  rep.value = rep.terms[0].second + rep.terms[1].second;
  std::ostringstream os;
  os << "halfrate_pd(s=" << best_s << ")";
  rep.regime = os.str();
  rep.inputs_echo = echo_inputs(in);
  return finish_report(std::move(rep));
}

namespace {

// The h4/(24 n^2) block of the even-g bound: three sub-blocks; the zero-third
// bound keeps the first two.
struct FourthBlock {
  double main_part = 0.0;
  double pair_part = 0.0;
  double triple_part = 0.0;
};

FourthBlock fourth_block(const MomentProvider& mp, const smooth::DominatingFunction& P,
                         long long n, bool with_triple) {
  auto zfac = [&](int t) { return mp.z_moment(t, P.expo[size_t(t)]); };
  FourthBlock fb;
  fb.main_part = fourth_order_main(mp, P, n, zfac);
  fb.pair_part = fourth_order_pair(mp, P, n, zfac);
  if (with_triple) fb.triple_part = fourth_order_triple(mp, P, n, zfac);
  return fb;
}

}  // namespace

BoundReport bound_even_M(const BoundInputs& in) {
  validate_common(in);
  if (in.crude)
    throw validation_error("crude moment mode applies to the zero-third-moment bound only");
  double h4 = smooth::h_m(in.tf, 4);
  double h6 = smooth::h_m(in.tf, 6);
  MomentProvider mp = exact_provider(in.model, in.n);
  double n2 = double(in.n) * double(in.n);

  FourthBlock fb = fourth_block(mp, in.P, in.n, true);
  double h4_block =
      h4 / (24.0 * n2) * double(in.n) * (fb.main_part + fb.pair_part + fb.triple_part);

  double s3 = signed_third_sum(mp);
  double h6_block = 0.0;
  if (s3 > 0.0 && h6 > 0.0) {
    auto zfac6 = [&](int t) { return 2.0 * mp.z_moment(t, in.P.expo[size_t(t)] + 1.0); };
    BlockParts parts6 = third_order_structure(mp, in.P, in.n, 3.0, zfac6);
    h6_block = h6 / (72.0 * n2 * double(in.n)) * n2 * s3 *
               (parts6.main_part + parts6.pair_part);
  }

  BoundReport rep;
  rep.terms = {{"h4_block", h4_block}, {"h6_block", h6_block}};
  rep.value = h4_block + h6_block;
  rep.regime = "even_M";
  rep.inputs_echo = echo_inputs(in);
  return finish_report(std::move(rep));
}

BoundReport bound_zero_third_moment(const BoundInputs& in) {
  validate_common(in);
  std::vector<int> bad;
  if (!in.model.third_moments_vanish(&bad)) {
    std::ostringstream os;
    os << "nonzero signed third moment at index triple (" << bad[0] << "," << bad[1] << ","
       << bad[2] << ")";
    throw validation_error(os.str());
  }
  MomentProvider mp;
  if (in.crude) {
    if (in.model.kind() != moments::TrialModel::Kind::rank)
      throw validation_error("crude moment mode supports the rank score model only");
    for (int t = 0; t < in.P.dim(); ++t) {
      if (in.P.A != 4.0 || in.P.B[size_t(t)] != 16.0 || in.P.expo[size_t(t)] != 4.0)
        throw validation_error(
            "crude moment mode requires the order-3 envelope 4 + 16 sum w^4");
    }
    mp = crude_provider(in.model.dim());
  } else {
    mp = exact_provider(in.model, in.n);
  }
  double h4 = smooth::h_m(in.tf, 4);
  FourthBlock fb = fourth_block(mp, in.P, in.n, false);
  double n2 = double(in.n) * double(in.n);
  double pref = h4 / (24.0 * n2) * double(in.n);
  BoundReport rep;
  rep.terms = {{"fourth_order_block", pref * fb.main_part},
               {"pair_block", pref * fb.pair_part}};
  rep.value = rep.terms[0].second + rep.terms[1].second;
  rep.regime = in.crude ? "zero_third_crude" : "zero_third";
  rep.inputs_echo = echo_inputs(in);
  return finish_report(std::move(rep));
}

BoundReport bound_relaxed_even(const BoundInputs& in) {
  validate_common(in);
  double lam = in.lambda;
  bool pos_int = lam > 0.0 && std::fabs(lam - std::round(lam)) < 1e-9;
  if (!(pos_int || lam >= 5.0))
    throw validation_error("lambda must be a positive integer or at least 5");
  BoundReport base = bound_even_M(in);
  MomentProvider mp = exact_provider(in.model, in.n);
  double s3 = signed_third_sum(mp);
  double bracket = in.P.A;
  for (int t = 0; t < in.P.dim(); ++t) {
    double rt = in.P.expo[size_t(t)];
    bracket += std::pow(2.0, rt + 1.0) * in.P.B[size_t(t)] * mp.z_moment(t, rt);
  }
  double h3t = smooth::h_tilde_m(in.tf, 3);
  double corr = h3t / (6.0 * double(in.n) * double(in.n)) * double(in.n) * s3 * bracket;
  BoundReport rep;
  rep.terms = base.terms;
  rep.terms.emplace_back("odd_part_correction", corr);
  rep.value = base.value + corr;
  rep.regime = "relaxed_even";
  rep.inputs_echo = echo_inputs(in);
  return finish_report(std::move(rep));
}

}  // namespace chi2rate::bounds
