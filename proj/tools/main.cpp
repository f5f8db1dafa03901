#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "chi2rate/acceptance.hpp"
#include "chi2rate/bounds.hpp"
#include "chi2rate/common.hpp"
#include "chi2rate/dist.hpp"
#include "chi2rate/moments.hpp"
#include "chi2rate/smooth.hpp"
#include "chi2rate/stat.hpp"
#include "chi2rate/stein.hpp"

namespace {

using nlohmann::json;
namespace c2 = chi2rate;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Statistic values keep a trailing .0 so integers still read as reals.
std::string fmt_value(double v) {
  std::string s = fmt(v);
  if (s.find_first_of(".einf") == std::string::npos) s += ".0";
  return s;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw c2::validation_error("empty numeric list");
  return out;
}

std::vector<std::vector<int>> parse_int_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw c2::validation_error("cannot open " + path);
  std::vector<std::vector<int>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<int> row;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) row.push_back(std::stoi(item));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw c2::validation_error("no rows in " + path);
  return rows;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream f(std::filesystem::path(dir) / name);
  if (!f) throw c2::validation_error("cannot write " + name + " under " + dir);
  return f;
}

struct StatOptions {
  std::string ranks_path;
  std::string counts_path;
  std::string counts_inline;
  std::string probs;
  std::string statistic = "friedman";
  double lambda = 1.0;
};

int run_stat(const StatOptions& opt) {
  if (!opt.ranks_path.empty()) {
    auto rm = c2::stat::RankMatrix::from_rows(parse_int_csv(opt.ranks_path));
    std::cout << "friedman=" << fmt_value(c2::stat::friedman(rm)) << "\n";
    return 0;
  }
  std::vector<long long> counts;
  if (!opt.counts_inline.empty()) {
    for (double v : parse_list(opt.counts_inline)) counts.push_back(std::llround(v));
  } else if (!opt.counts_path.empty()) {
    for (int v : parse_int_csv(opt.counts_path).at(0)) counts.push_back(v);
  } else {
    throw c2::validation_error("need --ranks, --counts, or --counts-inline");
  }
  std::vector<double> probs;
  if (opt.probs.empty()) {
    probs.assign(counts.size(), 1.0 / double(counts.size()));
  } else {
    probs = parse_list(opt.probs);
  }
  auto cc = c2::stat::CellCounts::from(counts, probs);
  if (opt.statistic == "pearson") {
    std::cout << "pearson=" << fmt_value(c2::stat::pearson(cc)) << "\n";
  } else if (opt.statistic == "pd" || opt.statistic == "friedman") {
    auto idx = c2::stat::PdIndex::from(opt.lambda);
    std::cout << "pd=" << fmt_value(c2::stat::power_divergence(cc, idx)) << "\n";
  } else {
    throw c2::validation_error("unknown statistic " + opt.statistic);
  }
  return 0;
}

struct ModelOptions {
  std::string model = "rank";
  int r = 3;
  std::string probs;

  c2::moments::TrialModel trial_model() const {
    if (model == "rank") return c2::moments::TrialModel::rank(r);
    if (model == "pearson") return c2::moments::TrialModel::pearson(parse_list(probs));
    if (model == "sign") return c2::moments::TrialModel::independent_sign(r);
    throw c2::validation_error("unknown model " + model);
  }

  c2::moments::CovarianceMatrix covariance() const {
    if (model == "rank") return c2::moments::friedman_covariance(r);
    if (model == "pearson") return c2::moments::pearson_covariance(parse_list(probs));
    return trial_model().covariance();
  }
};

int run_cov(const ModelOptions& opt) {
  auto cov = opt.covariance();
  std::cout << "row,col,value\n";
  for (int j = 0; j < cov.r; ++j)
    for (int k = 0; k < cov.r; ++k)
      std::cout << j << "," << k << "," << fmt(cov.at(j, k)) << "\n";
  return 0;
}

int run_moments(int r, long long n) {
  auto mt = c2::moments::closed_form_moments(r);
  std::cout << "quantity,value,numerator,denominator\n";
  const struct {
    const char* name;
    double v;
    c2::Rational e;
  } rows[] = {
      {"x2", mt.x2, mt.x2_exact},
      {"x4", mt.x4, mt.x4_exact},
      {"x6", mt.x6, mt.x6_exact},
      {"x8", mt.x8, mt.x8_exact},
      {"w4", c2::moments::w4_moment(r, n), c2::moments::w4_moment_exact(r, n)},
  };
  for (const auto& row : rows) {
    std::cout << row.name << "," << fmt(row.v) << "," << numerator(row.e).str() << ","
              << denominator(row.e).str() << "\n";
  }
  return 0;
}

struct BoundOptions {
  ModelOptions model;
  std::string family = "friedman";
  long long n = 100;
  std::string tf = "sine:a=0.5";
  double lambda = 1.0;
  bool crude = false;
  std::string quad;  // order3 | order6 | pd; default depends on family
};

int run_bound(const BoundOptions& opt) {
  auto tf = c2::smooth::parse_test_function(opt.tf);
  c2::bounds::BoundReport rep;
  if (opt.family == "friedman") {
    rep = c2::bounds::friedman_bound(opt.model.r, opt.n, tf);
  } else {
    c2::bounds::BoundInputs in;
    in.model = opt.model.trial_model();
    in.n = opt.n;
    in.tf = tf;
    in.crude = opt.crude;
    in.lambda = opt.lambda;
    std::string quad = opt.quad;
    if (quad.empty()) quad = (opt.family == "even") ? "order6" : "order3";
    if (opt.family == "relaxed") quad = "pd";
    int d = in.model.dim();
    if (quad == "order3") {
      in.P = c2::smooth::dominating_quadratic_g(c2::smooth::QuadMode::order3, d);
    } else if (quad == "order6") {
      in.P = c2::smooth::dominating_quadratic_g(c2::smooth::QuadMode::order6, d);
    } else if (quad == "pd") {
      in.P = c2::smooth::pd_dominating_function(opt.lambda, in.model.probs());
    } else {
      throw c2::validation_error("unknown envelope " + quad);
    }
    if (opt.family == "halfrate") {
      rep = c2::bounds::bound_general_halfrate(in);
    } else if (opt.family == "halfrate-pd") {
      rep = c2::bounds::bound_general_halfrate_pd(in);
    } else if (opt.family == "even") {
      rep = c2::bounds::bound_even_M(in);
    } else if (opt.family == "zero-third") {
      rep = c2::bounds::bound_zero_third_moment(in);
    } else if (opt.family == "relaxed") {
      rep = c2::bounds::bound_relaxed_even(in);
    } else {
      throw c2::validation_error("unknown bound family " + opt.family);
    }
  }
  std::cout << "value=" << fmt(rep.value) << "\n";
  std::cout << "regime=" << rep.regime << "\n";
  std::cout << "term,value\n";
  for (const auto& t : rep.terms) std::cout << t.first << "," << fmt(t.second) << "\n";
  return 0;
}

struct DistOptions {
  ModelOptions model;
  std::string statistic = "friedman";
  double lambda = 1.0;
  long long n = 4;
};

c2::dist::StatisticSpec statistic_spec(const std::string& name, double lambda) {
  if (name == "friedman") return c2::dist::StatisticSpec::friedman();
  if (name == "pearson") return c2::dist::StatisticSpec::pearson();
  if (name == "pd") return c2::dist::StatisticSpec::pd(lambda);
  throw c2::validation_error("unknown statistic " + name);
}

int run_dist(const DistOptions& opt) {
  c2::dist::LatticeDistribution ld;
  if (opt.model.model == "rank") {
    ld = c2::dist::exact_friedman_distribution(opt.model.r, opt.n);
  } else if (opt.model.model == "pearson") {
    ld = c2::dist::exact_multinomial_distribution(parse_list(opt.model.probs), opt.n,
                                                 statistic_spec(opt.statistic, opt.lambda));
  } else {
    throw c2::validation_error("distribution needs a rank or pearson model");
  }
  std::cout << "value,prob\n";
  for (size_t i = 0; i < ld.values.size(); ++i)
    std::cout << fmt(ld.values[i]) << "," << fmt(ld.probs[i]) << "\n";
  if (ld.diverged_mass > 0.0) std::cout << "diverged," << fmt(ld.diverged_mass) << "\n";
  return 0;
}

struct RateOptions {
  std::string config_path;
  std::string out_dir;
  std::string mode_override;
  long long reps_override = 0;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
};

int run_rate(const RateOptions& opt) {
  std::ifstream cf(opt.config_path);
  if (!cf) throw c2::validation_error("cannot open config " + opt.config_path);
  json cfg = json::parse(cf);

  std::vector<std::array<double, 3>> pts;
  std::vector<double> caps;
  std::vector<long long> grid;

  if (cfg.contains("synthetic_deltas")) {
    for (const auto& row : cfg.at("synthetic_deltas")) {
      double n = row.at(0).get<double>();
      double delta = row.at(1).get<double>();
      double se = row.size() > 2 ? row.at(2).get<double>() : 0.0;
      pts.push_back({n, delta, se});
      grid.push_back(std::llround(n));
      caps.push_back(0.0);
    }
  } else {
    auto tf = c2::smooth::parse_test_function(cfg.value("test_function", "sine:a=0.5"));
    const json& jm = cfg.at("model");
    c2::dist::ModelSpec model = jm.at("kind") == "rank"
                                    ? c2::dist::ModelSpec::rank(jm.at("r").get<int>())
                                    : c2::dist::ModelSpec::pearson(
                                          jm.at("probs").get<std::vector<double>>());
    const json& js = cfg.at("statistic");
    auto spec = statistic_spec(js.at("kind").get<std::string>(), js.value("lambda", 1.0));
    std::string mode = opt.mode_override.empty() ? cfg.value("mode", "exact") : opt.mode_override;
    long long reps = opt.reps_override > 0 ? opt.reps_override : cfg.value("reps", 200000LL);
    std::uint64_t seed = opt.seed_set ? opt.seed_override : cfg.value("seed", 1ULL);
    std::string bound_kind = cfg.value("bound", "none");
    for (const auto& jn : cfg.at("grid")) {
      long long n = jn.get<long long>();
      auto dm = (mode == "mc") ? c2::dist::DistanceMode::mc_mode(reps, seed)
                               : c2::dist::DistanceMode::exact_mode();
      auto res = c2::dist::smooth_distance(model, spec, tf, n, dm);
      pts.push_back({double(n), res.delta, res.std_error});
      grid.push_back(n);
      if (bound_kind == "friedman" && model.kind == c2::dist::ModelSpec::Kind::rank) {
        caps.push_back(c2::bounds::friedman_bound(model.r, n, tf).value);
      } else {
        caps.push_back(0.0);
      }
    }
  }

  auto fit = c2::dist::fit_rate(pts);
  std::ostringstream csv;
  csv << "n,delta,stderr,bound\n";
  for (size_t i = 0; i < pts.size(); ++i) {
    csv << grid[i] << "," << fmt(pts[i][1]) << "," << fmt(pts[i][2]) << "," << fmt(caps[i])
        << "\n";
  }
  double lo = fit.beta - 1.96 * fit.beta_stderr;
  double hi = fit.beta + 1.96 * fit.beta_stderr;
  std::ostringstream fitline;
  fitline << "beta=" << fmt(fit.beta) << " ci=[" << fmt(lo) << "," << fmt(hi) << "]";

  std::cout << csv.str() << fitline.str() << "\n";

  std::string out_dir = !opt.out_dir.empty() ? opt.out_dir : cfg.value("out", "");
  if (!out_dir.empty()) {
    auto f = open_out(out_dir, "rate.csv");
    f << csv.str() << fitline.str() << "\n";
    auto g = open_out(out_dir, "rate.dat");
    g << "# n delta stderr bound\n";
    for (size_t i = 0; i < pts.size(); ++i) {
      g << grid[i] << " " << fmt(pts[i][1]) << " " << fmt(pts[i][2]) << " " << fmt(caps[i])
        << "\n";
    }
  }

  if (cfg.contains("beta_window")) {
    double wlo = cfg.at("beta_window").at(0).get<double>();
    double whi = cfg.at("beta_window").at(1).get<double>();
    if (!(fit.beta >= wlo && fit.beta <= whi)) {
      std::cerr << "rate outside window [" << wlo << "," << whi << "]\n";
      return 1;
    }
  }
  return 0;
}

int run_stein_check(const std::string& out_dir) {
  auto tf = c2::smooth::make_sine(0.5);
  struct Problem {
    std::string name;
    c2::stein::SteinProblem sp;
    c2::smooth::DominatingFunction P;
    std::vector<std::vector<double>> points;
  };
  std::vector<Problem> problems;
  {
    c2::moments::CovarianceMatrix unit;
    unit.r = 1;
    unit.entries = {{1.0}};
    Problem p;
    p.name = "scalar";
    p.sp = c2::stein::make_problem(c2::stein::quadratic_target(1), tf, unit);
    p.P = c2::smooth::DominatingFunction{4.0, {16.0}, {4.0}};
    for (double w : {0.0, 0.5, -0.5, 1.0, -1.0}) p.points.push_back({w});
    problems.push_back(std::move(p));
  }
  {
    Problem p;
    p.name = "pearson2";
    p.sp = c2::stein::make_problem(c2::stein::quadratic_target(2), tf,
                                   c2::moments::pearson_covariance({0.5, 0.5}));
    p.P = c2::smooth::dominating_quadratic_g(c2::smooth::QuadMode::order3, 2);
    const double u = 1.0 / std::sqrt(2.0);
    for (double a : {0.0, 0.6, -0.6, 1.2}) p.points.push_back({a * u, -a * u});
    problems.push_back(std::move(p));
  }

  std::ostringstream csv;
  csv << "problem,check,point,dirs,value,bound,margin,pass\n";
  bool all_pass = true;
  for (auto& p : problems) {
    for (const auto& w : p.points) {
      double res = c2::stein::stein_residual(p.sp, w);
      bool ok = res <= 1e-3;
      all_pass = all_pass && ok;
      std::ostringstream pt;
      for (size_t i = 0; i < w.size(); ++i) pt << (i ? ";" : "") << fmt(w[i]);
      csv << p.name << ",residual," << pt.str() << ",," << fmt(res) << "," << fmt(1e-3) << ","
          << fmt(1e-3 - res) << "," << (ok ? "1" : "0") << "\n";
    }
    for (int m = 1; m <= 3; ++m) {
      auto rep = c2::stein::check_derivative_bounds(p.sp, p.P, m, p.points);
      all_pass = all_pass && rep.pass;
      for (const auto& row : rep.rows) {
        std::ostringstream pt, ds;
        for (size_t i = 0; i < row.point.size(); ++i) pt << (i ? ";" : "") << fmt(row.point[i]);
        for (size_t i = 0; i < row.dirs.size(); ++i) ds << (i ? ";" : "") << row.dirs[i];
        csv << p.name << ",deriv" << m << "," << pt.str() << "," << ds.str() << ","
            << fmt(row.fd_value) << "," << fmt(row.bound) << "," << fmt(row.margin) << ","
            << (row.pass ? "1" : "0") << "\n";
      }
    }
  }
  std::cout << csv.str();
  if (!out_dir.empty()) {
    auto f = open_out(out_dir, "stein_check.csv");
    f << csv.str();
  }
  return all_pass ? 0 : 1;
}

int run_verify(const std::string& suite, const std::string& out_dir) {
  auto ids = c2::acceptance::suite_ids(suite);
  auto results = c2::acceptance::run_suite(ids);
  int failures = 0;
  std::ostringstream csv;
  csv << "id,name,pass,seconds,detail\n";
  for (const auto& res : results) {
    std::printf("criterion %2d %-24s %s (%.2fs) %s\n", res.id, res.name.c_str(),
                res.pass ? "PASS" : "FAIL", res.seconds, res.detail.c_str());
    std::string detail = res.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    std::replace(detail.begin(), detail.end(), '\n', ' ');
    csv << res.id << "," << res.name << "," << (res.pass ? "1" : "0") << "," << fmt(res.seconds)
        << "," << detail << "\n";
    if (!res.pass) ++failures;
  }
  if (!out_dir.empty()) {
    auto f = open_out(out_dir, "verify_" + suite + ".csv");
    f << csv.str();
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chi-square approximation toolkit"};
  app.require_subcommand(1);

  StatOptions stat_opt;
  auto* stat_cmd = app.add_subcommand("stat", "compute a statistic from data");
  stat_cmd->add_option("--ranks", stat_opt.ranks_path, "CSV of rank rows");
  stat_cmd->add_option("--counts", stat_opt.counts_path, "CSV with one row of counts");
  stat_cmd->add_option("--counts-inline", stat_opt.counts_inline, "comma-separated counts");
  stat_cmd->add_option("--probs", stat_opt.probs, "comma-separated cell probabilities");
  stat_cmd->add_option("--statistic", stat_opt.statistic, "friedman | pearson | pd");
  stat_cmd->add_option("--lambda", stat_opt.lambda, "family index for pd");

  ModelOptions cov_opt;
  auto* cov_cmd = app.add_subcommand("cov", "limit covariance matrix of a model");
  cov_cmd->add_option("--model", cov_opt.model, "rank | pearson | sign");
  cov_cmd->add_option("--r", cov_opt.r, "number of treatments / dimension");
  cov_cmd->add_option("--probs", cov_opt.probs, "cell probabilities for pearson");

  int mom_r = 3;
  long long mom_n = 1;
  auto* mom_cmd = app.add_subcommand("moments", "closed-form rank score moments");
  mom_cmd->add_option("--r", mom_r, "number of treatments");
  mom_cmd->add_option("--n", mom_n, "sample size for the W moment");

  BoundOptions bound_opt;
  auto* bound_cmd = app.add_subcommand("bound", "evaluate a convergence-rate bound");
  bound_cmd->add_option("--family", bound_opt.family,
                        "friedman | halfrate | halfrate-pd | even | zero-third | relaxed");
  bound_cmd->add_option("--model", bound_opt.model.model, "rank | pearson | sign");
  bound_cmd->add_option("--r", bound_opt.model.r, "treatments / dimension");
  bound_cmd->add_option("--probs", bound_opt.model.probs, "cell probabilities");
  bound_cmd->add_option("--n", bound_opt.n, "sample size");
  bound_cmd->add_option("--tf", bound_opt.tf, "test function spec");
  bound_cmd->add_option("--lambda", bound_opt.lambda, "family index");
  bound_cmd->add_flag("--crude", bound_opt.crude, "use the printed worst-case constants");
  bound_cmd->add_option("--quad", bound_opt.quad, "order3 | order6 | pd envelope");

  DistOptions dist_opt;
  auto* dist_cmd = app.add_subcommand("dist", "exact finite-sample distribution");
  dist_cmd->add_option("--model", dist_opt.model.model, "rank | pearson");
  dist_cmd->add_option("--r", dist_opt.model.r, "treatments");
  dist_cmd->add_option("--probs", dist_opt.model.probs, "cell probabilities");
  dist_cmd->add_option("--statistic", dist_opt.statistic, "friedman | pearson | pd");
  dist_cmd->add_option("--lambda", dist_opt.lambda, "family index for pd");
  dist_cmd->add_option("--n", dist_opt.n, "sample size");

  RateOptions rate_opt;
  auto* rate_cmd = app.add_subcommand("rate", "distance grid and fitted convergence rate");
  rate_cmd->add_option("--config", rate_opt.config_path, "experiment config (json)")->required();
  rate_cmd->add_option("--out", rate_opt.out_dir, "output directory");
  rate_cmd->add_option("--mode", rate_opt.mode_override, "exact | mc");
  rate_cmd->add_option("--reps", rate_opt.reps_override, "Monte Carlo replicates");
  auto* seed_opt =
      rate_cmd->add_option("--seed", rate_opt.seed_override, "Monte Carlo seed");

  std::string stein_out;
  auto* stein_cmd = app.add_subcommand("stein-check", "residual and derivative bound checks");
  stein_cmd->add_option("--out", stein_out, "output directory");

  std::string verify_suite = "all";
  std::string verify_out = ".";
  auto* verify_cmd = app.add_subcommand("verify", "run an acceptance sub-suite");
  verify_cmd->add_option("--suite", verify_suite,
                         "moments | covariance | bounds | stein | dist | all");
  verify_cmd->add_option("--out", verify_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    rate_opt.seed_set = seed_opt->count() > 0;
    if (stat_cmd->parsed()) return run_stat(stat_opt);
    if (cov_cmd->parsed()) return run_cov(cov_opt);
    if (mom_cmd->parsed()) return run_moments(mom_r, mom_n);
    if (bound_cmd->parsed()) return run_bound(bound_opt);
    if (dist_cmd->parsed()) return run_dist(dist_opt);
    if (rate_cmd->parsed()) return run_rate(rate_opt);
    if (stein_cmd->parsed()) return run_stein_check(stein_out);
    if (verify_cmd->parsed()) return run_verify(verify_suite, verify_out);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const c2::validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const c2::resource_error& e) {
    std::cerr << "resource limit: " << e.what() << "\n";
    return 3;
  } catch (const c2::numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
