#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

// Run the packaged binary with stdout+stderr captured.
RunResult run_cli(const std::string& args) {
  static int counter = 0;
  fs::path out = fs::temp_directory_path() / ("cli_out_" + std::to_string(counter++) + ".txt");
  std::string cmd = std::string(CLI_BINARY) + " " + args + " > " + out.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult res;
#ifdef _WIN32
  res.exit_code = status;
#else
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#endif
  std::ifstream in(out);
  std::ostringstream buf;
  buf << in.rdbuf();
  res.output = buf.str();
  fs::remove(out);
  return res;
}

fs::path write_temp(const std::string& name, const std::string& content) {
  fs::path p = fs::temp_directory_path() / name;
  std::ofstream f(p);
  f << content;
  return p;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("stat subcommand") {
  auto ranks = write_temp("cli_ranks.csv", "1,2,3\n");
  auto res = run_cli("stat --ranks " + ranks.string());
  CHECK(res.exit_code == 0);
  CHECK(contains(res.output, "friedman=2.0"));

  auto p = run_cli("stat --counts-inline 3,1 --probs 0.5,0.5 --statistic pearson");
  CHECK(p.exit_code == 0);
  CHECK(contains(p.output, "pearson=1.0"));

  auto pd = run_cli("stat --counts-inline 3,1 --probs 0.5,0.5 --statistic pd --lambda 0");
  CHECK(pd.exit_code == 0);
  CHECK(contains(pd.output, "pd=1.0464962875290957"));
}

TEST_CASE("cov and moments subcommands") {
  auto res = run_cli("cov --model rank --r 2");
  CHECK(res.exit_code == 0);
  CHECK(contains(res.output, "row,col,value"));
  CHECK(contains(res.output, "0,0,0.5"));
  CHECK(contains(res.output, "0,1,-0.5"));

  auto m = run_cli("moments --r 3 --n 2");
  CHECK(m.exit_code == 0);
  CHECK(contains(m.output, "x2,0.66666666666666663,2,3"));
  CHECK(contains(m.output, "w4,1,1,1"));
}

TEST_CASE("bound subcommand") {
  auto res = run_cli("bound --family friedman --r 3 --n 100 --tf sine:a=1");
  CHECK(res.exit_code == 0);
  CHECK(contains(res.output, "value=393550.65"));
  CHECK(contains(res.output, "regime=friedman_closed_form"));

  auto gate = run_cli("bound --family relaxed --model pearson "
                      "--probs 0.25,0.25,0.25,0.25 --n 10 --tf sine:a=0.5 --lambda 4.5");
  CHECK(gate.exit_code == 2);
  CHECK(contains(gate.output, "positive integer or at least 5"));
}

TEST_CASE("dist subcommand and resource cap") {
  auto res = run_cli("dist --model pearson --probs 0.5,0.5 --n 2 --statistic pearson");
  CHECK(res.exit_code == 0);
  CHECK(contains(res.output, "value,prob"));
  CHECK(contains(res.output, "0,0.5"));
  CHECK(contains(res.output, "2,0.5"));

  auto cap = run_cli("dist --model rank --r 10 --n 200 --statistic friedman");
  CHECK(cap.exit_code == 3);
}

TEST_CASE("rate subcommand, synthetic fixture") {
  auto cfg = write_temp("cli_rate_syn.json",
                        "{\"synthetic_deltas\": [[8, 0.875], [16, 0.4375], "
                        "[32, 0.21875], [64, 0.109375]]}");
  auto res = run_cli("rate --config " + cfg.string());
  CHECK(res.exit_code == 0);
  CHECK(contains(res.output, "n,delta,stderr,bound"));
  CHECK(contains(res.output, "beta=1.000000000000"));
}

TEST_CASE("rate subcommand, exact model run with output files") {
  fs::path dir = fs::temp_directory_path() / "cli_rate_out";
  fs::remove_all(dir);
  auto cfg = write_temp("cli_rate_fr.json",
                        std::string("{\"model\":{\"kind\":\"rank\",\"r\":3},"
                                    "\"statistic\":{\"kind\":\"friedman\"},"
                                    "\"test_function\":\"sine:a=0.5\","
                                    "\"grid\":[8,16,32],\"mode\":\"exact\","
                                    "\"bound\":\"friedman\",\"out\":\"") +
                            dir.string() + "\"}");
  auto res = run_cli("rate --config " + cfg.string());
  CHECK(res.exit_code == 0);
  CHECK(contains(res.output, "8,0.01687005279865883"));
  CHECK(contains(res.output, "16,0.0081110901649935618"));
  CHECK(fs::exists(dir / "rate.csv"));
  CHECK(fs::exists(dir / "rate.dat"));
  std::ifstream dat(dir / "rate.dat");
  std::string header;
  std::getline(dat, header);
  CHECK(header == "# n delta stderr bound");
}

TEST_CASE("rate subcommand is deterministic in mc mode") {
  auto cfg = write_temp("cli_rate_mc.json",
                        "{\"model\":{\"kind\":\"rank\",\"r\":3},"
                        "\"statistic\":{\"kind\":\"friedman\"},"
                        "\"test_function\":\"sine:a=0.5\","
                        "\"grid\":[8,16,32],\"mode\":\"mc\",\"reps\":5000,\"seed\":42}");
  auto a = run_cli("rate --config " + cfg.string());
  auto b = run_cli("rate --config " + cfg.string());
  CHECK(a.exit_code == 0);
  CHECK(a.output == b.output);

  // A different seed moves the estimates.
  auto c = run_cli("rate --config " + cfg.string() + " --seed 43");
  CHECK(c.output != a.output);
}

TEST_CASE("rate subcommand gates on the beta window") {
  auto cfg = write_temp("cli_rate_gate.json",
                        "{\"synthetic_deltas\": [[8, 0.875], [16, 0.4375], [32, 0.21875]],"
                        "\"beta_window\": [0.2, 0.4]}");
  auto res = run_cli("rate --config " + cfg.string());
  CHECK(res.exit_code == 1);
  CHECK(contains(res.output, "beta="));
}

TEST_CASE("stein-check emits the full report") {
  auto res = run_cli("stein-check");
  CHECK(res.exit_code == 0);
  CHECK(contains(res.output, "problem,check,point,dirs,value,bound,margin,pass"));
  CHECK(contains(res.output, "scalar,residual,"));
  CHECK(contains(res.output, "pearson2,deriv3,"));
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("nonsense").exit_code == 2);
  CHECK(run_cli("stat --counts-inline 3,1 --probs 0.7,0.7").exit_code == 2);
  CHECK(run_cli("rate").exit_code == 2);
  CHECK(run_cli("verify --suite bogus").exit_code == 2);
}

TEST_CASE("verify subcommand emits a result csv") {
  fs::path dir = fs::temp_directory_path() / "cli_verify_out";
  fs::remove_all(dir);
  auto res = run_cli("verify --suite covariance --out " + dir.string());
  CHECK(res.exit_code == 0);
  CHECK(contains(res.output, "criterion  1 rank_covariance"));
  CHECK(contains(res.output, "PASS"));
  std::ifstream csv(dir / "verify_covariance.csv");
  REQUIRE(csv.good());
  std::string header;
  std::getline(csv, header);
  CHECK(header == "id,name,pass,seconds,detail");
  std::string row;
  std::getline(csv, row);
  CHECK(contains(row, "1,rank_covariance,1,"));
}
