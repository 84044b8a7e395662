#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <json.hpp>

#include "helpers.hpp"

namespace {

std::string g_cli;

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
  const int status = pclose(pipe);
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = std::move(out);
  return r;
}

nlohmann::json parse(const std::string& text) {
  return nlohmann::json::parse(text);
}

}  // namespace

TEST_CASE("two-sample discrepancy to json on stdout") {
  testutil::TempFile x("0.0");
  testutil::TempFile y("1.0");
  const RunResult r = run_cli("mmd --x " + x.path() + " --y " + y.path() +
                              " --kernel rbf --lengthscale 1");
  REQUIRE(r.exit_code == 0);
  const nlohmann::json j = parse(r.output);
  CHECK(j["schema"] == "mkd/1");
  CHECK(j["command"] == "mmd");
  CHECK(std::abs(j["mmd2"].get<double>() - 0.78693868057473315) < 1e-12);
  CHECK(j["kind"] == "V");
  CHECK(j["n"] == 1);
  CHECK(j["m"] == 1);
  CHECK(j["resolved_config"]["kernel"] == "rbf");
  CHECK(j["resolved_config"]["lengthscale"] == "1");
  CHECK(j["resolved_config"]["kind"] == "V");
}

TEST_CASE("reruns are byte-identical, including seeded paths") {
  testutil::TempFile x("0.0\n0.5\n1.5\n-0.25");
  testutil::TempFile y("1.0\n2.0\n0.75");
  const std::string cmd = "mmd --x " + x.path() + " --y " + y.path() +
                          " --kernel rff --num-features 64 --seed 11";
  const RunResult a = run_cli(cmd);
  const RunResult b = run_cli(cmd);
  REQUIRE(a.exit_code == 0);
  CHECK(a.output == b.output);

  // Median-heuristic lengthscale resolution is part of the record.
  const RunResult med = run_cli("mmd --x " + x.path() + " --y " + y.path());
  REQUIRE(med.exit_code == 0);
  const nlohmann::json j = parse(med.output);
  CHECK(j["resolved_config"]["lengthscale"] == "median");
  CHECK(j["lengthscale_used"].get<double>() > 0.0);
  CHECK(run_cli("mmd --x " + x.path() + " --y " + y.path()).output == med.output);
}

TEST_CASE("output file plus human summary") {
  testutil::TempFile x("0.0");
  testutil::TempFile y("1.0");
  testutil::TempFile out("", ".json");
  const RunResult r =
      run_cli("mmd --x " + x.path() + " --y " + y.path() +
              " --kernel rbf --lengthscale 1 --out " + out.path());
  REQUIRE(r.exit_code == 0);
  CHECK_FALSE(r.output.empty());
  CHECK(r.output.find("discrepancy") != std::string::npos);
  CHECK(r.output[0] != '{');

  std::ifstream file(out.path());
  REQUIRE(file.good());
  const nlohmann::json j = nlohmann::json::parse(file);
  CHECK(j["command"] == "mmd");
}

TEST_CASE("help exits cleanly; bad flags and files use distinct codes") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("mmd --help").exit_code == 0);
  CHECK(run_cli("definitely-not-a-subcommand").exit_code == 1);

  testutil::TempFile x("0.0");
  const RunResult bad_flag =
      run_cli("mmd --x " + x.path() + " --y " + x.path() + " --no-such-flag");
  CHECK(bad_flag.exit_code == 1);

  const RunResult missing =
      run_cli("mmd --x /nonexistent/data.csv --y " + x.path());
  CHECK(missing.exit_code == 3);
}

TEST_CASE("invalid kernel settings are reported together") {
  testutil::TempFile x("0.0\n1.0");
  const RunResult r =
      run_cli("mmd --x " + x.path() + " --y " + x.path() +
              " --kernel imq --scale -2 --exponent 1.5");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("invalid configuration") != std::string::npos);
  CHECK(r.output.find("--scale") != std::string::npos);
  CHECK(r.output.find("--exponent") != std::string::npos);
}

TEST_CASE("score discrepancy validates the parameter vector") {
  testutil::TempFile data("0.1\n-0.4\n0.9\n0.3");
  const RunResult wrong_size = run_cli(
      "ksd --data " + data.path() + " --theta 0 --lengthscale 1");
  CHECK(wrong_size.exit_code == 1);

  const RunResult bad_domain = run_cli(
      "ksd --data " + data.path() + " --theta 0,-1 --lengthscale 1");
  CHECK(bad_domain.exit_code == 1);

  const RunResult ok = run_cli(
      "ksd --data " + data.path() + " --theta 0,1 --lengthscale 1");
  REQUIRE(ok.exit_code == 0);
  const nlohmann::json j = parse(ok.output);
  CHECK(j["command"] == "ksd");
  CHECK(j["theta"].size() == 2);
  CHECK(j["ksd2"].get<double>() >= -1e-10);
  CHECK(j["resolved_config"]["model"] == "gaussian-natparams");
}

TEST_CASE("degenerate data reaches a numerical exit code") {
  testutil::TempFile data("2.0\n2.0\n2.0\n2.0");
  const RunResult r = run_cli("estimate --data " + data.path() +
                              " --method ksd-expfam --lengthscale 1");
  CHECK(r.exit_code == 2);
}

TEST_CASE("moment estimation end to end") {
  testutil::TempFile data("1.0\n2.0\n3.0\n4.0");
  const RunResult r =
      run_cli("estimate --data " + data.path() + " --method gmm");
  REQUIRE(r.exit_code == 0);
  const nlohmann::json j = parse(r.output);
  CHECK(j["command"] == "estimate");
  CHECK(j["method"] == "gmm");
  CHECK(j["theta_n"].size() == 1);
  CHECK(std::abs(j["theta_n"][0].get<double>() - 2.5) < 1e-14);
  CHECK(j["converged"] == true);
  CHECK(j["iterations"] == 0);
  const nlohmann::json& uq = j["uncertainty"];
  CHECK(uq["gamma_n"][0][0] == 1.0);
  CHECK(uq["confidence_intervals"]["lower"][0].get<double>() < 2.5);
  CHECK(uq["confidence_intervals"]["upper"][0].get<double>() > 2.5);

  // --model is not meaningful for the moment method.
  const RunResult bad = run_cli("estimate --data " + data.path() +
                                " --method gmm --model gaussian-natparams");
  CHECK(bad.exit_code == 1);
}

TEST_CASE("score estimation reports an interval around the fit") {
  std::mt19937_64 rng(191);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::string rows;
  for (int i = 0; i < 400; ++i) rows += std::to_string(normal(rng)) + "\n";
  testutil::TempFile data(rows);
  const RunResult r = run_cli("estimate --data " + data.path() +
                              " --method ksd-expfam --lengthscale 1");
  REQUIRE(r.exit_code == 0);
  const nlohmann::json j = parse(r.output);
  CHECK(j["estimator"] == "ksd-linear-solve");
  REQUIRE(j["theta_n"].size() == 2);
  CHECK(std::abs(j["theta_n"][0].get<double>()) < 0.5);
  CHECK(std::abs(j["theta_n"][1].get<double>() - 1.0) < 0.5);
  const nlohmann::json& ci = j["uncertainty"]["confidence_intervals"];
  for (int k = 0; k < 2; ++k)
    CHECK(ci["lower"][k].get<double>() < ci["upper"][k].get<double>());
}

TEST_CASE("simulator estimation explains its missing uncertainty") {
  std::mt19937_64 rng(193);
  std::normal_distribution<double> normal(5.0, 1.0);
  std::string rows;
  for (int i = 0; i < 200; ++i) rows += std::to_string(normal(rng)) + "\n";
  testutil::TempFile data(rows);
  const RunResult r = run_cli(
      "estimate --data " + data.path() +
      " --method mmd-pushforward --lengthscale 1 --model-samples 256 --seed 2");
  REQUIRE(r.exit_code == 0);
  const nlohmann::json j = parse(r.output);
  CHECK(j["estimator"] == "nelder-mead");
  CHECK(std::abs(j["theta_n"][0].get<double>() - 5.0) < 0.5);
  CHECK(j["uncertainty"].is_string());
  CHECK(j["resolved_config"]["model_samples"] == 256);

  const RunResult bad = run_cli("estimate --data " + data.path() +
                                " --method ksd-expfam --theta0 1");
  CHECK(bad.exit_code == 1);
}

TEST_CASE("witness evaluation at requested points") {
  testutil::TempFile x("0.0");
  testutil::TempFile y("1.0");
  testutil::TempFile pts("0.0\n0.5\n1.0");
  const RunResult r =
      run_cli("witness --x " + x.path() + " --y " + y.path() + " --points " +
              pts.path() + " --kernel rbf --lengthscale 1");
  REQUIRE(r.exit_code == 0);
  const nlohmann::json j = parse(r.output);
  CHECK(j["command"] == "witness");
  REQUIRE(j["values"].size() == 3);
  CHECK(std::abs(j["values"][0].get<double>() - 0.44354782170999701) < 1e-12);
  CHECK(std::abs(j["values"][2].get<double>() + 0.44354782170999701) < 1e-12);
  CHECK(std::abs(j["values"][1].get<double>()) < 1e-12);  // midpoint, symmetric
  CHECK(j["num_points"] == 3);

  // Identical samples admit no witness direction: numerical failure code.
  const RunResult degenerate = run_cli("witness --x " + x.path() + " --y " +
                                       x.path() + " --points " + pts.path() +
                                       " --kernel rbf --lengthscale 1");
  CHECK(degenerate.exit_code == 2);
}

TEST_CASE("coverage study smoke run through the tool") {
  const RunResult r = run_cli(
      "coverage --scenario gmm-gaussian-mean --n 80 --replicates 5 --seed 1");
  REQUIRE(r.exit_code == 0);
  const nlohmann::json j = parse(r.output);
  CHECK(j["command"] == "coverage");
  CHECK(j["replicates"] == 5);
  CHECK(j["per_replicate"].size() == 5);
  CHECK(j["coverage"].get<double>() >= 0.0);
  CHECK(j["coverage"].get<double>() <= 1.0);
  CHECK(j["resolved_config"]["scenario"] == "gmm-gaussian-mean");

  const RunResult bad =
      run_cli("coverage --scenario no-such-study --n 80 --replicates 5");
  CHECK(bad.exit_code == 1);
}

TEST_CASE("config files supply defaults that flags override") {
  testutil::TempFile x("0.0\n0.4\n-0.3");
  testutil::TempFile y("1.0\n1.2");
  testutil::TempFile cfg("[mmd]\nlengthscale=2\n", ".ini");

  const RunResult from_cfg = run_cli("--config " + cfg.path() + " mmd --x " +
                                     x.path() + " --y " + y.path());
  REQUIRE(from_cfg.exit_code == 0);
  CHECK(parse(from_cfg.output)["resolved_config"]["lengthscale"] == "2");

  const RunResult overridden =
      run_cli("--config " + cfg.path() + " mmd --x " + x.path() + " --y " +
              y.path() + " --lengthscale 1");
  REQUIRE(overridden.exit_code == 0);
  CHECK(parse(overridden.output)["resolved_config"]["lengthscale"] == "1");

  CHECK(run_cli("--config /nonexistent/settings.ini mmd --x " + x.path() +
                " --y " + y.path())
            .exit_code == 3);
}

int main(int argc, char** argv) {
  doctest::Context context;
  context.applyCommandLine(argc, argv);
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (!arg.empty() && arg[0] != '-' && std::filesystem::exists(arg))
      g_cli = std::filesystem::absolute(arg).string();
  }
  if (g_cli.empty()) {
    std::cerr << "expected the tool binary path as a command-line argument\n";
    return 1;
  }
  return context.run();
}
