#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "helpers.hpp"

using nlohmann::ordered_json;

namespace {

struct CliRun {
  int rc;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  std::vector<const char*> argv{"mixsel"};
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int rc = mixsel::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {rc, out.str(), err.str()};
}

std::string sleep_csv() { return mixsel::test::data_path("sleepstudy.csv"); }
std::string pastes_csv() { return mixsel::test::data_path("pastes.csv"); }

}  // namespace

TEST_CASE("fit: lme4-style table with the reference numbers") {
  CliRun r = run({"fit", "--data", sleep_csv(), "--formula",
                  "Reaction ~ Days + (1 + Days | Subject)"});
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("REML criterion at convergence: 1743.63") != std::string::npos);
  CHECK(r.out.find("Number of obs: 180, groups:  Subject, 18") != std::string::npos);
  CHECK(r.out.find("251.405") != std::string::npos);
  CHECK(r.out.find("10.4673") != std::string::npos);
  CHECK(r.out.find("24.7405") != std::string::npos);
  CHECK(r.out.find("0.07") != std::string::npos);  // intercept/slope correlation
  CHECK(r.err.empty());
}

TEST_CASE("fit: json carries the full-precision criterion") {
  CliRun r = run({"fit", "--data", sleep_csv(), "--formula",
                  "Reaction ~ Days + (1 + Days | Subject)", "--format", "json"});
  REQUIRE(r.rc == 0);
  ordered_json j = ordered_json::parse(r.out);
  CHECK(j["method"] == "REML");
  CHECK(j["family"] == "gaussian");
  CHECK(j["converged"] == true);
  CHECK(std::abs(j["criterion"].get<double>() - 1743.6282719585) < 1e-6);
  CHECK(std::abs(j["fixed"]["Days"].get<double>() - 10.46729) < 1e-4);
}

TEST_CASE("caic: json has exactly the five fields, in order") {
  CliRun r = run({"caic", "--data", sleep_csv(), "--formula",
                  "Reaction ~ Days + (1 + Days | Subject)", "--format", "json"});
  REQUIRE(r.rc == 0);
  ordered_json j = ordered_json::parse(r.out);
  std::vector<std::string> keys;
  for (auto& item : j.items()) keys.push_back(item.key());
  std::vector<std::string> want = {"loglikelihood", "df", "reducedFormula", "newFit", "caic"};
  CHECK(keys == want);
  CHECK(j["reducedFormula"].is_null());
  CHECK(j["newFit"] == false);
  CHECK(std::abs(j["caic"].get<double>() - 1711.6178) < 1e-3);
}

TEST_CASE("caic: table output uses the block layout") {
  CliRun r = run({"caic", "--data", sleep_csv(), "--formula", "Reaction ~ Days"});
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("$loglikelihood") != std::string::npos);
  CHECK(r.out.find("$df") != std::string::npos);
  CHECK(r.out.find("$reducedFormula") != std::string::npos);
  CHECK(r.out.find("NULL") != std::string::npos);
  CHECK(r.out.find("$newFit") != std::string::npos);
  CHECK(r.out.find("FALSE") != std::string::npos);
  CHECK(r.out.find("$caic") != std::string::npos);
  CHECK(r.out.find("1899.66") != std::string::npos);
}

TEST_CASE("step: json summary and byte-for-byte determinism") {
  std::vector<std::string> args = {"step", "--data", pastes_csv(), "--formula",
                                   "strength ~ (1 | sample) + (1 | batch)", "--format", "json"};
  CliRun a = run(args), b = run(args);
  REQUIRE(a.rc == 0);
  CHECK(a.out == b.out);
  ordered_json j = ordered_json::parse(a.out);
  CHECK(j["bestFormula"] == "strength ~ (1 | sample)");
  CHECK(j["bestDisplay"] == "~ (1 | sample)");
  CHECK(j["stopReason"] == "no-improvement");
  CHECK(std::abs(j["caic"].get<double>() - 178.198114) < 1e-4);
  REQUIRE(j["steps"].size() == 2);
  CHECK(j["steps"][0]["direction"] == "backward");
  CHECK(j["steps"][0]["rows"].size() == 2);
  CHECK(j["trace"].is_string());
}

TEST_CASE("step: table format ends with the best-model footer") {
  CliRun r = run({"step", "--data", pastes_csv(), "--formula",
                  "strength ~ (1 | sample) + (1 | batch)"});
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("Starting stepwise procedure...") != std::string::npos);
  CHECK(r.out.find("Best model:  ~ (1 | sample) , cAIC: 178.1981 ") != std::string::npos);
}

TEST_CASE("exit codes: usage problems are 2") {
  CHECK(run({"caic", "--data", "/no/such/file.csv", "--formula", "y ~ x"}).rc == 2);
  CHECK(run({"caic", "--data", sleep_csv(), "--formula", "Reaction ~ Days +"}).rc == 2);
  CHECK(run({"frobnicate"}).rc == 2);
  CHECK(run({"fit", "--data", sleep_csv()}).rc == 2);  // --formula is required
  CHECK(run({"fit", "--data", sleep_csv(), "--formula", "Reaction ~ Days", "--family",
             "gamma"}).rc == 2);
}

TEST_CASE("exit codes: numerical failure is 1") {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "mixsel_collinear.csv";
  {
    std::ofstream f(p);
    f << "y,x,xdup,g\n";
    for (int i = 0; i < 30; ++i)
      f << (i % 7) + 0.5 * i << "," << i << "," << 2 * i << ",g" << (i % 5) << "\n";
  }
  CliRun r = run({"fit", "--data", p.string(), "--formula", "y ~ x + xdup + (1 | g)"});
  CHECK(r.rc == 1);
  CHECK(!r.err.empty());
  std::remove(p.string().c_str());
}

TEST_CASE("poisson fit through the front door") {
  CliRun r = run({"fit", "--data", mixsel::test::data_path("grouseticks.csv"), "--formula",
                  "TICKS ~ YEAR + HEIGHT + (1 | BROOD) + (1 | INDEX) + (1 | LOCATION)",
                  "--family", "poisson"});
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("Laplace criterion at convergence: 1833.48") != std::string::npos);
  CHECK(r.out.find("Number of obs: 403, groups:  INDEX, 403; BROOD, 118; LOCATION, 63") !=
        std::string::npos);
}
