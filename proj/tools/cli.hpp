#ifndef MIXSEL_CLI_HPP
#define MIXSEL_CLI_HPP

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mixsel/stepwise.hpp"

namespace mixsel {

struct RunConfig {
  std::string command;  // "fit", "caic", or "step"
  std::string data_path;
  std::string formula;
  std::string family = "gaussian";
  bool ml = false;
  std::string direction = "backward";
  std::vector<std::string> group_candidates;
  std::vector<std::string> slope_candidates;
  std::vector<std::string> fix_ef;
  std::vector<std::string> keep_fixed;
  std::vector<std::string> keep_random;
  int max_slopes = -1;  // <0: unlimited
  bool allow_use_across = false;
  bool calc_non_optim = false;
  std::string bs_type = "trunc";
  int threads = 0;  // 0: MIXSEL_THREADS env, else hardware
  std::string format = "table";
  bool trace = false;
  std::optional<double> zero_tol;  // boundary-deletion tolerance override
};

// Runs one parsed command; writes the report to out, diagnostics to err.
// Returns the process exit code: 0 on success, 1 on numerical failure,
// 2 on input/usage errors.
int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// argv front end around run_command; same exit-code contract.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mixsel

#endif
