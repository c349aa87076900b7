#ifndef MIXSEL_STEPWISE_HPP
#define MIXSEL_STEPWISE_HPP

#include <climits>
#include <string>
#include <vector>

#include "mixsel/caic.hpp"

namespace mixsel {

struct StepConfig {
  std::string direction = "backward";  // "backward", "forward", or "both"
  // Forward moves draw from these pools; backward fixed-effect moves only
  // touch variables listed in fix_ef.
  std::vector<std::string> group_candidates;
  std::vector<std::string> slope_candidates;
  std::vector<std::string> fix_ef;
  // Terms that must survive: fixed/smooth variables, and random terms given
  // as formula fragments like "(1 | g)".
  std::vector<std::string> keep_fixed;
  std::vector<std::string> keep_random;
  int max_slopes = INT_MAX;     // per grouping variable
  bool allow_use_across = false;  // reuse a slope variable across groups
  bool calc_non_optim = false;  // keep candidates whose fit did not converge
  std::string bs_type = "trunc";
  bool ml = false;  // gaussian fits: ML instead of REML
  int threads = 0;
  bool trace = false;  // stream the trace to stdout while running
};

struct StepRow {
  std::string label;  // candidate formula, "~" + right-hand side
  double loglik = 0.0;
  double df = 0.0;  // as displayed (gaussian fixed-effects-only rows add 1)
  double caic = 0.0;
};

struct StepRecord {
  int number = 0;
  bool forward = false;
  double incumbent_caic = 0.0;
  std::string incumbent_display;  // random terms ordered by decreasing levels
  std::vector<StepRow> rows;      // sorted by decreasing caic
};

struct StepResult {
  FittedModel model;
  CaicResult selection;
  std::vector<StepRecord> steps;  // every attempt, including candidate-free ones
  // Rendered text; empty when no attempt produced any candidate.
  std::string trace;
  // "no-improvement", "no-candidates", or "zero-variance-smooth"
  std::string stop_reason;
  std::string best_display;  // final model in display order, "~ ..."
};

// cAIC-driven stepwise search from the given start. Candidates are refitted
// from scratch; a candidate improves only if its cAIC beats the incumbent by
// more than 1e-10. With direction "both", forward moves are tried first at
// every step. Accepting a model whose smooth variance collapsed to zero stops
// the search with the previous incumbent.
StepResult step_caic(const ModelFormula& start, const Dataset& data, Family family,
                     const StepConfig& cfg);

}  // namespace mixsel

#endif
