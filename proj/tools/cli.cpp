#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "mixsel/caic.hpp"
#include "mixsel/errors.hpp"

namespace mixsel {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string sig6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string two_dec(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// %.4f with trailing zeros trimmed, matching the trace footer style
std::string four_dec_trimmed(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s(buf);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

// ----- variance-component summaries -----------------------------------------

struct ReBlockSummary {
  std::string group;
  std::vector<std::string> names;
  std::vector<double> sd;
  std::vector<std::vector<double>> corr;  // corr[i] has i entries (lower triangle)
};

std::vector<ReBlockSummary> random_summaries(const FittedModel& m) {
  std::vector<ReBlockSummary> out;
  double sigma = m.family == Family::gaussian ? std::sqrt(m.sigma2) : 1.0;
  for (const auto& b : m.dm().blocks) {
    ReBlockSummary s;
    s.group = b.group;
    s.names = b.components;
    // rows of the block's lower-triangular factor; theta stored column-major
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(b.dim, b.dim);
    int k = b.theta_offset;
    for (int j = 0; j < b.dim; ++j)
      for (int i = j; i < b.dim; ++i) l(i, j) = m.theta[k++];
    for (int i = 0; i < b.dim; ++i) {
      double sd_i = sigma * l.row(i).norm();
      s.sd.push_back(sd_i);
      std::vector<double> ci;
      for (int j = 0; j < i; ++j) {
        double denom = l.row(i).norm() * l.row(j).norm();
        ci.push_back(denom > 0 ? l.row(i).dot(l.row(j)) / denom : 0.0);
      }
      s.corr.push_back(std::move(ci));
    }
    out.push_back(std::move(s));
  }
  return out;
}

// grouping factors with their level counts, largest first
std::vector<std::pair<std::string, int>> group_sizes(const FittedModel& m) {
  std::vector<std::pair<std::string, int>> out;
  std::set<std::string> seen;
  for (const auto& b : m.dm().blocks) {
    if (b.term_index < 0) continue;
    const std::string& g = m.formula.randoms[b.term_index].group;
    if (seen.insert(g).second) out.emplace_back(g, b.nlev);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

std::string method_name(const FittedModel& m) {
  if (m.family != Family::gaussian) return "Laplace";
  return m.reml ? "REML" : "ML";
}

// ----- fit command ----------------------------------------------------------

void render_fit_table(const FittedModel& m, std::ostream& out) {
  if (m.family == Family::gaussian) {
    out << "Linear mixed model fit by "
        << (m.reml ? "REML" : "maximum likelihood") << "\n";
  } else {
    out << "Generalized linear mixed model fit by Laplace approximation\n"
        << "  Family: " << family_name(m.family)
        << (m.family == Family::poisson ? " (log)" : " (logit)") << "\n";
  }
  out << "Formula: " << render_formula(m.formula) << "\n"
      << method_name(m) << " criterion at convergence: " << sig6(m.criterion) << "\n";
  if (!m.converged) out << "Warning: optimizer did not converge\n";

  auto res = random_summaries(m);
  bool any_corr = false;
  for (const auto& s : res)
    if (s.names.size() > 1) any_corr = true;
  if (!res.empty() || m.family == Family::gaussian) {
    out << "Random effects:\n";
    size_t wg = 6, wn = 4, ws = 8;  // header widths
    for (const auto& s : res) {
      wg = std::max(wg, s.group.size());
      for (const auto& n : s.names) wn = std::max(wn, n.size());
      for (double v : s.sd) ws = std::max(ws, sig6(v).size());
    }
    if (m.family == Family::gaussian) {
      wg = std::max(wg, std::string("Residual").size());
      ws = std::max(ws, sig6(std::sqrt(m.sigma2)).size());
    }
    auto row = [&](const std::string& g, const std::string& n, const std::string& sd,
                   const std::string& corr) {
      out << ' ' << g << std::string(wg - g.size() + 1, ' ') << n
          << std::string(wn - n.size() + 1, ' ') << std::string(ws - sd.size(), ' ') << sd;
      if (!corr.empty()) out << "  " << corr;
      out << "\n";
    };
    row("Groups", "Name", "Std.Dev.", any_corr ? "Corr" : "");
    for (const auto& s : res)
      for (size_t i = 0; i < s.names.size(); ++i) {
        std::string corr;
        for (size_t j = 0; j < s.corr[i].size(); ++j) {
          if (j) corr += ' ';
          corr += two_dec(s.corr[i][j]);
        }
        row(i == 0 ? s.group : "", s.names[i], sig6(s.sd[i]), corr);
      }
    if (m.family == Family::gaussian) row("Residual", "", sig6(std::sqrt(m.sigma2)), "");
  }

  out << "Number of obs: " << m.n();
  auto gs = group_sizes(m);
  if (!gs.empty()) {
    out << ", groups:  ";
    for (size_t i = 0; i < gs.size(); ++i) {
      if (i) out << "; ";
      out << gs[i].first << ", " << gs[i].second;
    }
  }
  out << "\n";

  out << "Fixed effects:\n";
  const auto& names = m.dm().x_names;
  size_t wn = 0;
  for (const auto& n : names) wn = std::max(wn, n.size());
  for (size_t i = 0; i < names.size(); ++i)
    out << ' ' << names[i] << std::string(wn - names[i].size() + 2, ' ')
        << sig6(m.beta[static_cast<int>(i)]) << "\n";
}

ordered_json fit_json(const FittedModel& m) {
  ordered_json j;
  j["formula"] = render_formula(m.formula);
  j["family"] = family_name(m.family);
  j["method"] = method_name(m);
  j["criterion"] = m.criterion;
  j["converged"] = m.converged;
  j["nobs"] = m.n();
  ordered_json fixed = ordered_json::object();
  for (size_t i = 0; i < m.dm().x_names.size(); ++i)
    fixed[m.dm().x_names[i]] = m.beta[static_cast<int>(i)];
  j["fixed"] = std::move(fixed);
  ordered_json rnd = ordered_json::array();
  for (const auto& s : random_summaries(m)) {
    ordered_json b;
    b["group"] = s.group;
    b["names"] = s.names;
    b["stddev"] = s.sd;
    b["corr"] = s.corr;
    rnd.push_back(std::move(b));
  }
  j["random"] = std::move(rnd);
  if (m.family == Family::gaussian) j["residualSd"] = std::sqrt(m.sigma2);
  ordered_json gj = ordered_json::object();
  for (const auto& [g, n] : group_sizes(m)) gj[g] = n;
  j["groups"] = std::move(gj);
  j["theta"] = std::vector<double>(m.theta.data(), m.theta.data() + m.theta.size());
  return j;
}

// ----- caic command ---------------------------------------------------------

void render_caic_table(const CaicResult& r, std::ostream& out) {
  out << "$loglikelihood\n[1] " << sig6(r.cond_loglik) << "\n\n"
      << "$df\n[1] " << sig6(r.df) << "\n\n"
      << "$reducedFormula\n"
      << (r.reduced_formula ? render_formula(*r.reduced_formula) : "NULL") << "\n\n"
      << "$newFit\n" << (r.refitted ? "TRUE" : "FALSE") << "\n\n"
      << "$caic\n[1] " << sig6(r.caic) << "\n";
}

ordered_json caic_json(const CaicResult& r) {
  ordered_json j;
  j["loglikelihood"] = r.cond_loglik;
  j["df"] = r.df;
  if (r.reduced_formula)
    j["reducedFormula"] = render_formula(*r.reduced_formula);
  else
    j["reducedFormula"] = nullptr;
  j["newFit"] = r.refitted.has_value();
  j["caic"] = r.caic;
  return j;
}

// ----- step command ---------------------------------------------------------

ordered_json step_json(const StepResult& r) {
  ordered_json j;
  j["bestFormula"] = render_formula(r.model.formula);
  j["bestDisplay"] = r.best_display;
  j["stopReason"] = r.stop_reason;
  j["caic"] = caic_json(r.selection);
  ordered_json steps = ordered_json::array();
  for (const auto& s : r.steps) {
    ordered_json sj;
    sj["number"] = s.number;
    sj["direction"] = s.forward ? "forward" : "backward";
    sj["incumbentCaic"] = s.incumbent_caic;
    sj["incumbent"] = s.incumbent_display;
    ordered_json rows = ordered_json::array();
    for (const auto& row : s.rows) {
      ordered_json rj;
      rj["model"] = row.label;
      rj["loglikelihood"] = row.loglik;
      rj["df"] = row.df;
      rj["caic"] = row.caic;
      rows.push_back(std::move(rj));
    }
    sj["rows"] = std::move(rows);
    steps.push_back(std::move(sj));
  }
  j["steps"] = std::move(steps);
  j["trace"] = r.trace;
  return j;
}

FittedModel fit_from(const RunConfig& cfg, const ModelFormula& f, const Dataset& d,
                     Family family) {
  return family == Family::gaussian ? fit_lmm(f, d, !cfg.ml) : fit_glmm(f, d, family);
}

}  // namespace

int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    if (cfg.command != "fit" && cfg.command != "caic" && cfg.command != "step")
      throw input_error("unknown command: " + cfg.command);
    if (cfg.format != "table" && cfg.format != "json")
      throw input_error("unknown format: " + cfg.format);
    if (cfg.threads < 0) throw input_error("thread count must be positive");
    Family family = family_from_name(cfg.family);
    ModelFormula f = parse_formula(cfg.formula);
    Dataset d = load_csv(cfg.data_path);
    double zero_tol = cfg.zero_tol.value_or(1e-6);
    if (zero_tol <= 0) throw input_error("zero tolerance must be positive");

    if (cfg.command == "fit") {
      FittedModel m = fit_from(cfg, f, d, family);
      if (cfg.format == "json")
        out << fit_json(m).dump(2) << "\n";
      else
        render_fit_table(m, out);
    } else if (cfg.command == "caic") {
      FittedModel m = fit_from(cfg, f, d, family);
      CaicResult r = caic(m, cfg.threads, zero_tol);
      if (cfg.format == "json")
        out << caic_json(r).dump(2) << "\n";
      else
        render_caic_table(r, out);
    } else {
      StepConfig sc;
      sc.direction = cfg.direction;
      sc.group_candidates = cfg.group_candidates;
      sc.slope_candidates = cfg.slope_candidates;
      sc.fix_ef = cfg.fix_ef;
      sc.keep_fixed = cfg.keep_fixed;
      sc.keep_random = cfg.keep_random;
      if (cfg.max_slopes >= 0) sc.max_slopes = cfg.max_slopes;
      sc.allow_use_across = cfg.allow_use_across;
      sc.calc_non_optim = cfg.calc_non_optim;
      sc.bs_type = cfg.bs_type;
      sc.ml = cfg.ml;
      sc.threads = cfg.threads;
      // stream live only when the report goes to the real terminal stream
      bool live = cfg.trace && cfg.format == "table" && &out == &std::cout;
      sc.trace = live;
      StepResult r = step_caic(f, d, family, sc);
      std::string footer = "Best model:  " + r.best_display + " , cAIC: " +
                           four_dec_trimmed(r.selection.caic) + " \n" + std::string(45, '_') +
                           "\n";
      if (cfg.format == "json") {
        out << step_json(r).dump(2) << "\n";
      } else if (live) {
        if (r.trace.empty()) out << footer;  // nothing was streamed
      } else if (cfg.trace && !r.trace.empty()) {
        out << r.trace;
      } else {
        out << footer;
      }
    }
    return 0;
  } catch (const input_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"mixed-model estimation and cAIC-driven model selection"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data_path, "CSV file (header row required)")->required();
    sub->add_option("--formula", cfg.formula, "model formula, e.g. \"y ~ x + (1 | g)\"")
        ->required();
    sub->add_option("--family", cfg.family, "conditional distribution")
        ->check(CLI::IsMember({"gaussian", "poisson", "bernoulli"}));
    sub->add_flag("--ml", cfg.ml, "gaussian fits: ML instead of REML");
    sub->add_option("--threads", cfg.threads, "worker threads (default: MIXSEL_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--format", cfg.format, "output format")
        ->check(CLI::IsMember({"table", "json"}));
    sub->add_option_function<double>(
           "--zero-tol", [&](double v) { cfg.zero_tol = v; },
           "boundary tolerance for zero variance components")
        ->check(CLI::PositiveNumber);
  };

  add_common(app.add_subcommand("fit", "fit one model and print its summary"));
  add_common(app.add_subcommand("caic", "fit one model and print its conditional AIC"));
  CLI::App* step = app.add_subcommand("step", "stepwise cAIC search from a start model");
  add_common(step);
  step->add_option("--direction", cfg.direction)
      ->check(CLI::IsMember({"backward", "forward", "both"}));
  step->add_option("--group-candidates", cfg.group_candidates, "grouping factors to try")
      ->delimiter(',');
  step->add_option("--slope-candidates", cfg.slope_candidates, "random-slope variables to try")
      ->delimiter(',');
  step->add_option("--fix-ef", cfg.fix_ef, "fixed-effect variables open to change")
      ->delimiter(',');
  step->add_option("--keep-fixed", cfg.keep_fixed, "fixed/smooth variables that must stay")
      ->delimiter(',');
  step->add_option("--keep-random", cfg.keep_random, "random terms that must stay, e.g. \"(1 | g)\"")
      ->delimiter(',');
  step->add_option("--max-slopes", cfg.max_slopes, "slope limit per grouping factor");
  step->add_flag("--allow-use-across", cfg.allow_use_across,
                 "allow one slope variable on several grouping factors");
  step->add_flag("--calc-non-optim", cfg.calc_non_optim, "keep non-converged candidates");
  step->add_option("--bs-type", cfg.bs_type, "smooth basis for forward upgrades");
  step->add_flag("--trace", cfg.trace, "print the per-step candidate tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  return run_command(cfg, out, err);
}

}  // namespace mixsel
