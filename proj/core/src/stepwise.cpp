#include "mixsel/stepwise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "mixsel/errors.hpp"

namespace mixsel {

namespace {

// ----- numeric rendering (R-style fixed columns) ---------------------------

// Decimals needed to show v at 7 significant digits with trailing zeros
// trimmed: s - 1 - e for s surviving mantissa digits and decimal exponent e.
int needed_decimals(double v) {
  if (v == 0.0 || !std::isfinite(v)) return 0;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6e", std::abs(v));
  std::string sbuf(buf);
  size_t epos = sbuf.find('e');
  int e = std::atoi(sbuf.c_str() + epos + 1);
  std::string digits;
  for (char c : sbuf.substr(0, epos))
    if (c >= '0' && c <= '9') digits.push_back(c);
  while (digits.size() > 1 && digits.back() == '0') digits.pop_back();
  int s = static_cast<int>(digits.size());
  return std::max(0, s - 1 - e);
}

std::string fixed_str(double v, int dec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", dec, v);
  return buf;
}

std::string trimmed4(double v) {
  std::string s = fixed_str(v, 4);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

std::string rjust(const std::string& s, size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string render_table(const std::vector<StepRow>& rows) {
  if (rows.empty()) return {};
  int dl = 0, dd = 0, dc = 0;
  for (const auto& r : rows) {
    dl = std::max(dl, needed_decimals(r.loglik));
    dd = std::max(dd, needed_decimals(r.df));
    dc = std::max(dc, needed_decimals(r.caic));
  }
  std::vector<std::array<std::string, 4>> cells;
  std::array<size_t, 4> w = {6, 13, 2, 4};  // header widths
  for (const auto& r : rows) {
    std::array<std::string, 4> c = {r.label, fixed_str(r.loglik, dl), fixed_str(r.df, dd),
                                    fixed_str(r.caic, dc)};
    for (int j = 0; j < 4; ++j) w[j] = std::max(w[j], c[j].size());
    cells.push_back(std::move(c));
  }
  std::ostringstream out;
  const char* headers[4] = {"models", "loglikelihood", "df", "caic"};
  for (int j = 0; j < 4; ++j) out << ' ' << rjust(headers[j], w[j]);
  out << '\n';
  for (const auto& c : cells) {
    for (int j = 0; j < 4; ++j) out << ' ' << rjust(c[j], w[j]);
    out << '\n';
  }
  return out.str();
}

// ----- formula helpers ------------------------------------------------------

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// right-hand side in construction order; "1" when only the intercept remains
std::string rhs_of(const ModelFormula& f) {
  std::vector<std::string> parts;
  if (!f.intercept) parts.push_back("0");
  for (const auto& v : f.fixed) parts.push_back(v);
  for (const auto& s : f.smooths) parts.push_back(render_smooth_term(s));
  for (const auto& r : f.randoms) parts.push_back(render_random_term(r));
  if (parts.empty()) return "1";
  return join(parts, " + ");
}

RandomTerm intercept_term(const std::string& g) {
  RandomTerm t;
  t.group = g;
  t.has_intercept = true;
  t.correlated = false;
  return t;
}

RandomTerm slope_term(const std::string& g, const std::string& v) {
  RandomTerm t;
  t.group = g;
  t.has_intercept = false;
  t.slopes = {v};
  t.correlated = false;
  return t;
}

std::vector<RandomTerm> uncorrelated_split(const RandomTerm& t) {
  std::vector<RandomTerm> out;
  if (t.has_intercept) out.push_back(intercept_term(t.group));
  for (const auto& s : t.slopes) out.push_back(slope_term(t.group, s));
  return out;
}

RandomTerm without_component(const RandomTerm& t, const std::string& comp) {
  RandomTerm o = t;
  if (comp == "(Intercept)") {
    o.has_intercept = false;
  } else {
    o.slopes.erase(std::find(o.slopes.begin(), o.slopes.end(), comp));
  }
  o.correlated = o.n_components() > 1;
  return o;
}

bool randoms_are_distinct(const ModelFormula& f) {
  std::set<std::string> seen;
  for (const auto& r : f.randoms)
    if (!seen.insert(render_random_term(r)).second) return false;
  return true;
}

// ----- candidate bookkeeping ------------------------------------------------

struct Candidate {
  ModelFormula formula;
  std::string label;
  FittedModel fit;  // the fit backing the numbers (after any reduction)
  CaicResult res;
  bool usable = false;
};

struct Incumbent {
  ModelFormula formula;
  FittedModel fit;
  CaicResult res;
};

bool has_zero_smooth(const FittedModel& m) {
  double tol = 1e-6 * (m.family == Family::gaussian ? std::sqrt(m.sigma2) : 1.0);
  for (const auto& b : m.dm().blocks)
    if (b.term_index < 0 && std::abs(m.theta[b.theta_offset]) <= tol) return true;
  return false;
}

double displayed_df(const Candidate& c) {
  if (c.fit.family == Family::gaussian && c.fit.q() == 0) return c.res.df + 1.0;
  return c.res.df;
}

double displayed_df(const Incumbent& inc) {
  if (inc.fit.family == Family::gaussian && inc.fit.q() == 0) return inc.res.df + 1.0;
  return inc.res.df;
}

// "~ " + fixed variables, smooths, then random terms by decreasing levels
std::string incumbent_display(const Incumbent& inc) {
  std::vector<std::string> parts;
  const ModelFormula& f = inc.formula;
  if (!f.intercept) parts.push_back("0");
  for (const auto& v : f.fixed) parts.push_back(v);
  for (const auto& s : f.smooths) parts.push_back(render_smooth_term(s));
  std::vector<int> nlev(f.randoms.size(), 0);
  for (const auto& b : inc.fit.dm().blocks)
    if (b.term_index >= 0 && b.term_index < static_cast<int>(nlev.size()))
      nlev[b.term_index] = b.nlev;
  std::vector<int> order(f.randoms.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return nlev[a] > nlev[b]; });
  for (int i : order) parts.push_back(render_random_term(f.randoms[i]));
  if (parts.empty()) return "~ 1";
  return "~ " + join(parts, " + ");
}

}  // namespace

StepResult step_caic(const ModelFormula& start, const Dataset& data, Family family,
                     const StepConfig& cfg) {
  if (cfg.direction != "backward" && cfg.direction != "forward" && cfg.direction != "both")
    throw input_error("step: direction must be backward, forward, or both");
  if (cfg.bs_type != "trunc")
    throw input_error("step: unsupported smooth basis: " + cfg.bs_type);
  for (const auto& v : cfg.group_candidates) data.require(v);
  for (const auto& v : cfg.slope_candidates) data.require(v);
  for (const auto& v : cfg.fix_ef) data.require(v);

  std::set<std::string> keep_fixed(cfg.keep_fixed.begin(), cfg.keep_fixed.end());
  std::set<std::string> keep_random;
  for (const auto& frag : cfg.keep_random) {
    ModelFormula f = parse_formula("y ~ 0 + " + frag);
    if (f.randoms.size() != 1 || !f.fixed.empty() || !f.smooths.empty())
      throw input_error("step: keep-random entry is not a single random term: " + frag);
    keep_random.insert(render_random_term(f.randoms[0]));
  }

  const bool gaussian = family == Family::gaussian;
  auto fit_candidate = [&](const ModelFormula& f) {
    return gaussian ? fit_lmm(f, data, !cfg.ml) : fit_glmm(f, data, family);
  };

  auto evaluate = [&](ModelFormula f) {
    Candidate c;
    c.label = "~" + rhs_of(f);
    c.formula = std::move(f);
    try {
      FittedModel m = fit_candidate(c.formula);
      bool conv = m.converged;
      CaicResult r = caic(m, cfg.threads);
      if (r.refitted) {
        conv = conv && r.refitted->converged;
        c.fit = *r.refitted;
        c.formula = *r.reduced_formula;
      } else {
        c.fit = std::move(m);
      }
      c.res = std::move(r);
      c.usable = (conv || cfg.calc_non_optim) && std::isfinite(c.res.caic);
    } catch (const std::exception&) {
      c.usable = false;
    }
    return c;
  };

  // ----- candidate generation ----------------------------------------------

  auto backward_candidates = [&](const ModelFormula& f) {
    std::vector<ModelFormula> out;
    auto add = [&](ModelFormula cand) {
      if (randoms_are_distinct(cand)) out.push_back(std::move(cand));
    };
    for (size_t ti = 0; ti < f.randoms.size(); ++ti) {
      const RandomTerm& t = f.randoms[ti];
      if (keep_random.count(render_random_term(t))) continue;
      if (t.n_components() >= 2) {
        {
          ModelFormula cand = f;
          auto split = uncorrelated_split(t);
          cand.randoms.erase(cand.randoms.begin() + ti);
          cand.randoms.insert(cand.randoms.begin() + ti, split.begin(), split.end());
          add(std::move(cand));
        }
        for (const auto& comp : t.component_names()) {
          ModelFormula cand = f;
          cand.randoms[ti] = without_component(t, comp);
          add(std::move(cand));
        }
      } else {
        ModelFormula cand = f;
        cand.randoms.erase(cand.randoms.begin() + ti);
        add(std::move(cand));
      }
    }
    std::set<std::string> fix_pool(cfg.fix_ef.begin(), cfg.fix_ef.end());
    for (size_t si = 0; si < f.smooths.size(); ++si) {
      const std::string& v = f.smooths[si].variable;
      if (!fix_pool.count(v) || keep_fixed.count(v)) continue;
      ModelFormula cand = f;
      cand.smooths.erase(cand.smooths.begin() + si);
      cand.fixed.push_back(v);
      add(std::move(cand));
    }
    for (size_t vi = 0; vi < f.fixed.size(); ++vi) {
      const std::string& v = f.fixed[vi];
      if (!fix_pool.count(v) || keep_fixed.count(v)) continue;
      ModelFormula cand = f;
      cand.fixed.erase(cand.fixed.begin() + vi);
      add(std::move(cand));
    }
    return out;
  };

  auto forward_candidates = [&](const ModelFormula& f) {
    std::vector<ModelFormula> out;
    std::set<std::string> groups_used;
    std::vector<std::string> groups_order;
    std::map<std::string, std::set<std::string>> slopes_of;
    for (const auto& t : f.randoms) {
      if (groups_used.insert(t.group).second) groups_order.push_back(t.group);
      for (const auto& s : t.slopes) slopes_of[t.group].insert(s);
    }
    for (const auto& g : cfg.group_candidates) {
      if (groups_used.count(g) || g == f.response) continue;
      ModelFormula cand = f;
      cand.randoms.push_back(intercept_term(g));
      if (randoms_are_distinct(cand)) out.push_back(std::move(cand));
    }
    for (const auto& x : cfg.slope_candidates) {
      for (const auto& g : groups_order) {
        if (x == g || x == f.response) continue;
        if (slopes_of[g].count(x)) continue;
        if (static_cast<int>(slopes_of[g].size()) >= cfg.max_slopes) continue;
        if (!cfg.allow_use_across) {
          bool used_elsewhere = false;
          for (const auto& [og, ss] : slopes_of)
            if (og != g && ss.count(x)) used_elsewhere = true;
          if (used_elsewhere) continue;
        }
        ModelFormula cand = f;
        cand.randoms.push_back(slope_term(g, x));
        if (randoms_are_distinct(cand)) out.push_back(std::move(cand));
      }
    }
    std::set<std::string> fixed_here(f.fixed.begin(), f.fixed.end());
    std::set<std::string> smooth_here;
    for (const auto& s : f.smooths) smooth_here.insert(s.variable);
    for (const auto& v : cfg.fix_ef) {
      if (v == f.response || fixed_here.count(v) || smooth_here.count(v)) continue;
      ModelFormula cand = f;
      cand.fixed.push_back(v);
      out.push_back(std::move(cand));
    }
    std::set<std::string> fix_pool(cfg.fix_ef.begin(), cfg.fix_ef.end());
    for (size_t vi = 0; vi < f.fixed.size(); ++vi) {
      const std::string& v = f.fixed[vi];
      if (!fix_pool.count(v) || keep_fixed.count(v) || smooth_here.count(v)) continue;
      ModelFormula cand = f;
      cand.fixed.erase(cand.fixed.begin() + vi);
      SmoothTerm st;
      st.variable = v;
      st.basis_label = cfg.bs_type;
      cand.smooths.push_back(st);
      out.push_back(std::move(cand));
    }
    return out;
  };

  // ----- driver -------------------------------------------------------------

  StepResult result;
  const std::string underline(45, '_');
  bool preamble_done = false;

  auto emit = [&](const std::string& text) {
    result.trace += text;
    if (cfg.trace) {
      std::fputs(text.c_str(), stdout);
      std::fflush(stdout);
    }
  };
  auto emit_block = [&](const std::string& text) {
    if (!preamble_done) {
      emit("Starting stepwise procedure...\n" + underline + "\n" + underline + "\n");
      preamble_done = true;
    }
    emit(text);
  };

  Incumbent inc;
  {
    FittedModel m0 = fit_candidate(start);
    CaicResult r0 = caic(m0, cfg.threads);
    if (r0.refitted) {
      inc.formula = *r0.reduced_formula;
      inc.fit = *r0.refitted;
    } else {
      inc.formula = start;
      inc.fit = std::move(m0);
    }
    inc.res = std::move(r0);
  }

  std::vector<bool> phases =
      cfg.direction == "both"
          ? std::vector<bool>{true, false}
          : std::vector<bool>{cfg.direction == "forward"};

  int step_no = 0;
  bool searching = true;
  bool smooth_stop = false;
  bool final_round_empty = true;
  while (searching) {
    bool improved = false;
    final_round_empty = true;
    for (bool forward : phases) {
      ++step_no;
      std::vector<ModelFormula> cands =
          forward ? forward_candidates(inc.formula) : backward_candidates(inc.formula);

      StepRecord rec;
      rec.number = step_no;
      rec.forward = forward;
      rec.incumbent_caic = inc.res.caic;
      rec.incumbent_display = incumbent_display(inc);

      std::vector<Candidate> evaluated;
      evaluated.reserve(cands.size());
      for (auto& f2 : cands) evaluated.push_back(evaluate(std::move(f2)));

      std::vector<int> usable;
      for (size_t i = 0; i < evaluated.size(); ++i)
        if (evaluated[i].usable) usable.push_back(static_cast<int>(i));

      for (int i : usable) {
        const Candidate& c = evaluated[i];
        rec.rows.push_back({c.label, c.res.cond_loglik, displayed_df(c), c.res.caic});
      }
      std::stable_sort(rec.rows.begin(), rec.rows.end(),
                       [](const StepRow& a, const StepRow& b) { return a.caic > b.caic; });

      if (!cands.empty()) {
        final_round_empty = false;
        std::ostringstream block;
        block << "\nStep " << step_no << (forward ? " (forward):  cAIC=" : " (backward):  cAIC=")
              << trimmed4(inc.res.caic) << '\n'
              << "Best model so far: " << rec.incumbent_display << '\n'
              << "New Candidates:\n\nCalculating cAIC for " << cands.size() << " model(s) ...\n\n"
              << render_table(rec.rows) << '\n'
              << underline << '\n'
              << underline << '\n';
        emit_block(block.str());
      }
      result.steps.push_back(std::move(rec));

      int best = -1;
      for (int i : usable)
        if (best < 0 || evaluated[i].res.caic < evaluated[best].res.caic) best = i;

      if (best >= 0 && evaluated[best].res.caic < inc.res.caic - 1e-10) {
        if (has_zero_smooth(evaluated[best].fit)) {
          searching = false;  // degenerate smooth: keep the previous incumbent
          smooth_stop = true;
        } else {
          Candidate& c = evaluated[best];
          inc.formula = std::move(c.formula);
          inc.fit = std::move(c.fit);
          inc.res = std::move(c.res);
          improved = true;
        }
        break;
      }
    }
    if (!improved) searching = false;
  }

  result.best_display = incumbent_display(inc);
  if (preamble_done)
    emit("\nBest model:  " + result.best_display + " , cAIC: " + trimmed4(inc.res.caic) + " \n" +
         underline + "\n");

  if (smooth_stop || has_zero_smooth(inc.fit))
    result.stop_reason = "zero-variance-smooth";
  else if (final_round_empty)
    result.stop_reason = "no-candidates";
  else
    result.stop_reason = "no-improvement";

  result.model = std::move(inc.fit);
  result.selection = std::move(inc.res);
  return result;
}

}  // namespace mixsel
