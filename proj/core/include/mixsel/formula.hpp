#ifndef MIXSEL_FORMULA_HPP
#define MIXSEL_FORMULA_HPP

#include <optional>
#include <string>
#include <vector>

namespace mixsel {

// One grouped random-effect term. An uncorrelated multi-slope specification
// is held as several RandomTerms of one component each, so correlated=true
// is only meaningful when the term has 2+ components.
struct RandomTerm {
  std::string group;
  bool has_intercept = true;
  std::vector<std::string> slopes;
  bool correlated = true;

  int n_components() const { return (has_intercept ? 1 : 0) + static_cast<int>(slopes.size()); }
  // "(Intercept)" plus slope names, in column order
  std::vector<std::string> component_names() const;
  bool operator==(const RandomTerm&) const = default;
};

struct SmoothTerm {
  std::string variable;
  std::string basis_label = "trunc";  // as written; anything but "trunc" maps to the truncated basis
  int degree = 3;
  int k = 10;
  bool operator==(const SmoothTerm&) const = default;
};

struct ModelFormula {
  std::string response;
  bool intercept = true;
  std::vector<std::string> fixed;  // fixed-effect variable names, formula order
  std::vector<RandomTerm> randoms;
  std::vector<SmoothTerm> smooths;

  bool has_randoms() const { return !randoms.empty() || !smooths.empty(); }
  bool operator==(const ModelFormula&) const = default;
};

// Recursive-descent parser for the formula mini-language:
//   formula := ident "~" rhs
//   rhs     := term { "+" term }
//   term    := "1" | "0" | ident | smooth | random
//   random  := "(" rexpr "|" ident ")"
//   rexpr   := [ ("0"|"1") "+" ] ident { "+" ident } | "1"
//   smooth  := "s(" ident ["," "bs" "=" quoted] ["," "k" "=" int] ["," "g" "=" int] ")"
// Whitespace-insensitive. ":" and "*" are rejected. Errors carry a byte offset.
ModelFormula parse_formula(const std::string& text);

// Canonical text form; parse(render(f)) is structurally equal to f.
std::string render_formula(const ModelFormula& f);

// Canonical text of a single random term: "(1 | g)", "(1 + x | g)", "(0 + x | g)".
std::string render_random_term(const RandomTerm& t);
std::string render_smooth_term(const SmoothTerm& t);

// Keep only the named components of each random term (one kept-list per term,
// in term order). Terms whose kept-list is empty are dropped. A correlated
// block reduced to several survivors stays correlated.
ModelFormula reduce_by_component_names(const ModelFormula& f,
                                       const std::vector<std::vector<std::string>>& kept);

}  // namespace mixsel

#endif
