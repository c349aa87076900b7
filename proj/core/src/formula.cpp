#include "mixsel/formula.hpp"

#include <algorithm>
#include <cctype>

#include "mixsel/errors.hpp"

namespace mixsel {

std::vector<std::string> RandomTerm::component_names() const {
  std::vector<std::string> out;
  if (has_intercept) out.push_back("(Intercept)");
  out.insert(out.end(), slopes.begin(), slopes.end());
  return out;
}

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  ModelFormula parse() {
    ModelFormula f;
    f.response = ident("response");
    expect('~');
    bool saw_one = false, saw_zero = false;
    for (;;) {
      term(f, saw_one, saw_zero);
      skip_ws();
      if (pos_ >= s_.size()) break;
      if (s_[pos_] == '+') {
        ++pos_;
        continue;
      }
      fail("expected '+' or end of formula");
    }
    if (!saw_one && !saw_zero && f.fixed.empty() && !f.has_randoms())
      fail("empty right-hand side");
    f.intercept = !saw_zero;
    for (size_t i = 0; i < f.randoms.size(); ++i)
      for (size_t j = i + 1; j < f.randoms.size(); ++j)
        if (f.randoms[i] == f.randoms[j])
          fail("duplicate random term " + render_random_term(f.randoms[i]));
    return f;
  }

 private:
  void term(ModelFormula& f, bool& saw_one, bool& saw_zero) {
    skip_ws();
    if (pos_ >= s_.size()) fail("expected a term");
    char c = s_[pos_];
    if (c == '1') {
      ++pos_;
      saw_one = true;
      return;
    }
    if (c == '0') {
      ++pos_;
      saw_zero = true;
      return;
    }
    if (c == '(') {
      f.randoms.push_back(random_term());
      return;
    }
    size_t mark = pos_;
    std::string id = ident("term");
    skip_ws();
    if (id == "s" && pos_ < s_.size() && s_[pos_] == '(') {
      f.smooths.push_back(smooth_term());
      return;
    }
    if (pos_ < s_.size() && (s_[pos_] == ':' || s_[pos_] == '*'))
      fail("interaction terms are not supported");
    if (std::find(f.fixed.begin(), f.fixed.end(), id) != f.fixed.end()) {
      pos_ = mark;
      fail("duplicate fixed term " + id);
    }
    f.fixed.push_back(id);
  }

  RandomTerm random_term() {
    expect('(');
    RandomTerm t;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '|') fail("empty random-term expression");
    bool intercept_set = false;
    if (pos_ < s_.size() && (s_[pos_] == '0' || s_[pos_] == '1')) {
      t.has_intercept = s_[pos_] == '1';
      intercept_set = true;
      ++pos_;
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == '+') {
        ++pos_;
      } else if (pos_ < s_.size() && s_[pos_] == '|') {
        if (!t.has_intercept) fail("empty random-term expression");
        goto group;  // "(1 | g)"
      } else {
        fail("expected '+' or '|' in random term");
      }
    }
    for (;;) {
      skip_ws();
      t.slopes.push_back(ident("random-term variable"));
      skip_ws();
      if (pos_ < s_.size() && (s_[pos_] == ':' || s_[pos_] == '*'))
        fail("interaction terms are not supported");
      if (pos_ < s_.size() && s_[pos_] == '+') {
        ++pos_;
        continue;
      }
      break;
    }
  group:
    if (!intercept_set) t.has_intercept = true;  // "(x | g)" keeps the intercept
    expect('|');
    skip_ws();
    t.group = ident("grouping variable");
    expect(')');
    t.correlated = t.n_components() > 1;
    return t;
  }

  SmoothTerm smooth_term() {
    expect('(');
    SmoothTerm t;
    skip_ws();
    t.variable = ident("smooth variable");
    for (;;) {
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ')') {
        ++pos_;
        break;
      }
      expect(',');
      skip_ws();
      std::string key = ident("smooth argument");
      expect('=');
      skip_ws();
      if (key == "bs") {
        t.basis_label = quoted();
        if (t.basis_label.empty()) fail("unknown basis type \"\"");
      } else if (key == "k") {
        t.k = integer();
        if (t.k < 2) fail("k must be at least 2");
      } else if (key == "g") {
        t.degree = integer();
        if (t.degree < 1) fail("g must be at least 1");
      } else {
        fail("unknown smooth argument '" + key + "'");
      }
    }
    return t;
  }

  std::string ident(const char* what) {
    skip_ws();
    size_t start = pos_;
    auto head = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; };
    auto body = [&](char c) { return head(c) || std::isdigit(static_cast<unsigned char>(c)); };
    if (pos_ >= s_.size() || !head(s_[pos_]))
      fail(std::string("expected ") + what);
    while (pos_ < s_.size() && body(s_[pos_])) ++pos_;
    return s_.substr(start, pos_ - start);
  }

  std::string quoted() {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != '"') fail("expected a quoted string");
    size_t end = s_.find('"', pos_ + 1);
    if (end == std::string::npos) fail("unterminated string");
    std::string out = s_.substr(pos_ + 1, end - pos_ - 1);
    pos_ = end + 1;
    return out;
  }

  int integer() {
    skip_ws();
    size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ == start) fail("expected an integer");
    return std::stoi(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c)
      fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) {
    throw input_error("formula syntax error at byte " + std::to_string(pos_) + ": " + msg);
  }

  const std::string& s_;
  size_t pos_ = 0;
};

}  // namespace

ModelFormula parse_formula(const std::string& text) { return Parser(text).parse(); }

std::string render_random_term(const RandomTerm& t) {
  std::string e = t.has_intercept ? "1" : "0";
  for (const auto& v : t.slopes) e += " + " + v;
  return "(" + e + " | " + t.group + ")";
}

std::string render_smooth_term(const SmoothTerm& t) {
  std::string out = "s(" + t.variable;
  if (t.basis_label != "trunc") out += ", bs = \"" + t.basis_label + "\"";
  if (t.k != 10) out += ", k = " + std::to_string(t.k);
  if (t.degree != 3) out += ", g = " + std::to_string(t.degree);
  return out + ")";
}

std::string render_formula(const ModelFormula& f) {
  std::vector<std::string> terms;
  if (!f.intercept) terms.push_back("0");
  for (const auto& v : f.fixed) terms.push_back(v);
  for (const auto& s : f.smooths) terms.push_back(render_smooth_term(s));
  for (const auto& r : f.randoms) terms.push_back(render_random_term(r));
  if (terms.empty()) terms.push_back("1");
  std::string rhs = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) rhs += " + " + terms[i];
  return f.response + " ~ " + rhs;
}

ModelFormula reduce_by_component_names(const ModelFormula& f,
                                       const std::vector<std::vector<std::string>>& kept) {
  if (kept.size() != f.randoms.size())
    throw input_error("reduce_by_component_names: need one kept-list per random term");
  ModelFormula out = f;
  out.randoms.clear();
  for (size_t i = 0; i < f.randoms.size(); ++i) {
    const RandomTerm& t = f.randoms[i];
    auto names = t.component_names();
    for (const auto& k : kept[i])
      if (std::find(names.begin(), names.end(), k) == names.end())
        throw input_error("component '" + k + "' not present in " + render_random_term(t));
    RandomTerm r;
    r.group = t.group;
    r.has_intercept = std::find(kept[i].begin(), kept[i].end(), "(Intercept)") != kept[i].end();
    for (const auto& v : t.slopes)
      if (std::find(kept[i].begin(), kept[i].end(), v) != kept[i].end())
        r.slopes.push_back(v);
    if (r.n_components() == 0) continue;
    r.correlated = t.correlated && r.n_components() > 1;
    out.randoms.push_back(std::move(r));
  }
  return out;
}

}  // namespace mixsel
