#include "mixsel/data.hpp"

#include <cstdio>
#include <map>

#include "mixsel/errors.hpp"

namespace mixsel {

const Column* Dataset::find(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return &columns[i];
  return nullptr;
}

const Column& Dataset::require(const std::string& name) const {
  const Column* c = find(name);
  if (!c) throw input_error("column not found: " + name);
  return *c;
}

static std::string numeric_label(double v) {
  // integral values get integer labels, matching how they appear in a CSV
  if (v == static_cast<long long>(v)) return std::to_string(static_cast<long long>(v));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

Column Dataset::as_categorical(const std::string& name) const {
  const Column& c = require(name);
  if (!c.numeric) return c;
  Column out;
  out.numeric = false;
  out.codes.resize(c.values.size());
  std::map<double, int> seen;
  for (long i = 0; i < c.values.size(); ++i) {
    double v = c.values[i];
    auto it = seen.find(v);
    if (it == seen.end()) {
      it = seen.emplace(v, static_cast<int>(out.levels.size())).first;
      out.levels.push_back(numeric_label(v));
    }
    out.codes[i] = it->second;
  }
  return out;
}

Dataset make_dataset(const std::vector<std::pair<std::string, Eigen::VectorXd>>& numeric,
                     const std::vector<std::pair<std::string, std::vector<std::string>>>& categorical) {
  Dataset d;
  for (const auto& [name, v] : numeric) {
    d.names.push_back(name);
    Column c;
    c.numeric = true;
    c.values = v;
    d.columns.push_back(std::move(c));
    d.n = v.size();
  }
  for (const auto& [name, labels] : categorical) {
    d.names.push_back(name);
    Column c;
    c.numeric = false;
    c.codes.resize(labels.size());
    std::map<std::string, int> seen;
    for (size_t i = 0; i < labels.size(); ++i) {
      auto it = seen.find(labels[i]);
      if (it == seen.end()) {
        it = seen.emplace(labels[i], static_cast<int>(c.levels.size())).first;
        c.levels.push_back(labels[i]);
      }
      c.codes[i] = it->second;
    }
    d.n = static_cast<long>(labels.size());
    d.columns.push_back(std::move(c));
  }
  return d;
}

}  // namespace mixsel
