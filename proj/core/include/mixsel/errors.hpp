#ifndef MIXSEL_ERRORS_HPP
#define MIXSEL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mixsel {

// Bad user input: malformed formula, missing column, unusable data.
class input_error : public std::runtime_error {
 public:
  explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: singular systems, diverged solvers, non-PD Hessians.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mixsel

#endif
