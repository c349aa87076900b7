#ifndef MIXSEL_CSV_HPP
#define MIXSEL_CSV_HPP

#include <string>

#include "mixsel/data.hpp"

namespace mixsel {

// RFC 4180 CSV with a mandatory header row. Columns whose every value parses
// as a number become numeric; everything else becomes categorical with levels
// in first-appearance order. Ragged rows, duplicate headers, and files with
// no data rows are errors.
Dataset load_csv(const std::string& path);

}  // namespace mixsel

#endif
