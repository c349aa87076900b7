#include "csv.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "mixsel/errors.hpp"

namespace mixsel {

namespace {

// One record, honoring quoted fields (embedded commas, quotes, newlines).
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool quoted = false, any = false;
  int c;
  while ((c = in.get()) != EOF) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field += static_cast<char>(c);
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      fields.push_back(std::move(field));
      return true;
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      return true;
    } else {
      field += static_cast<char>(c);
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size();
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open " + path);

  std::vector<std::string> header;
  if (!read_record(in, header) || header.empty())
    throw input_error(path + ": empty file");
  {
    std::set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second)
        throw input_error(path + ": duplicate header '" + h + "'");
  }

  std::vector<std::vector<std::string>> cells(header.size());
  std::vector<std::string> row;
  long nrow = 0;
  while (read_record(in, row)) {
    if (row.size() == 1 && row[0].empty()) continue;  // trailing blank line
    if (row.size() != header.size())
      throw input_error(path + ": row " + std::to_string(nrow + 2) + " has " +
                        std::to_string(row.size()) + " fields, expected " +
                        std::to_string(header.size()));
    for (size_t j = 0; j < row.size(); ++j) cells[j].push_back(row[j]);
    ++nrow;
  }
  if (nrow == 0) throw input_error(path + ": no data rows");

  Dataset d;
  d.n = nrow;
  d.names = header;
  for (size_t j = 0; j < header.size(); ++j) {
    std::vector<double> nums(nrow);
    bool numeric = true;
    for (long i = 0; i < nrow && numeric; ++i)
      numeric = parse_number(cells[j][i], nums[i]);
    Column c;
    if (numeric) {
      c.numeric = true;
      c.values = Eigen::Map<Eigen::VectorXd>(nums.data(), nrow);
    } else {
      c.numeric = false;
      c.codes.resize(nrow);
      std::map<std::string, int> seen;
      for (long i = 0; i < nrow; ++i) {
        auto it = seen.find(cells[j][i]);
        if (it == seen.end()) {
          it = seen.emplace(cells[j][i], static_cast<int>(c.levels.size())).first;
          c.levels.push_back(cells[j][i]);
        }
        c.codes[i] = it->second;
      }
    }
    d.columns.push_back(std::move(c));
  }
  return d;
}

}  // namespace mixsel
