#ifndef MIXSEL_DATA_HPP
#define MIXSEL_DATA_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mixsel {

// One dataset column. Numeric columns carry values; categorical columns carry
// integer level codes plus the level labels in first-appearance order.
struct Column {
  bool numeric = true;
  Eigen::VectorXd values;          // numeric payload
  std::vector<int> codes;          // categorical payload
  std::vector<std::string> levels;  // level labels, first-appearance order
};

struct Dataset {
  std::vector<std::string> names;
  std::vector<Column> columns;
  long n = 0;

  const Column* find(const std::string& name) const;
  // Same as find() but throws input_error naming the missing column.
  const Column& require(const std::string& name) const;
  // Categorical view of a column: categorical columns pass through; numeric
  // columns are coded by distinct value in first-appearance order (CSV files
  // carry no type metadata, so integer group labels stay usable).
  Column as_categorical(const std::string& name) const;
};

// Assemble a dataset from named numeric columns (test/simulation helper).
Dataset make_dataset(const std::vector<std::pair<std::string, Eigen::VectorXd>>& numeric,
                     const std::vector<std::pair<std::string, std::vector<std::string>>>& categorical = {});

}  // namespace mixsel

#endif
