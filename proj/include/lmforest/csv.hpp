#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "lmforest/errors.hpp"

namespace lmforest {

// Delimited text with a mandatory header row. Cells are kept verbatim;
// "NA" and the empty string stand for missing values.
struct DelimitedTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return int(i);
    }
    return -1;
  }

  int require_column(const std::string& name) const {
    int idx = column_index(name);
    if (idx < 0) {
      throw DataError("MissingColumn", "column '" + name + "' not found");
    }
    return idx;
  }
};

inline bool cell_missing(const std::string& cell) {
  return cell.empty() || cell == "NA";
}

// Strict real parse; missing cells map to NaN with missing=true.
inline double parse_real(const std::string& cell, bool* missing = nullptr) {
  if (cell_missing(cell)) {
    if (missing) *missing = true;
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (missing) *missing = false;
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw DataError("UnparseableNumber", "cannot parse '" + cell + "'");
  }
  return value;
}

inline DelimitedTable read_delimited(std::istream& in, char delim = ',') {
  DelimitedTable table;
  std::string line;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && !header_done) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, delim)) cells.push_back(cell);
    if (!line.empty() && line.back() == delim) cells.emplace_back();
    if (!header_done) {
      table.columns = std::move(cells);
      header_done = true;
    } else {
      cells.resize(table.columns.size());
      table.rows.push_back(std::move(cells));
    }
  }
  if (!header_done) {
    throw DataError("EmptyTable", "input has no header row");
  }
  return table;
}

inline DelimitedTable read_delimited_file(const std::string& path,
                                          char delim = ',') {
  std::ifstream in(path);
  if (!in) {
    throw DataError("FileNotFound", "cannot open '" + path + "'");
  }
  return read_delimited(in, delim);
}

// Shortest text that round-trips the double exactly.
inline std::string format_real(double x) {
  if (std::isnan(x)) return "NA";
  char buf[40];
  if (x == std::floor(x) && std::abs(x) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%.0f", x);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == x) break;
  }
  return buf;
}

inline void write_delimited(std::ostream& out, const DelimitedTable& table,
                            char delim = ',') {
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out << delim;
    out << table.columns[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << delim;
      out << row[i];
    }
    out << '\n';
  }
}

}  // namespace lmforest
