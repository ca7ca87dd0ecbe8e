#include "dualmpc/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace dmpc::io {

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace {

void check_cell(const std::string& cell) {
  if (cell.find_first_of(",\n\r") != std::string::npos) {
    throw std::invalid_argument("csv cell contains a comma or line break: " +
                                cell);
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

CsvWriter::CsvWriter(std::vector<std::string> columns)
    : columns_(std::move(columns)) {
  if (columns_.empty()) {
    throw std::invalid_argument("csv table needs at least one column");
  }
  for (const std::string& c : columns_) {
    check_cell(c);
  }
}

void CsvWriter::append(std::vector<std::string> row) {
  if (row.size() != columns_.size()) {
    throw std::invalid_argument("csv row arity mismatch: got " +
                                std::to_string(row.size()) + ", expected " +
                                std::to_string(columns_.size()));
  }
  for (const std::string& c : row) {
    check_cell(c);
  }
  rows_.push_back(std::move(row));
}

void CsvWriter::append_numeric(const Eigen::VectorXd& row) {
  std::vector<std::string> cells;
  cells.reserve(static_cast<std::size_t>(row.size()));
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    cells.push_back(format_double(row[i]));
  }
  append(std::move(cells));
}

std::string CsvWriter::str() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    out << (i == 0 ? "" : ",") << columns_[i];
  }
  out << '\n';
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i == 0 ? "" : ",") << row[i];
    }
    out << '\n';
  }
  return out.str();
}

void CsvWriter::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  out << str();
  if (!out.good()) {
    throw std::runtime_error("write failed: " + path);
  }
}

std::size_t CsvTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) {
      return i;
    }
  }
  throw std::out_of_range("csv column not found: " + name);
}

double CsvTable::number(std::size_t row, std::size_t column) const {
  const std::string& cell = rows.at(row).at(column);
  std::size_t used = 0;
  const double v = std::stod(cell, &used);
  if (used != cell.size()) {
    throw std::invalid_argument("csv cell is not a number: " + cell);
  }
  return v;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> cells = split_line(line);
    if (header) {
      table.columns = std::move(cells);
      header = false;
      continue;
    }
    if (cells.size() != table.columns.size()) {
      throw std::invalid_argument(
          "csv row arity mismatch at data row " +
          std::to_string(table.rows.size() + 1));
    }
    table.rows.push_back(std::move(cells));
  }
  if (header) {
    throw std::invalid_argument("csv text has no header row");
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open for reading: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

}  // namespace dmpc::io
