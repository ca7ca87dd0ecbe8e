#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dmpc::io {

/// Shortest decimal form that round-trips through binary64 ("%.17g" family).
std::string format_double(double value);

/// Minimal CSV emitter: a fixed header row plus appended records. Fields are
/// written verbatim, so cells must not contain commas or line breaks (all our
/// tables are numeric or enum-like); violations throw std::invalid_argument.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns);

  std::size_t column_count() const { return columns_.size(); }
  std::size_t row_count() const { return rows_.size(); }

  void append(std::vector<std::string> row);
  void append_numeric(const Eigen::VectorXd& row);

  std::string str() const;
  /// Writes header + rows to `path`; throws std::runtime_error on I/O errors.
  void write(const std::string& path) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// Parsed CSV contents (same dialect as CsvWriter: no quoting).
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws std::out_of_range when absent.
  std::size_t column_index(const std::string& name) const;
  /// Cell parsed as a double; throws std::invalid_argument on junk.
  double number(std::size_t row, std::size_t column) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

}  // namespace dmpc::io
