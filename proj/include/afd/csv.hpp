#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace afd {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column, or -1.
  int column(const std::string& name) const;
};

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

}  // namespace afd
