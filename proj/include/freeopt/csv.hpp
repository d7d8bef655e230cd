#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace freeopt {

// Comma-separated file with a header row. Fields may be double-quoted; a
// quoted field may contain commas and doubled quotes but not newlines.
struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based line of each row

  // Column index, or npos.
  std::size_t column(std::string_view name) const;
};

// Throws IoError if the file cannot be read and DataError for a missing or
// malformed header. Ragged rows are kept; callers check widths.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text, std::string source);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
  std::size_t width_;
};

// Shortest text that reads back to the same double.
std::string format_double(double value);

}  // namespace freeopt
