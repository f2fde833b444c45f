#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace mvavg {

/// Shortest round-trip decimal representation ('.' decimal point, no locale).
std::string format_double(double value);

/// Comma-separated writer with '\n' line endings. Cells are appended in
/// order; end_row() terminates the line.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& cell(double value);
  CsvWriter& cell(long long value);
  CsvWriter& cell(unsigned long long value);
  CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(unsigned value) { return cell(static_cast<unsigned long long>(value)); }
  CsvWriter& cell(unsigned long value) { return cell(static_cast<unsigned long long>(value)); }
  CsvWriter& cell(std::string_view text);
  void end_row();

  const std::string& str() const noexcept { return buffer_; }
  std::size_t columns() const noexcept { return columns_; }

  /// Writes the buffer; throws IoError on failure.
  void save(const std::filesystem::path& path) const;

 private:
  void separator();

  std::string buffer_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

/// Column names "prefix" for dim 1, else "prefix1".."prefixd".
std::vector<std::string> component_names(std::string_view prefix, std::size_t dim);

void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace mvavg
