#include "mvavg/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "mvavg/errors.hpp"

namespace mvavg {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  for (const auto& name : header) cell(std::string_view(name));
  end_row();
}

void CsvWriter::separator() {
  if (in_row_ == columns_ && columns_ > 0)
    throw std::logic_error("CsvWriter: row already has " + std::to_string(columns_) + " cells");
  if (in_row_ > 0) buffer_.push_back(',');
  ++in_row_;
}

CsvWriter& CsvWriter::cell(double value) {
  separator();
  buffer_ += format_double(value);
  return *this;
}

CsvWriter& CsvWriter::cell(long long value) {
  separator();
  buffer_ += std::to_string(value);
  return *this;
}

CsvWriter& CsvWriter::cell(unsigned long long value) {
  separator();
  buffer_ += std::to_string(value);
  return *this;
}

CsvWriter& CsvWriter::cell(std::string_view text) {
  separator();
  buffer_ += text;
  return *this;
}

void CsvWriter::end_row() {
  if (in_row_ != columns_)
    throw std::logic_error("CsvWriter: row has " + std::to_string(in_row_) + " cells, expected " +
                           std::to_string(columns_));
  buffer_.push_back('\n');
  in_row_ = 0;
}

void CsvWriter::save(const std::filesystem::path& path) const { write_text_file(path, buffer_); }

std::vector<std::string> component_names(std::string_view prefix, std::size_t dim) {
  std::vector<std::string> names;
  if (dim == 1) {
    names.emplace_back(prefix);
    return names;
  }
  for (std::size_t i = 1; i <= dim; ++i) names.push_back(std::string(prefix) + std::to_string(i));
  return names;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mvavg
