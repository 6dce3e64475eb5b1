#include "eigenclt/csv_io.hpp"

#include <charconv>

#include "eigenclt/error.hpp"

namespace eigenclt {

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path) : out_(path) {
  if (!out_) fail(ErrorCode::ConfigError, "cannot open '" + path + "' for writing");
}

void CsvWriter::header(const std::vector<std::string>& names) {
  begin_row();
  for (const auto& n : names) field(n);
  end_row();
}

void CsvWriter::begin_row() { first_ = true; }

void CsvWriter::sep() {
  if (!first_) out_ << ',';
  first_ = false;
}

void CsvWriter::field(double v) {
  sep();
  out_ << format_double(v);
}

void CsvWriter::field(long long v) {
  sep();
  out_ << v;
}

void CsvWriter::field(const std::string& v) {
  sep();
  out_ << v;
}

void CsvWriter::end_row() { out_ << '\n'; }

}  // namespace eigenclt
