#pragma once

#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace eigenclt {

// Minimal CSV writer; doubles are written with 17 significant digits so a
// round trip through the file is exact.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  CsvWriter(const std::string& path, const std::vector<std::string>& names) : CsvWriter(path) {
    header(names);
  }

  void header(const std::vector<std::string>& names);
  void begin_row();
  void field(double v);
  void field(long long v);
  void field(int v) { field(static_cast<long long>(v)); }
  void field(const std::string& v);
  void end_row();

 private:
  void sep();

  std::ofstream out_;
  bool first_ = true;
};

std::string format_double(double v);

}  // namespace eigenclt
