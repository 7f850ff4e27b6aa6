#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace adarank {

// 17 significant digits: enough to round-trip any double exactly.
std::string format_g17(double x);

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  ~CsvWriter();

  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  bool closed_ = false;
};

}  // namespace adarank
