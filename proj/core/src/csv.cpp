#include "adarank/csv.hpp"

#include <cstdio>

#include "adarank/error.hpp"

namespace adarank {

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : out_(path), path_(path) {
  if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
}

CsvWriter::~CsvWriter() {
  if (!closed_) out_.flush();
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
  if (!out_) throw IoError("write failure on '" + path_.string() + "'");
}

void CsvWriter::close() {
  out_.close();
  closed_ = true;
  if (out_.fail()) throw IoError("close failure on '" + path_.string() + "'");
}

}  // namespace adarank
