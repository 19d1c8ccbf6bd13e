#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vortexline/common.hpp"

namespace vortexline::io {

/// 17 significant digits: parses back to the same double.
inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes to a sibling temporary file and renames it into place.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  atomic_write(path, j.dump(2) + "\n");
}

/// Buffered CSV: one header line, then rows of cells.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { append_row(header); }

  CsvWriter& cell(double v) { return push(fmt17(v)); }
  CsvWriter& cell(long long v) { return push(std::to_string(v)); }
  CsvWriter& cell(int v) { return push(std::to_string(v)); }
  CsvWriter& cell(std::size_t v) { return push(std::to_string(v)); }
  CsvWriter& cell(const std::string& v) { return push(v); }
  CsvWriter& cell(const char* v) { return push(v); }

  void end_row() {
    if (row_.size() != columns_) throw Error(ErrorCode::InvalidInput, "CSV row has the wrong number of cells");
    append_row(row_);
    row_.clear();
    ++rows_;
  }
  std::size_t rows() const { return rows_; }
  const std::string& str() const { return buf_; }
  void save(const std::filesystem::path& path) const { atomic_write(path, buf_); }

 private:
  CsvWriter& push(std::string s) {
    row_.push_back(std::move(s));
    return *this;
  }
  void append_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) buf_ += ',';
      buf_ += cells[i];
    }
    buf_ += '\n';
  }

  std::size_t columns_;
  std::vector<std::string> row_;
  std::string buf_;
  std::size_t rows_ = 0;
};

}  // namespace vortexline::io
