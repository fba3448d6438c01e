#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "preflab/errors.hpp"
#include "preflab/mathutil.hpp"

namespace preflab {

// Minimal CSV writer. Every float goes through format_double (shortest
// round-trip form) so files are byte-stable across re-runs.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {
    line_builder_.reserve(128);
  }

  void add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) throw InputError("CsvWriter: cell count mismatch");
    rows_.push_back(cells);
  }

  std::string to_string() const {
    std::string out;
    out += join(columns_);
    out += '\n';
    for (const auto& row : rows_) {
      out += join(row);
      out += '\n';
    }
    return out;
  }

  void write_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConstructionError("CsvWriter: cannot open " + path);
    f << to_string();
  }

  static std::string cell(double v) { return format_double(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out += ',';
      out += cells[i];
    }
    return out;
  }

  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
  std::string line_builder_;
};

}  // namespace preflab
