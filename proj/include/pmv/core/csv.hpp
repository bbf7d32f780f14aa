#pragma once

// Minimal CSV tables. Every file starts with a `# schema=<name> v<version>`
// line followed by the header row.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pmv/core/error.hpp"

namespace pmv {

inline constexpr int kCsvSchemaVersion = 1;

/// Fixed-precision formatting so that output is stable across runs.
inline std::string fmt_num(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

class CsvTable {
 public:
  CsvTable() = default;
  CsvTable(std::string schema, std::vector<std::string> columns)
      : schema_(std::move(schema)), columns_(std::move(columns)) {}

  const std::string& schema() const { return schema_; }
  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t row_count() const { return rows_.size(); }

  void add_row(std::vector<std::string> row) {
    if (row.size() != columns_.size())
      throw DimensionError("csv row has " + std::to_string(row.size()) + " fields, expected " +
                           std::to_string(columns_.size()));
    rows_.push_back(std::move(row));
  }

  std::size_t column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i] == name) return i;
    throw EvaluationError("missing column '" + std::string(name) + "'" +
                          (schema_.empty() ? "" : " in " + schema_));
  }

  const std::string& cell(std::size_t row, std::string_view column) const {
    return rows_.at(row).at(column_index(column));
  }

  /// Empty cells and "nan" read as NaN.
  double number(std::size_t row, std::string_view column) const {
    const std::string& s = cell(row, column);
    if (s.empty() || s == "nan") return std::nan("");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw EvaluationError("column '" + std::string(column) + "' row " + std::to_string(row) +
                            ": not a number '" + s + "'");
    return v;
  }

  std::string to_string() const {
    std::ostringstream out;
    out << "# schema=" << schema_ << " v" << kCsvSchemaVersion << '\n';
    write_row(out, columns_);
    for (const auto& r : rows_) write_row(out, r);
    return out.str();
  }

  static CsvTable parse(std::string_view text) {
    CsvTable t;
    bool have_header = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      std::string_view line =
          text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() : nl + 1;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) continue;
      if (line.front() == '#') {
        const auto at = line.find("schema=");
        if (at != std::string_view::npos && t.schema_.empty()) {
          auto rest = line.substr(at + 7);
          t.schema_ = std::string(rest.substr(0, rest.find(' ')));
        }
        continue;
      }
      auto fields = split_fields(line);
      if (!have_header) {
        t.columns_ = std::move(fields);
        have_header = true;
      } else {
        if (fields.size() != t.columns_.size())
          throw EvaluationError("csv row with " + std::to_string(fields.size()) +
                                " fields, header has " + std::to_string(t.columns_.size()));
        t.rows_.push_back(std::move(fields));
      }
    }
    if (!have_header) throw EvaluationError("csv has no header row");
    return t;
  }

 private:
  static void write_row(std::ostream& out, const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }

  static std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      auto c = line.find(',', start);
      auto f = line.substr(start, c == std::string_view::npos ? std::string_view::npos : c - start);
      while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
      while (!f.empty() && f.back() == ' ') f.remove_suffix(1);
      out.emplace_back(f);
      if (c == std::string_view::npos) break;
      start = c + 1;
    }
    return out;
  }

  std::string schema_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace pmv
