#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pgev::csv {

/// Shortest decimal text that parses back to the identical double.
std::string format(double v);
std::string format(long long v);
inline std::string format(int v) { return format(static_cast<long long>(v)); }
inline std::string format(std::size_t v) { return format(static_cast<long long>(v)); }
inline std::string format(bool v) { return v ? "1" : "0"; }
inline std::string format(std::string_view v) { return std::string(v); }
inline std::string format(const char* v) { return std::string(v); }
inline std::string format(const std::string& v) { return v; }

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t row, const std::string& what)
      : std::runtime_error(file + ": row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

double parse_double(std::string_view cell, const std::string& file, std::size_t row);
long long parse_int(std::string_view cell, const std::string& file, std::size_t row);

/// Header-indexed table. Row numbers are 1-based file lines (header = 1).
class Table {
 public:
  static Table read(const std::filesystem::path& path);

  /// Column index; throws ParseError naming the file if absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;

  std::size_t rows() const { return cells_.size(); }
  std::string_view cell(std::size_t row, std::size_t col) const { return cells_[row][col]; }
  std::size_t line(std::size_t row) const { return lines_[row]; }
  const std::string& file() const { return file_; }

  double number(std::size_t row, std::size_t col) const {
    return parse_double(cell(row, col), file_, line(row));
  }
  long long integer(std::size_t row, std::size_t col) const {
    return parse_int(cell(row, col), file_, line(row));
  }

 private:
  std::string file_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> cells_;
  std::vector<std::size_t> lines_;
};

/// Streams rows to a file; the header is written on construction.
class Writer {
 public:
  Writer(const std::filesystem::path& path, std::initializer_list<std::string_view> header);

  template <class... Ts>
  void row(const Ts&... values) {
    bool first = true;
    ((out_ << (first ? "" : ",") << format(values), first = false), ...);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace pgev::csv
