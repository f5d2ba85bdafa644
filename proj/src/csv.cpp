#include "pgev/csv.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

namespace pgev::csv {

std::string format(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string format(long long v) { return std::to_string(v); }

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

double parse_double(std::string_view cell, const std::string& file, std::size_t row) {
  cell = trim(cell);
  if (cell == "nan") return std::nan("");
  if (cell == "inf") return INFINITY;
  if (cell == "-inf") return -INFINITY;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
    throw ParseError(file, row, "not a number: '" + std::string(cell) + "'");
  }
  return v;
}

long long parse_int(std::string_view cell, const std::string& file, std::size_t row) {
  cell = trim(cell);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
    throw ParseError(file, row, "not an integer: '" + std::string(cell) + "'");
  }
  return v;
}

Table Table::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Table t;
  t.file_ = path.string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (t.header_.empty()) {
      t.header_ = std::move(fields);
      continue;
    }
    if (fields.size() != t.header_.size()) {
      throw ParseError(t.file_, lineno,
                       "expected " + std::to_string(t.header_.size()) + " fields, got " +
                           std::to_string(fields.size()));
    }
    t.cells_.push_back(std::move(fields));
    t.lines_.push_back(lineno);
  }
  if (t.header_.empty()) throw ParseError(t.file_, 1, "missing header row");
  return t;
}

bool Table::has_column(std::string_view name) const {
  for (const auto& h : header_) {
    if (h == name) return true;
  }
  return false;
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  throw ParseError(file_, 1, "missing column '" + std::string(name) + "'");
}

Writer::Writer(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
    : out_(path) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  bool first = true;
  for (auto h : header) {
    out_ << (first ? "" : ",") << h;
    first = false;
  }
  out_ << '\n';
}

}  // namespace pgev::csv
