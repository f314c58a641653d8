#include "revert/textio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>

namespace revert::textio {

std::string fmt(double v) {
  if (v == 0.0) return std::signbit(v) ? "-0" : "0";
  char buf[40];
  // %.17g always round-trips; try shorter first to keep files readable.
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(delim, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos
                                                                    : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view token, std::size_t line) {
  const std::string tmp(token);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size())
    throw ParseError("expected a decimal number, got '" + tmp + "'", line);
  return v;
}

long parse_long(std::string_view token, std::size_t line) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size())
    throw ParseError("expected an integer, got '" + std::string(token) + "'", line);
  return v;
}

std::map<std::string, std::string> parse_kv(const std::vector<std::string>& tokens,
                                            std::size_t first, std::size_t line) {
  std::map<std::string, std::string> kv;
  for (std::size_t i = first; i < tokens.size(); ++i) {
    const auto eq = tokens[i].find('=');
    if (eq == std::string::npos || eq == 0)
      throw ParseError("expected key=value, got '" + tokens[i] + "'", line);
    kv[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
  }
  return kv;
}

const std::string& require_key(const std::map<std::string, std::string>& kv,
                               const std::string& key, std::size_t line) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ParseError("missing field '" + key + "'", line);
  return it->second;
}

void write_row(std::ostream& os, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (j) os << ' ';
    os << fmt(row[j]);
  }
  os << '\n';
}

void write_matrix(std::ostream& os, const Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) write_row(os, m.row(i));
}

bool LineReader::next(std::string& line) {
  std::string raw;
  while (std::getline(is_, raw)) {
    ++line_no_;
    const auto t = trim(raw);
    if (t.empty() || t.starts_with("//")) continue;
    line.assign(t);
    return true;
  }
  return false;
}

std::vector<std::string> LineReader::expect_tokens(std::string_view what) {
  std::string line;
  if (!next(line))
    throw ParseError("unexpected end of input, expected " + std::string(what), line_no_);
  return split_ws(line);
}

Mat LineReader::read_matrix(long rows, long cols) {
  Mat m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    const auto tok = expect_tokens("matrix row");
    if (static_cast<long>(tok.size()) != cols)
      throw ParseError("matrix row has " + std::to_string(tok.size()) + " entries, expected " +
                           std::to_string(cols),
                       line_no_);
    for (long j = 0; j < cols; ++j) m(i, j) = parse_double(tok[j], line_no_);
  }
  return m;
}

}  // namespace revert::textio
