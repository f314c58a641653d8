#pragma once

#include "revert/common.hpp"

#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

// Small helpers shared by the line-oriented text formats (trials, models,
// thresholds, DMP files, graphs, scenarios, traces).
namespace revert::textio {

/// Shortest representation that round-trips exactly (17 significant digits).
std::string fmt(double v);

std::vector<std::string> split_ws(std::string_view line);
std::vector<std::string> split(std::string_view s, char delim);
std::string_view trim(std::string_view s);

double parse_double(std::string_view token, std::size_t line = 0);
long parse_long(std::string_view token, std::size_t line = 0);

/// Parses `key=value` tokens; tokens without '=' are rejected.
std::map<std::string, std::string> parse_kv(const std::vector<std::string>& tokens,
                                            std::size_t first, std::size_t line);

const std::string& require_key(const std::map<std::string, std::string>& kv,
                               const std::string& key, std::size_t line);

void write_row(std::ostream& os, const Eigen::Ref<const Eigen::RowVectorXd>& row);
void write_matrix(std::ostream& os, const Mat& m);

/// Cursor over the non-blank, non-comment lines of a text stream.
class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}
  /// Next significant line, trimmed; false at EOF. Lines starting with "//"
  /// are comments.
  bool next(std::string& line);
  std::size_t line_no() const noexcept { return line_no_; }
  /// Reads the next line and splits it; throws at EOF.
  std::vector<std::string> expect_tokens(std::string_view what);
  /// Reads `rows` lines of `cols` numbers each.
  Mat read_matrix(long rows, long cols);

 private:
  std::istream& is_;
  std::size_t line_no_ = 0;
};

}  // namespace revert::textio
