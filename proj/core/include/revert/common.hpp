#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace revert {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Seeded generator used everywhere randomness is needed. Same seed, same
/// build => bit-identical streams.
using Rng = std::mt19937_64;

/// 3 position + 4 quaternion + 3 force + 3 torque.
inline constexpr int kFeatureDim = 13;

inline constexpr double kDefaultRateHz = 200.0;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that breaks a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace revert
