#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace loopmem {

/// A precondition on an argument was violated (bad label, out-of-range efficiency, ...).
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Not enough counts in the slots an estimator needs.
class InsufficientStatistics : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// SNR requested against a zero background.
class UndefinedSnr : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Malformed config, CSV or record file. Carries the 1-based line number (0 when unknown).
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Calibration could not reach its targets; residuals holds (name, achieved - target) pairs.
class CalibrationFailure : public std::runtime_error {
public:
  CalibrationFailure(const std::string& what,
                     std::vector<std::pair<std::string, double>> residuals)
      : std::runtime_error(what), residuals_(std::move(residuals)) {}

  const std::vector<std::pair<std::string, double>>& residuals() const noexcept {
    return residuals_;
  }

private:
  std::vector<std::pair<std::string, double>> residuals_;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace loopmem
