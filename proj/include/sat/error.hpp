#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the offending 1-based line number.
class ParseError : public Error {
public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Node or feature index outside the declared range.
class BoundsError : public Error {
public:
  using Error::Error;
};

/// Argument violates a documented precondition.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Iterative eigensolver did not reach the requested tolerance.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : Error(what), residuals_(std::move(residuals)) {}

  const std::vector<double>& residuals() const noexcept { return residuals_; }

private:
  std::vector<double> residuals_;
};

}  // namespace sat
