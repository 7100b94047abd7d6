#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace riemmix {

/// Caller supplied arguments that violate a precondition (shape, range, SPD-ness).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Floating-point failure during evaluation (overflow, underflow, lost definiteness).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Euclidean retraction left the SPD cone.
class RetractionFailure : public NumericError {
 public:
  static constexpr std::size_t kNoComponent = static_cast<std::size_t>(-1);

  RetractionFailure(double min_eigenvalue, std::size_t component = kNoComponent)
      : NumericError(describe(min_eigenvalue, component)),
        min_eigenvalue_(min_eigenvalue),
        component_(component) {}

  double min_eigenvalue() const noexcept { return min_eigenvalue_; }
  std::size_t component() const noexcept { return component_; }

  RetractionFailure with_component(std::size_t component) const {
    return RetractionFailure(min_eigenvalue_, component);
  }

 private:
  static std::string describe(double min_eig, std::size_t component) {
    std::string msg = "retraction left the SPD cone (min eigenvalue " + std::to_string(min_eig) + ")";
    if (component != kNoComponent) msg += " in component " + std::to_string(component);
    return msg;
  }

  double min_eigenvalue_;
  std::size_t component_;
};

/// Malformed input file; carries a 1-based line and column where known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column = 0)
      : std::runtime_error(what + " (line " + std::to_string(line) +
                           (column ? ", column " + std::to_string(column) : std::string()) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace riemmix
