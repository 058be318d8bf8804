#pragma once

#include <stdexcept>
#include <string>

namespace wccopf {

/// Malformed case or config document. The message names the offending field.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Document is well-formed but describes an invalid grid (bad bus ids,
/// disconnected graph, ...).
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run configuration is incomplete or inconsistent.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double achieved = 0.0)
      : std::runtime_error(what), achieved_(achieved) {}

  /// Achieved tolerance (for quadrature failures), 0 when not applicable.
  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

}  // namespace wccopf
