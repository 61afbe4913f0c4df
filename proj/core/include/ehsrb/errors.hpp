#pragma once

#include <stdexcept>
#include <string>

namespace ehsrb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid SystemSpec or malformed configuration file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// State outside the trapping region, zero tangent vector and similar.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A passage that did not reach the exit sphere before the integration horizon.
class HorizonError : public DomainError {
 public:
  HorizonError(const std::string& what, double horizon)
      : DomainError(what), horizon_(horizon) {}
  double horizon() const { return horizon_; }

 private:
  double horizon_;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class StatisticsError : public Error {
 public:
  using Error::Error;
};

// Trace whose angle to the unstable axis vanishes identically.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Merge cap exceeded while building an admissible decomposition.
class DiagnosticsError : public Error {
 public:
  using Error::Error;
};

}  // namespace ehsrb
