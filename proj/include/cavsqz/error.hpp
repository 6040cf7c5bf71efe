#pragma once

#include <stdexcept>
#include <string>

namespace cavsqz {

// Base of every error raised by the library. CLI maps ConfigError to exit
// code 2 and everything else to 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A dispersive-shift denominator is too close to a resonance.
class SingularityError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  FitError(const std::string& what, double residual_norm, int iterations)
      : Error(what), residual_norm_(residual_norm), iterations_(iterations) {}

  double residual_norm() const { return residual_norm_; }
  int iterations() const { return iterations_; }

 private:
  double residual_norm_;
  int iterations_;
};

// A record lacks an outcome needed by the requested estimator.
class MissingOutcome : public Error {
 public:
  explicit MissingOutcome(std::string field)
      : Error("record is missing outcome '" + field + "'"), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace cavsqz
