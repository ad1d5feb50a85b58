#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace heterospectra {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched or invalid matrix dimensions, asymmetric input where symmetry is required.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument outside its allowed range (rank, level, theta, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class NotPsdError : public Error {
 public:
  NotPsdError(const std::string& what, double eigenvalue)
      : Error(what + " (eigenvalue " + std::to_string(eigenvalue) + ")"), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

/// Rank-deficient inputs: no spectral gap, singular alignment, zero signal, singular covariance.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Too many replicate failures in a Monte Carlo run.
class ExperimentError : public Error {
 public:
  using Error::Error;
};

}  // namespace heterospectra
