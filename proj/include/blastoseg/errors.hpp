#pragma once

#include <stdexcept>
#include <string>

namespace blastoseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or raster shapes disagree. `axis()` names the offending axis.
class DimensionError : public Error {
 public:
  DimensionError(std::string axis, const std::string& what)
      : Error("dimension error on axis '" + axis + "': " + what), axis_(std::move(axis)) {}
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class ConfigurationError : public Error {
 public:
  explicit ConfigurationError(const std::string& what) : Error("configuration error: " + what) {}
};

class UnsupportedConfiguration : public Error {
 public:
  explicit UnsupportedConfiguration(const std::string& what)
      : Error("unsupported configuration: " + what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error("state error: " + what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation error: " + what) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what) : Error("precondition error: " + what) {}
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& what) : Error("checkpoint error: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io error: " + what) {}
};

/// Non-finite values met during training. Carries where it happened.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, int epoch, int batch, std::string parameter)
      : Error(what), epoch_(epoch), batch_(batch), parameter_(std::move(parameter)) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  int epoch_;
  int batch_;
  std::string parameter_;
};

}  // namespace blastoseg
