#pragma once

#include <stdexcept>
#include <string>

namespace sivcast {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An index or range falls outside an array.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity showed up where finite values are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed, too short, or otherwise unusable.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value or key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The ODE integrator produced a non-finite state.
class SimulationError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::size_t epoch, std::size_t batch)
      : NumericalError(what), epoch_(epoch), batch_(batch) {}

  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace sivcast
