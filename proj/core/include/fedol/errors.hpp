#pragma once

#include <stdexcept>
#include <string>

namespace fedol {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& msg) : Error(msg) {}
};

class TrainingDivergedError : public Error {
 public:
  explicit TrainingDivergedError(const std::string& msg) : Error(msg) {}
};

class InfeasiblePartitionError : public Error {
 public:
  explicit InfeasiblePartitionError(const std::string& msg) : Error(msg) {}
};

class IncompatibleArchitectureError : public Error {
 public:
  explicit IncompatibleArchitectureError(const std::string& msg) : Error(msg) {}
};

class LedgerError : public Error {
 public:
  explicit LedgerError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace fedol
