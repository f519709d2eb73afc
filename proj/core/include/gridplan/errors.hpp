#pragma once

#include <stdexcept>
#include <string>

namespace gridplan {

enum class ErrorKind {
  // network topology
  CycleDetected,
  Disconnected,
  MultipleSlack,
  UnknownBus,
  NegativeVoltageSquare,
  // constraint assembly
  SingularImpedance,
  InvalidBounds,
  HorizonMismatch,
  // robust
  InvalidBudget,
  OracleTooLarge,
  // solver
  IterationLimit,
  NumericalBreakdown,
  NotOptimal,
  // predictor
  DimensionMismatch,
  CacheMismatch,
  // conformal
  EmptyCalibration,
  EmptyTestSet,
  MissingThreshold,
  // training
  ConfigInvalid,
  SolveFailed,
  // io
  ParseError,
  ValidationError,
};

const char* error_kind_name(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gridplan
