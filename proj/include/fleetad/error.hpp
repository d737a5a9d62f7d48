#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fleetad {

enum class ErrorCode {
  MissingFile,
  RaggedRows,
  NonNumeric,
  MissingValue,
  HeterogeneousSchema,
  EmptySelection,
  WindowTooLong,
  LengthMismatch,
  NotNormalized,
  BinMismatch,
  KOutOfRange,
  DisconnectedCluster,
  UnknownDevice,
  BadShape,
  NonFiniteLoss,
  ArchitectureMismatch,
  ShapeMismatch,
  EmptyCluster,
  PlanMismatch,
  StaleState,
  SingleClass,
  BadSpec,
  ConfigInvalid,
  StageDependencyMissing,
  ArtifactCorrupt,
  IoError,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; the code is stable and
// machine-parsable, the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fleetad
