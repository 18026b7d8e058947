#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ruleprompt {

enum class ErrorKind {
  EmptyInput,
  ShapeMismatch,
  InvalidArgument,
  TooManySensors,
  QuotaUnreachable,
  IoError,
  FormatError,
  EmptyModule,
  InsufficientExemplars,
  UnparseableValueBlock,
  SingleClassData,
  DivergedLoss,
  EmptySelection,
  EmptyRun,
  DatasetError,
  DatasetMismatch,
  EndpointUnavailable,
  ModelMissing,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-checkable kind alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ruleprompt
