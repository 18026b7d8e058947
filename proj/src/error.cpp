#include "ruleprompt/error.hpp"

#include <fmt/format.h>

#include "ruleprompt/hashing.hpp"

namespace ruleprompt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::TooManySensors: return "TooManySensors";
    case ErrorKind::QuotaUnreachable: return "QuotaUnreachable";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::EmptyModule: return "EmptyModule";
    case ErrorKind::InsufficientExemplars: return "InsufficientExemplars";
    case ErrorKind::UnparseableValueBlock: return "UnparseableValueBlock";
    case ErrorKind::SingleClassData: return "SingleClassData";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::EmptySelection: return "EmptySelection";
    case ErrorKind::EmptyRun: return "EmptyRun";
    case ErrorKind::DatasetError: return "DatasetError";
    case ErrorKind::DatasetMismatch: return "DatasetMismatch";
    case ErrorKind::EndpointUnavailable: return "EndpointUnavailable";
    case ErrorKind::ModelMissing: return "ModelMissing";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::string hex_digest(std::uint64_t value) { return fmt::format("{:016x}", value); }

}  // namespace ruleprompt
