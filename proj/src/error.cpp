#include "fleetad/error.hpp"

namespace fleetad {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::NonNumeric: return "NonNumeric";
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::HeterogeneousSchema: return "HeterogeneousSchema";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::WindowTooLong: return "WindowTooLong";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::BinMismatch: return "BinMismatch";
    case ErrorCode::KOutOfRange: return "KOutOfRange";
    case ErrorCode::DisconnectedCluster: return "DisconnectedCluster";
    case ErrorCode::UnknownDevice: return "UnknownDevice";
    case ErrorCode::BadShape: return "BadShape";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::PlanMismatch: return "PlanMismatch";
    case ErrorCode::StaleState: return "StaleState";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::StageDependencyMissing: return "StageDependencyMissing";
    case ErrorCode::ArtifactCorrupt: return "ArtifactCorrupt";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace fleetad
