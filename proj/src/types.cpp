#include "etdkf/types.hpp"

namespace etdkf {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::DisconnectedSensorGraph: return "DisconnectedSensorGraph";
    case ErrorCode::DefectiveSplitting: return "DefectiveSplitting";
    case ErrorCode::NotObservable: return "NotObservable";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::UnstableClosedLoop: return "UnstableClosedLoop";
    case ErrorCode::ControllabilityLost: return "ControllabilityLost";
    case ErrorCode::PlacementFailed: return "PlacementFailed";
    case ErrorCode::NoSolution: return "NoSolution";
    case ErrorCode::ZeroGain: return "ZeroGain";
    case ErrorCode::MahlerBoundViolated: return "MahlerBoundViolated";
    case ErrorCode::ZetaInfeasible: return "ZetaInfeasible";
    case ErrorCode::MareDiverged: return "MareDiverged";
    case ErrorCode::SyncSpectrumUnstable: return "SyncSpectrumUnstable";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::InfeasibleRank: return "InfeasibleRank";
    case ErrorCode::VirtualNotDetectable: return "VirtualNotDetectable";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace etdkf
