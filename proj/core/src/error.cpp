#include "dsmpc/error.hpp"

namespace dsmpc {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::GraphNotBidirectional: return "GraphNotBidirectional";
        case ErrorCode::NoiseNotPD: return "NoiseNotPD";
        case ErrorCode::UnstableClosedLoop: return "UnstableClosedLoop";
        case ErrorCode::UnboundedConstraintSet: return "UnboundedConstraintSet";
        case ErrorCode::EmptyConstraintSet: return "EmptyConstraintSet";
        case ErrorCode::NonSquare: return "NonSquare";
        case ErrorCode::RiccatiDivergence: return "RiccatiDivergence";
        case ErrorCode::GainRequired: return "GainRequired";
        case ErrorCode::InvalidProbability: return "InvalidProbability";
        case ErrorCode::NotSchurStable: return "NotSchurStable";
        case ErrorCode::DistributedBoundDiverges: return "DistributedBoundDiverges";
        case ErrorCode::NegativeDiagonal: return "NegativeDiagonal";
        case ErrorCode::EmptyTightenedSet: return "EmptyTightenedSet";
        case ErrorCode::InvarianceCertificateFailed: return "InvarianceCertificateFailed";
        case ErrorCode::DegenerateConstraint: return "DegenerateConstraint";
        case ErrorCode::InfeasibleSteadyStateSet: return "InfeasibleSteadyStateSet";
        case ErrorCode::NumericalBreakdown: return "NumericalBreakdown";
        case ErrorCode::NotPD: return "NotPD";
        case ErrorCode::TopologyMismatch: return "TopologyMismatch";
        case ErrorCode::InitialInfeasible: return "InitialInfeasible";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ArtifactModelMismatch: return "ArtifactModelMismatch";
        case ErrorCode::EmptyTraceDir: return "EmptyTraceDir";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, std::string_view module, const std::string& message)
    : std::runtime_error(std::string(module) + ": " + std::string(to_string(code)) + ": " + message),
      code_(code),
      module_(module) {}

}  // namespace dsmpc
