#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsmpc {

enum class ErrorCode {
    // model
    DimensionMismatch,
    GraphNotBidirectional,
    NoiseNotPD,
    UnstableClosedLoop,
    UnboundedConstraintSet,
    EmptyConstraintSet,
    NonSquare,
    RiccatiDivergence,
    GainRequired,
    InvalidProbability,
    // uncertainty
    NotSchurStable,
    DistributedBoundDiverges,
    NegativeDiagonal,
    EmptyTightenedSet,
    // synthesis
    InvarianceCertificateFailed,
    DegenerateConstraint,
    InfeasibleSteadyStateSet,
    // solver
    NumericalBreakdown,
    NotPD,
    TopologyMismatch,
    // sim
    InitialInfeasible,
    // io / cli
    ParseError,
    IoError,
    ArtifactModelMismatch,
    EmptyTraceDir,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a stable error code and the module that raised it.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string_view module, const std::string& message);

    ErrorCode code() const noexcept { return code_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorCode code_;
    std::string module_;
};

}  // namespace dsmpc
