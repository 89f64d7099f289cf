#pragma once

#include "dsmpc/model.hpp"
#include "dsmpc/synthesis.hpp"
#include "dsmpc/uncertainty.hpp"

#include <string>
#include <string_view>

namespace dsmpc {

std::string_view to_string(TerminalShape shape);
TerminalShape parse_terminal_shape(std::string_view text);

struct SynthesisOptions {
    GammaPolicy gamma_policy = GammaPolicy::PerConstraint;
    TerminalShape terminal_shape = TerminalShape::Box;
};

/// Everything the online controller needs from offline synthesis.
struct SynthesisArtifacts {
    static constexpr int kVersion = 1;

    int version = kVersion;
    std::string model_hash;
    GammaPolicy gamma_policy = GammaPolicy::Global;
    TerminalShape terminal_shape = TerminalShape::Box;
    double closed_loop_radius = 0.0;
    CovarianceSchedule schedule;
    TightenedSets sets;
    LyapunovCost cost;
    TerminalSet terminal;
};

SynthesisArtifacts synthesize(const NetworkModel& model, const std::string& model_hash,
                              const SynthesisOptions& options = {});

std::string serialize_artifacts(const SynthesisArtifacts& artifacts);
SynthesisArtifacts load_artifacts(const std::string& text);

/// Throws ArtifactModelMismatch when the artifact was built from another model or has the wrong sizes.
void check_artifacts(const SynthesisArtifacts& artifacts, const NetworkModel& model, const std::string& model_hash);

/// Human-readable summary: tightening per stage, terminal scale, radii, certificate margins.
std::string synthesis_report(const SynthesisArtifacts& artifacts, const NetworkModel& model);

}  // namespace dsmpc
