#pragma once

#include "dsmpc/artifact.hpp"
#include "dsmpc/model.hpp"
#include "dsmpc/sim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dsmpc::cli {

struct CheckOptions {
    int runs = 20;
    int coverage_samples = 20000;
    int boundary_samples = 1000;
    std::uint64_t seed = 1;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Invariant suite of every module at reduced sample sizes.
std::vector<CheckResult> run_checks(const NetworkModel& model, const SynthesisArtifacts& artifacts,
                                    const ScenarioSpec& scenario, const CheckOptions& options);

}  // namespace dsmpc::cli
