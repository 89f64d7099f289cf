#pragma once

#include "dsmpc/artifact.hpp"
#include "dsmpc/error.hpp"
#include "dsmpc/model.hpp"
#include "dsmpc/model_io.hpp"
#include "dsmpc/sim.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#define EXPECT_DSMPC_ERROR(statement, expected_code)                                          \
    do {                                                                                      \
        try {                                                                                 \
            statement;                                                                        \
            ADD_FAILURE() << "expected " << ::dsmpc::to_string(expected_code) << ", no throw"; \
        } catch (const ::dsmpc::Error& e) {                                                   \
            EXPECT_EQ(e.code(), expected_code) << e.what();                                   \
        }                                                                                     \
    } while (false)

namespace dsmpc::test {

inline std::filesystem::path data_path(const std::string& name) {
    return std::filesystem::path(DSMPC_DATA_DIR) / name;
}

inline const NetworkModel& example_model() {
    static const NetworkModel model = load_network_file(data_path("coupled-double-integrators.model.json"));
    return model;
}

inline const SynthesisArtifacts& example_artifacts() {
    static const SynthesisArtifacts artifacts = synthesize(example_model(), model_hash(example_model()));
    return artifacts;
}

inline ScenarioSpec example_scenario() {
    return load_scenario(read_text_file(data_path("coupled-double-integrators.scenario.json")));
}

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

/// One state, one input, one output; |x| <= x_max (chance) and |u| <= u_max (nominal).
inline SubsystemSpec scalar_subsystem(double a, double b, double noise, double x_max = 1.0, double u_max = 10.0) {
    SubsystemSpec s;
    s.state_dim = s.input_dim = s.output_dim = 1;
    s.neighbors = {0};
    s.a_blocks = {scalar(a)};
    s.c_blocks = {scalar(1.0)};
    s.b = scalar(b);
    s.noise_cov = scalar(noise);
    s.state_set = {Matrix{{1.0}, {-1.0}}, Vector::Constant(2, x_max)};
    s.state_nominal = {false, false};
    s.input_set = {Matrix{{1.0}, {-1.0}}, Vector::Constant(2, u_max)};
    s.input_nominal = {true, true};
    s.p_x = s.p_u = 0.7;
    s.q = scalar(1.0);
    s.r = scalar(1.0);
    s.t = scalar(1.0);
    return s;
}

/// Two independent scalar subsystems.
inline NetworkModel decoupled_pair(double a0, double a1, int horizon = 3) {
    SubsystemSpec s0 = scalar_subsystem(a0, 1.0, 0.01);
    SubsystemSpec s1 = scalar_subsystem(a1, 1.0, 0.02);
    s1.neighbors = {1};
    s0.gain = scalar(0.0);
    s1.gain = scalar(0.0);
    return assemble_network({s0, s1}, horizon, Distribution::Gaussian);
}

}  // namespace dsmpc::test
