#include "dsmpc/ocp.hpp"

#include "common.hpp"

#include <random>

namespace dsmpc {
namespace {

SolverSettings tight() {
    SolverSettings s;
    s.eps_abs = 1e-9;
    s.eps_rel = 1e-9;
    s.max_iterations = 100000;
    return s;
}

class ExampleOcp : public ::testing::Test {
protected:
    const NetworkModel& model = test::example_model();
    const SynthesisArtifacts& art = test::example_artifacts();
    const Vector y1 = Vector{{-1.0, 0.0, 1.0}};
    const Vector y2 = Vector{{-7.0, -2.0, 7.0}};

    OcpSpec spec(const Vector& y_ref) const { return build_ocp(model, art.sets, art.terminal, art.cost.P, y_ref); }
};

TEST(OcpLayoutTest, ScalarHorizonOneCounts) {
    SubsystemSpec s = test::scalar_subsystem(0.5, 1.0, 0.01);
    s.gain = test::scalar(0.0);
    const NetworkModel m = assemble_network({s}, 1, Distribution::Gaussian);
    const SynthesisArtifacts a = synthesize(m, model_hash(m));
    const OcpSpec spec = build_ocp(m, a.sets, a.terminal, a.cost.P, Vector::Zero(1));
    EXPECT_EQ(spec.layout.size(), 6);
    EXPECT_EQ(spec.qp.num_variables(), 6);
}

TEST_F(ExampleOcp, VariableCountAndStructure) {
    const OcpSpec s = spec(y1);
    EXPECT_EQ(s.layout.size(), 6 * 8 + 3 * 7 + 6 + 3 + 3);
    EXPECT_EQ(s.layout.size(), 81);
    EXPECT_GE(min_eigenvalue(s.qp.cost), -1e-9);
    EXPECT_EQ(s.initial_rows, 6);
    ASSERT_EQ(s.qp.ellipsoids.size(), 1u);
    EXPECT_EQ(s.qp.ellipsoids[0].first_row, s.terminal_row);
    EXPECT_EQ(s.qp.ellipsoids[0].size, 2 * 6 + 3);
    // every dynamics row couples only stage t and t+1
    const OcpLayout& L = s.layout;
    for (int t = 0; t < L.horizon; ++t) {
        for (Index r = 0; r < L.n; ++r) {
            const Index row = L.n + t * L.n + r;
            for (Index c = 0; c < L.size(); ++c) {
                if (s.qp.constraints(row, c) == 0.0) continue;
                const bool ok = (c >= L.z(t) && c < L.z(t + 2)) || (c >= L.v(t) && c < L.v(t) + L.m);
                EXPECT_TRUE(ok) << "row " << row << " col " << c;
            }
        }
    }
}

TEST_F(ExampleOcp, ObjectiveMatchesCostDefinition) {
    OcpSpec s = spec(y2);
    std::mt19937_64 rng(61);
    std::normal_distribution<double> normal;
    Vector x(s.layout.size());
    for (Index j = 0; j < x.size(); ++j) x(j) = normal(rng);
    const OcpSolution u = unpack_solution(s, x);
    double cost = 0.0;
    for (int t = 0; t < s.layout.horizon; ++t) {
        const Vector dz = u.z[static_cast<std::size_t>(t)] - u.z_s;
        const Vector dv = u.v[static_cast<std::size_t>(t)] - u.v_s;
        cost += dz.dot(model.Q * dz) + dv.dot(model.R * dv);
    }
    const Vector dn = u.z.back() - u.z_s;
    const Vector dy = u.y_s - y2;
    cost += dn.dot(art.cost.P * dn) + dy.dot(model.T * dy);
    EXPECT_NEAR(ocp_objective(s, x), cost, 1e-9 * std::max(1.0, cost));
}

TEST_F(ExampleOcp, StationarySolutionHasZeroCost) {
    const OcpSpec s = spec(y1);
    const SteadyState ss = admissible_steady_state(y1, make_steady_state_oracle(model, art.sets, &art.terminal));
    const OcpSolution sol = solve_ocp(s, ss.z_s, Backend::Centralized, tight());
    ASSERT_EQ(sol.status, SolveStatus::Optimal);
    EXPECT_NEAR(sol.objective, 0.0, 1e-6);
    for (const Vector& z : sol.z) EXPECT_LT((z - ss.z_s).cwiseAbs().maxCoeff(), 1e-5);
    const Vector shifted = shift_solution(s, sol);
    EXPECT_LT((shifted - sol.x).cwiseAbs().maxCoeff(), 1e-5);
}

TEST_F(ExampleOcp, OptimalSolutionSatisfiesContract) {
    const OcpSpec s = spec(y2);
    const Vector x0{{0.5, 0.3, -0.2, 0.1, 1.0, -0.4}};
    const OcpSolution sol = solve_ocp(s, x0, Backend::Centralized, {});
    ASSERT_EQ(sol.status, SolveStatus::Optimal);
    EXPECT_LE(constraint_violation(s, sol.x, x0), 1e-6);
    for (int t = 0; t < s.layout.horizon; ++t) {
        const Vector& z = sol.z[static_cast<std::size_t>(t)];
        EXPECT_LE((model.A * z + model.B * sol.v[static_cast<std::size_t>(t)] - sol.z[static_cast<std::size_t>(t + 1)])
                      .cwiseAbs()
                      .maxCoeff(),
                  1e-6);
        EXPECT_LE((art.sets.state[static_cast<std::size_t>(t)].H * z - art.sets.state[static_cast<std::size_t>(t)].h).maxCoeff(),
                  1e-6);
    }
    Vector alpha(15);
    alpha << sol.z.back() - sol.z_s, sol.z_s, sol.v_s;
    EXPECT_LE(art.terminal.value(alpha), 1.0 + 1e-6);
    EXPECT_LT((sol.y_s - model.C * sol.z_s).cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(ExampleOcp, FarInitialStateIsInfeasibleInModeOne) {
    const OcpSpec s = spec(y1);
    const Vector far{{0.0, 5.0, 0.0, 0.0, 0.0, 0.0}};
    EXPECT_FALSE(initial_state_admissible(s, far));
    EXPECT_TRUE(initial_state_admissible(s, Vector::Zero(6)));
    const OcpSolution sol = solve_ocp(s, far, Backend::Centralized, {});
    EXPECT_NE(sol.status, SolveStatus::Optimal);
    EXPECT_TRUE(mode1_failed(sol));
}

TEST_F(ExampleOcp, ShiftedSolutionIsFeasibleForModeTwo) {
    OcpSpec s = spec(y2);
    std::mt19937_64 rng(67);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    for (int trial = 0; trial < 25; ++trial) {
        Vector x0(6);
        for (Index j = 0; j < 6; ++j) x0(j) = (j % 2 == 1 ? 1.0 : 5.0) * u(rng);
        set_reference(s, trial % 2 == 0 ? y1 : y2);
        const OcpSolution sol = solve_ocp(s, x0, Backend::Centralized, {});
        ASSERT_EQ(sol.status, SolveStatus::Optimal);
        const Vector shifted = shift_solution(s, sol);
        EXPECT_LE(constraint_violation(s, shifted, sol.z[1]), 1e-6) << "trial " << trial;
    }
}

TEST_F(ExampleOcp, SetReferenceMatchesRebuild) {
    OcpSpec s = spec(y1);
    set_reference(s, y2);
    const OcpSpec fresh = spec(y2);
    EXPECT_LT((s.qp.linear - fresh.qp.linear).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(s.constant, fresh.constant, 1e-9);
    EXPECT_EQ(s.qp.cost, fresh.qp.cost);
}

TEST_F(ExampleOcp, OutputOffsetTranslationLeavesPlanUnchanged) {
    // y = C z + d with y_ref + d has the same minimizing (z, v)
    const Vector x0{{0.2, -0.1, 0.0, 0.3, -0.5, 0.0}};
    const Vector d{{3.0, -1.5, 0.25}};
    OcpSpec base = spec(y2);
    OcpSpec moved = spec(y2 + d);
    const Index link = (base.layout.horizon + 2) * base.layout.n;
    moved.qp.lower.segment(link, 3) = d;
    moved.qp.upper.segment(link, 3) = d;
    const OcpSolution a = solve_ocp(base, x0, Backend::Centralized, tight());
    const OcpSolution b = solve_ocp(moved, x0, Backend::Centralized, tight());
    ASSERT_EQ(a.status, SolveStatus::Optimal);
    ASSERT_EQ(b.status, SolveStatus::Optimal);
    EXPECT_LT((a.x.head(base.layout.ys()) - b.x.head(base.layout.ys())).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_LT((b.y_s - a.y_s - d).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_NEAR(a.objective, b.objective, 1e-5 * std::max(1.0, a.objective));
}

TEST_F(ExampleOcp, DecompositionCoversProblem) {
    const OcpSpec s = spec(y1);
    const DistributedOcp split = decompose(s);
    EXPECT_GE(split.agents.size(), 3u);
    EXPECT_NO_THROW(split.topology.validate());
    std::vector<int> covered(static_cast<std::size_t>(s.qp.num_rows()), 0);
    for (const auto& rows : split.agent_rows) {
        for (Index r : rows) ++covered[static_cast<std::size_t>(r)];
    }
    for (int c : covered) EXPECT_EQ(c, 1);
}

TEST_F(ExampleOcp, DumpListsEverySection) {
    const std::string text = dump_ocp(spec(y1));
    for (const char* key : {"\nP 81 81", "\nq 1 81", "\nA ", "\nlower ", "\nupper ", "\nellipsoid ", "\nshape 15 15"}) {
        EXPECT_NE(text.find(key), std::string::npos) << key;
    }
}

TEST(Backend, ParseRoundTrip) {
    EXPECT_EQ(parse_backend(to_string(Backend::Distributed)), Backend::Distributed);
    EXPECT_EQ(parse_backend("centralized"), Backend::Centralized);
    EXPECT_THROW(parse_backend("gpu"), Error);
}

}  // namespace
}  // namespace dsmpc
