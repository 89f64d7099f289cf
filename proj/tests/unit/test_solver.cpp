#include "dsmpc/consensus.hpp"
#include "dsmpc/ocp.hpp"
#include "dsmpc/qp.hpp"

#include "../support/random_problems.hpp"
#include "common.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace dsmpc {
namespace {

SolverSettings tight() {
    SolverSettings s;
    s.eps_abs = 1e-9;
    s.eps_rel = 1e-9;
    s.max_iterations = 100000;
    return s;
}

ConicQp box_projection(const Vector& c) {
    const Index n = c.size();
    ConicQp qp;
    qp.cost = 2.0 * Matrix::Identity(n, n);
    qp.linear = -2.0 * c;
    qp.constraints = Matrix::Identity(n, n);
    qp.lower = Vector::Constant(n, -1.0);
    qp.upper = Vector::Constant(n, 1.0);
    return qp;
}

TEST(Centralized, BoxProjectionClamps) {
    const Vector c{{2.0, -0.3, -5.0, 0.9, 1.0}};
    const SolveResult r = solve_centralized(box_projection(c), tight());
    ASSERT_EQ(r.status, SolveStatus::Optimal);
    EXPECT_LT((r.x - c.cwiseMax(-1.0).cwiseMin(1.0)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Centralized, EqualityRow) {
    ConicQp qp;
    qp.cost = 2.0 * Matrix::Identity(1, 1);
    qp.linear = Vector::Zero(1);
    qp.constraints = Matrix::Identity(1, 1);
    qp.lower = qp.upper = Vector::Constant(1, 3.0);
    const SolveResult r = solve_centralized(qp, tight());
    ASSERT_EQ(r.status, SolveStatus::Optimal);
    EXPECT_NEAR(r.x(0), 3.0, 1e-8);
    EXPECT_NEAR(r.objective, 9.0, 1e-7);
}

TEST(Centralized, PlantedQpsMatchDenseKkt) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const Index eq = trial % 4;
        const test::PlantedQp p = test::planted_qp(rng, 20, eq);
        const Vector oracle = test::kkt_oracle(p, eq);
        ASSERT_LT((oracle - p.planted).cwiseAbs().maxCoeff(), 1e-8);
        const SolveResult r = solve_centralized(p.qp, tight());
        ASSERT_EQ(r.status, SolveStatus::Optimal);
        EXPECT_LT((r.x - oracle).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    }
}

TEST(Centralized, DetectsPrimalInfeasibility) {
    ConicQp qp;
    qp.cost = Matrix::Identity(1, 1);
    qp.linear = Vector::Zero(1);
    qp.constraints = Matrix{{1.0}, {1.0}};
    qp.lower = Vector{{1.0, -kInf}};
    qp.upper = Vector{{kInf, 0.0}};
    EXPECT_EQ(solve_centralized(qp, {}).status, SolveStatus::Infeasible);
}

TEST(Centralized, ReportsMaxIter) {
    const test::PlantedQp p = [] {
        std::mt19937_64 rng(3);
        return test::planted_qp(rng, 10, 2);
    }();
    SolverSettings s = tight();
    s.max_iterations = 5;
    s.polish = false;
    EXPECT_EQ(solve_centralized(p.qp, s).status, SolveStatus::MaxIter);
}

TEST(Centralized, ResidualContract) {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        const test::PlantedQp p = test::planted_qp(rng, 15, 3);
        const SolveResult r = solve_centralized(p.qp, {});
        const Residuals again = qp_residuals(p.qp, r.x, r.y);
        EXPECT_NEAR(again.primal, r.residuals.primal, 1e-12);
        EXPECT_NEAR(again.dual, r.residuals.dual, 1e-12);
        EXPECT_NEAR(p.qp.objective(r.x), r.objective, 1e-12);
    }
}

TEST(Centralized, EllipsoidConstraint) {
    // min ||x - (2, 2)||^2 s.t. x in unit disc
    ConicQp qp;
    qp.cost = 2.0 * Matrix::Identity(2, 2);
    qp.linear = Vector{{-4.0, -4.0}};
    qp.constraints = Matrix::Identity(2, 2);
    qp.lower = Vector::Constant(2, -kInf);
    qp.upper = Vector::Constant(2, kInf);
    qp.ellipsoids.push_back({0, 2, Matrix::Identity(2, 2), 1.0});
    const SolveResult r = solve_centralized(qp, tight());
    ASSERT_EQ(r.status, SolveStatus::Optimal);
    EXPECT_LT((r.x - Vector::Constant(2, std::sqrt(0.5))).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Centralized, ValidatesInput) {
    ConicQp qp = box_projection(Vector::Zero(2));
    qp.cost(0, 0) = -1.0;
    EXPECT_DSMPC_ERROR(qp.validate(), ErrorCode::NotPD);
    qp = box_projection(Vector::Zero(2));
    qp.lower.resize(3);
    EXPECT_DSMPC_ERROR(qp.validate(), ErrorCode::DimensionMismatch);
    SolverSettings s;
    s.alpha = 2.5;
    EXPECT_DSMPC_ERROR(s.validate(), ErrorCode::InvalidArgument);
}

TEST(Centralized, ResidualLogWritesOneLinePerCheck) {
    std::ostringstream log;
    SolverSettings s = tight();
    s.residual_log = &log;
    std::mt19937_64 rng(1);
    solve_centralized(test::planted_qp(rng, 8, 1).qp, s);
    EXPECT_FALSE(log.str().empty());
    EXPECT_NE(log.str().find(','), std::string::npos);
}

TEST(Projection, Examples) {
    const Vector inside{{0.2, -0.3}};
    EXPECT_EQ(project_ellipsoid(inside, Matrix::Identity(2, 2), 1.0), inside);
    EXPECT_LT((project_ellipsoid(Vector{{2.0, 0.0}}, Matrix::Identity(2, 2), 1.0) - Vector{{1.0, 0.0}}).norm(), 1e-12);
    Matrix bad = Matrix::Identity(2, 2);
    bad(1, 1) = 0.0;
    EXPECT_DSMPC_ERROR(project_ellipsoid(inside, bad, 1.0), ErrorCode::NotPD);
}

TEST(Projection, KktConditionsOnAnisotropicEllipsoid) {
    const Matrix p{{4.0, 0.0}, {0.0, 1.0}};
    const Vector x0{{1.0, 1.0}};
    const Vector x = project_ellipsoid(x0, p, 1.0);
    EXPECT_NEAR(x.dot(p * x), 1.0, 1e-10);
    const Vector g = p * x, d = x0 - x;
    EXPECT_NEAR(g(0) * d(1) - g(1) * d(0), 0.0, 1e-10);
    EXPECT_GT(d.dot(g), 0.0);
}

TEST(Projection, IdempotentAndOptimal) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 200; ++trial) {
        const Index n = 1 + trial % 7;
        Matrix g(n, n);
        for (Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
        const Matrix p = g * g.transpose() + 0.05 * Matrix::Identity(n, n);
        Vector x0(n);
        for (Index i = 0; i < n; ++i) x0(i) = 3.0 * normal(rng);
        const Vector x = project_ellipsoid(x0, p, 2.0);
        EXPECT_LE((project_ellipsoid(x, p, 2.0) - x).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE(x.dot(p * x), 2.0 + 1e-10);
        // no random feasible point is closer
        for (int s = 0; s < 20; ++s) {
            Vector c(n);
            for (Index i = 0; i < n; ++i) c(i) = normal(rng);
            c *= std::sqrt(2.0 / c.dot(p * c)) * std::abs(normal(rng)) / 3.0;
            if (c.dot(p * c) <= 2.0) EXPECT_GE((c - x0).norm(), (x - x0).norm() - 1e-9);
        }
    }
}

TEST(Projection, CachedProjectorSupport) {
    const EllipsoidProjector proj(Matrix{{4.0, 0.0}, {0.0, 1.0}}, 1.0);
    EXPECT_NEAR(proj.support(Vector{{1.0, 0.0}}), 0.5, 1e-12);
    EXPECT_NEAR(proj.support(Vector{{0.0, 1.0}}), 1.0, 1e-12);
    EXPECT_LT((proj.project(Vector{{1.0, 1.0}}) - project_ellipsoid(Vector{{1.0, 1.0}}, proj.shape(), 1.0)).norm(), 1e-12);
}

LocalProblem scalar_agent(double target) {
    LocalProblem lp;
    lp.qp.cost = 2.0 * Matrix::Identity(1, 1);
    lp.qp.linear = Vector::Constant(1, -2.0 * target);
    lp.qp.constraints = Matrix::Zero(0, 1);
    lp.qp.lower = lp.qp.upper = Vector::Zero(0);
    lp.variables = {0};
    return lp;
}

TEST(Consensus, TwoAgentsAverage) {
    ConsensusTopology topo = ConsensusTopology::build(1, {{0}, {0}}, {0});
    ASSERT_EQ(topo.edges.size(), 1u);
    const DistributedResult r = solve_distributed({scalar_agent(1.0), scalar_agent(-1.0)}, topo, tight());
    ASSERT_EQ(r.status, SolveStatus::Optimal);
    EXPECT_NEAR(r.x(0), 0.0, 1e-8);
}

TEST(Consensus, DecoupledAgentsEqualCentralizedSolutions) {
    std::mt19937_64 rng(47);
    std::vector<LocalProblem> agents;
    std::vector<std::vector<Index>> vars;
    std::vector<int> owner;
    std::vector<Vector> expected;
    Index offset = 0;
    for (int a = 0; a < 3; ++a) {
        test::PlantedQp p = test::planted_qp(rng, 6, 1);
        LocalProblem lp{p.qp, {}};
        for (Index j = 0; j < 6; ++j) {
            lp.variables.push_back(offset + j);
            owner.push_back(a);
        }
        vars.push_back(lp.variables);
        expected.push_back(solve_centralized(p.qp, tight()).x);
        agents.push_back(std::move(lp));
        offset += 6;
    }
    ConsensusTopology topo = ConsensusTopology::build(offset, vars, owner);
    EXPECT_TRUE(topo.edges.empty());
    const DistributedResult r = solve_distributed(agents, topo, tight());
    ASSERT_EQ(r.status, SolveStatus::Optimal);
    for (int a = 0; a < 3; ++a) EXPECT_LT((r.x.segment(6 * a, 6) - expected[static_cast<std::size_t>(a)]).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Consensus, TopologyValidation) {
    ConsensusTopology ok = ConsensusTopology::build(2, {{0, 1}, {1}}, {0, 1});
    EXPECT_NO_THROW(ok.validate());
    EXPECT_NO_THROW(ok.validate({{1}, {0}}));
    EXPECT_DSMPC_ERROR(ok.validate({{}, {}}), ErrorCode::TopologyMismatch);
    ConsensusTopology orphan = ConsensusTopology::build(2, {{0}, {0}}, {0, 1});
    EXPECT_DSMPC_ERROR(orphan.validate(), ErrorCode::TopologyMismatch);
    ConsensusTopology unsorted = ConsensusTopology::build(2, {{1, 0}}, {0, 0});
    EXPECT_DSMPC_ERROR(unsorted.validate(), ErrorCode::TopologyMismatch);
    EXPECT_DSMPC_ERROR(ConsensusSolver({scalar_agent(0.0)}, ok, {}), ErrorCode::TopologyMismatch);
}

TEST(CrossBackend, ExampleOcpAtStepZero) {
    const NetworkModel& m = test::example_model();
    const SynthesisArtifacts& a = test::example_artifacts();
    const OcpSpec spec = build_ocp(m, a.sets, a.terminal, a.cost.P, Vector{{-1.0, 0.0, 1.0}});
    const OcpSolution c = solve_ocp(spec, Vector::Zero(6), Backend::Centralized, tight());
    const OcpSolution d = solve_ocp(spec, Vector::Zero(6), Backend::Distributed, tight());
    ASSERT_EQ(c.status, SolveStatus::Optimal);
    ASSERT_EQ(d.status, SolveStatus::Optimal);
    EXPECT_LE((c.x - d.x).cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_LE(std::abs(c.objective - d.objective), 1e-4 * std::max(1.0, std::abs(c.objective)));
}

TEST(CrossBackend, RandomInstances) {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 5; ++trial) {
        const test::RandomOcpInstance inst = test::random_ocp_instance(rng);
        const SynthesisArtifacts& a = inst.artifacts;
        const OcpSpec spec = build_ocp(inst.model, a.sets, a.terminal, a.cost.P, inst.y_ref);
        const OcpSolution c = solve_ocp(spec, inst.x0, Backend::Centralized, tight());
        const OcpSolution d = solve_ocp(spec, inst.x0, Backend::Distributed, tight());
        ASSERT_EQ(c.status, SolveStatus::Optimal);
        EXPECT_LE((c.x - d.x).cwiseAbs().maxCoeff(), 1e-4) << "trial " << trial;
    }
}

TEST(WarmStart, ShiftedSequenceNeedsNoMoreIterations) {
    const NetworkModel& m = test::example_model();
    const SynthesisArtifacts& a = test::example_artifacts();
    const OcpSpec spec = build_ocp(m, a.sets, a.terminal, a.cost.P, Vector{{-1.0, 0.0, 1.0}});
    SolverSettings s;
    OcpSolution prev = solve_ocp(spec, Vector::Zero(6), Backend::Centralized, s);
    for (int k = 0; k < 10; ++k) {
        ASSERT_EQ(prev.status, SolveStatus::Optimal);
        const Vector next = prev.z[1];
        const Vector warm = shift_solution(spec, prev);
        const OcpSolution cold = solve_ocp(spec, next, Backend::Centralized, s);
        const OcpSolution hot = solve_ocp(spec, next, Backend::Centralized, s, &warm);
        ASSERT_EQ(hot.status, SolveStatus::Optimal);
        EXPECT_LE(hot.iterations, cold.iterations) << "k " << k;
        EXPECT_LT((hot.x - cold.x).cwiseAbs().maxCoeff(), 1e-4);
        prev = hot;
    }
}

}  // namespace
}  // namespace dsmpc
