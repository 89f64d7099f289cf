#include "dsmpc/artifact.hpp"
#include "dsmpc/model_io.hpp"
#include "dsmpc/ocp.hpp"
#include "dsmpc/sim.hpp"

#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

namespace {

using namespace dsmpc;

const NetworkModel& model() {
    static const NetworkModel m =
        load_network_file(std::filesystem::path(DSMPC_DATA_DIR) / "coupled-double-integrators.model.json");
    return m;
}

const SynthesisArtifacts& artifacts() {
    static const SynthesisArtifacts a = synthesize(model(), model_hash(model()));
    return a;
}

void BM_Synthesis(benchmark::State& state) {
    const NetworkModel& m = model();
    const std::string hash = model_hash(m);
    for (auto _ : state) benchmark::DoNotOptimize(synthesize(m, hash));
}
BENCHMARK(BM_Synthesis)->Unit(benchmark::kMillisecond);

void BM_EllipsoidProjection(benchmark::State& state) {
    const auto n = static_cast<Index>(state.range(0));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    Matrix g(n, n);
    for (Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
    const EllipsoidProjector proj(g * g.transpose() + Matrix::Identity(n, n), 1.0);
    Vector x(n);
    for (Index i = 0; i < n; ++i) x(i) = 5.0 * normal(rng);
    for (auto _ : state) benchmark::DoNotOptimize(proj.project(x));
}
BENCHMARK(BM_EllipsoidProjection)->Arg(3)->Arg(15)->Arg(60);

// One receding-horizon solve from a perturbed state, warm started from the shifted plan.
void BM_OcpSolve(benchmark::State& state) {
    const auto backend = static_cast<Backend>(state.range(0));
    const SynthesisArtifacts& a = artifacts();
    const OcpSpec spec = build_ocp(model(), a.sets, a.terminal, a.cost.P, Vector{{-7.0, -2.0, 7.0}});
    OcpSolver solver(spec, backend, SimulationOptions::default_settings());
    const OcpSolution first = solver.solve(Vector::Zero(model().n));
    const Vector warm = shift_solution(spec, first);
    const Vector x1 = first.z[1] + 0.05 * Vector::Ones(model().n);
    for (auto _ : state) benchmark::DoNotOptimize(solver.solve(x1, &warm));
    state.SetLabel(std::string(to_string(backend)));
}
BENCHMARK(BM_OcpSolve)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_ClosedLoopRun(benchmark::State& state) {
    ScenarioSpec s = load_scenario(read_text_file(std::filesystem::path(DSMPC_DATA_DIR) /
                                                  "coupled-double-integrators.scenario.json"));
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(run_closed_loop(model(), artifacts(), s, ++seed));
}
BENCHMARK(BM_ClosedLoopRun)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
