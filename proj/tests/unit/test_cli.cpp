#include "commands.hpp"

#include "common.hpp"

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace dsmpc {
namespace {

namespace fs = std::filesystem;

struct Invocation {
    int code = -1;
    std::string out;
    std::string err;
};

Invocation dsmpc_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "dsmpc");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Invocation inv;
    inv.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    inv.out = out.str();
    inv.err = err.str();
    return inv;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        std::random_device rd;
        dir = fs::temp_directory_path() / ("dsmpc-cli-" + std::to_string(rd()));
        fs::create_directories(dir);
        model = test::data_path("coupled-double-integrators.model.json").string();
        ScenarioSpec s = test::example_scenario();
        s.steps = 12;
        s.runs = 2;
        s.segments.resize(2);
        s.segments[1].start = 6;
        scenario = (dir / "scenario.json").string();
        write_text_file(scenario, serialize_scenario(s));
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    std::string synth() {
        const std::string artifact = path("artifact.json");
        const Invocation inv = dsmpc_cli({"synth", "--model", model, "--out", artifact});
        EXPECT_EQ(inv.code, 0) << inv.err;
        return artifact;
    }

    /// Writes `net` as a model file.
    std::string model_file(const NetworkModel& net, const std::string& name) const {
        write_text_file(path(name), serialize_network(net));
        return path(name);
    }

    fs::path dir;
    std::string model;
    std::string scenario;
};

TEST_F(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(dsmpc_cli({"--help"}).code, cli::kSuccess);
    EXPECT_EQ(dsmpc_cli({}).code, cli::kInputError);
    EXPECT_EQ(dsmpc_cli({"synth", "--bogus"}).code, cli::kInputError);
    EXPECT_EQ(dsmpc_cli({"synth", "--model", path("missing.json")}).code, cli::kInputError);
    EXPECT_EQ(dsmpc_cli({"simulate", "--model", model, "--scenario", scenario, "--backend", "gpu"}).code,
              cli::kInputError);
}

TEST_F(Cli, SynthWritesReloadableArtifact) {
    const Invocation inv = dsmpc_cli({"synth", "--model", model, "--out", path("a.json")});
    ASSERT_EQ(inv.code, cli::kSuccess) << inv.err;
    const SynthesisArtifacts a = load_artifacts(read_text_file(path("a.json")));
    EXPECT_EQ(a.schedule.horizon, 7);
    EXPECT_EQ(a.schedule.exact.size(), 8u);
    EXPECT_EQ(a.sets.state.size(), 7u);
    EXPECT_EQ(a.model_hash, model_hash(test::example_model()));
    EXPECT_NE(inv.out.find("lambda"), std::string::npos) << inv.out;
}

TEST_F(Cli, SynthOfUnstableModelIsInputError) {
    // zero gain blocks leave the double integrators unstable
    const std::string text = serialize_network(test::example_model());
    const std::string zeros = "[[0.0,0.0,0.0,0.0,0.0,0.0]]";
    const std::string doc = text.substr(0, text.rfind('}')) + ",\"gain\":[" + zeros + "," + zeros + "," + zeros + "]}";
    write_text_file(path("unstable.json"), doc);
    const Invocation inv = dsmpc_cli({"synth", "--model", path("unstable.json"), "--out", path("u.json")});
    EXPECT_EQ(inv.code, cli::kInputError);
    EXPECT_NE(inv.err.find("UnstableClosedLoop"), std::string::npos) << inv.err;
}

TEST_F(Cli, SimulateAndReport) {
    const std::string artifact = synth();
    const Invocation sim = dsmpc_cli({"simulate", "--model", model, "--scenario", scenario, "--artifact", artifact,
                                      "--out", path("sim"), "--threads", "1"});
    ASSERT_EQ(sim.code, cli::kSuccess) << sim.err;
    EXPECT_TRUE(fs::exists(dir / "sim" / "traces" / "run_0000.csv"));
    EXPECT_TRUE(fs::exists(dir / "sim" / "traces" / "run_0001.csv"));
    EXPECT_TRUE(fs::exists(dir / "sim" / "summary.json"));
    std::istringstream agg(read_text_file(dir / "sim" / "aggregate.csv"));
    int lines = 0;
    for (std::string line; std::getline(agg, line);) ++lines;
    EXPECT_EQ(lines, 1 + 13);

    const Invocation rep = dsmpc_cli({"report", "--model", model, "--out", path("sim"), "--artifact", artifact});
    ASSERT_EQ(rep.code, cli::kSuccess) << rep.err;
    EXPECT_TRUE(fs::exists(dir / "sim" / "plot.gp"));
    EXPECT_NE(rep.out.find("oracle"), std::string::npos) << rep.out;
    EXPECT_NE(rep.out.find("tracking cost"), std::string::npos) << rep.out;
}

TEST_F(Cli, QuietSingleRunIsFullySatisfied) {
    const std::string artifact = synth();
    ASSERT_EQ(dsmpc_cli({"simulate", "--model", model, "--scenario", scenario, "--artifact", artifact, "--out",
                         path("quiet"), "--runs", "1", "--noise-scale", "0"})
                  .code,
              cli::kSuccess);
    const std::string summary = read_text_file(dir / "quiet" / "summary.json");
    EXPECT_NE(summary.find("\"min_satisfaction\": 1.0"), std::string::npos) << summary;
}

TEST_F(Cli, ZeroNoiseGoldenTrace) {
    const std::string artifact = synth();
    const std::string full = test::data_path("coupled-double-integrators.scenario.json").string();
    ASSERT_EQ(dsmpc_cli({"simulate", "--model", model, "--scenario", full, "--artifact", artifact, "--out",
                         path("golden"), "--runs", "1", "--noise-scale", "0"})
                  .code,
              cli::kSuccess);
    const NetworkModel& m = test::example_model();
    const ClosedLoopTrace got = parse_trace_csv(read_text_file(dir / "golden" / "traces" / "run_0000.csv"), m.n, m.m, m.l);
    const ClosedLoopTrace want =
        parse_trace_csv(read_text_file(fs::path(DSMPC_TEST_DATA_DIR) / "zero-noise-trace.csv"), m.n, m.m, m.l);
    ASSERT_EQ(got.steps(), want.steps());
    for (std::size_t k = 0; k < got.x.size(); ++k) EXPECT_LT((got.x[k] - want.x[k]).cwiseAbs().maxCoeff(), 1e-6) << k;
    for (std::size_t k = 0; k < got.u.size(); ++k) {
        EXPECT_LT((got.u[k] - want.u[k]).cwiseAbs().maxCoeff(), 1e-6) << k;
        EXPECT_EQ(got.mode[k], want.mode[k]);
    }
}

TEST_F(Cli, MissingArtifactIsActionable) {
    const Invocation inv = dsmpc_cli({"simulate", "--model", model, "--scenario", scenario, "--artifact",
                                      path("nope.json"), "--out", path("x")});
    EXPECT_EQ(inv.code, cli::kInputError);
    EXPECT_NE(inv.err.find("dsmpc synth"), std::string::npos) << inv.err;
}

TEST_F(Cli, ArtifactBoundToModel) {
    const std::string artifact = synth();
    std::vector<SubsystemSpec> subs = test::example_model().subsystems;
    subs[1].noise_cov *= 1.5;
    const std::string other = model_file(assemble_network(subs, 7, Distribution::Gaussian), "other.json");
    const Invocation inv = dsmpc_cli({"simulate", "--model", other, "--scenario", scenario, "--artifact", artifact,
                                      "--out", path("x")});
    EXPECT_EQ(inv.code, cli::kInputError);
    EXPECT_NE(inv.err.find("ArtifactModelMismatch"), std::string::npos) << inv.err;
}

TEST_F(Cli, ReportOnEmptyDirectory) {
    fs::create_directories(dir / "empty" / "traces");
    const Invocation inv = dsmpc_cli({"report", "--model", model, "--out", path("empty")});
    EXPECT_EQ(inv.code, cli::kInputError);
    EXPECT_NE(inv.err.find("EmptyTraceDir"), std::string::npos) << inv.err;
}

TEST_F(Cli, CheckPassesOnExample) {
    const Invocation inv = dsmpc_cli({"check", "--model", model, "--scenario", scenario, "--runs", "3"});
    EXPECT_EQ(inv.code, cli::kSuccess) << inv.out;
    EXPECT_EQ(inv.out.find("FAIL"), std::string::npos) << inv.out;
}

TEST_F(Cli, CheckOnDecoupledModel) {
    const Invocation inv = dsmpc_cli({"check", "--model", model_file(test::decoupled_pair(0.5, -0.4), "pair.json"),
                                      "--runs", "3", "-v"});
    EXPECT_EQ(inv.code, cli::kSuccess) << inv.out;
    EXPECT_NE(inv.out.find("max-norm gap"), std::string::npos);
}

TEST_F(Cli, CheckSurfacesDivergentBound) {
    // three fully connected scalar agents with a_K = 0.7: sqrt(3) * 0.7 > 1
    std::vector<SubsystemSpec> subs;
    for (Index i = 0; i < 3; ++i) {
        SubsystemSpec s = test::scalar_subsystem(0.7, 1.0, 0.01);
        s.neighbors = {0, 1, 2};
        s.a_blocks.assign(3, test::scalar(0.0));
        s.a_blocks[static_cast<std::size_t>(i)] = test::scalar(0.7);
        s.c_blocks.assign(3, test::scalar(0.0));
        s.c_blocks[static_cast<std::size_t>(i)] = test::scalar(1.0);
        s.state_set.H = Matrix::Zero(2, 3);
        s.state_set.H(0, i) = 1.0;
        s.state_set.H(1, i) = -1.0;
        s.gain = Matrix::Zero(1, 3);
        subs.push_back(s);
    }
    const std::string file = model_file(assemble_network(subs, 3, Distribution::Gaussian), "diverge.json");
    const Invocation inv = dsmpc_cli({"check", "--model", file});
    EXPECT_NE(inv.code, cli::kSuccess);
    EXPECT_NE((inv.out + inv.err).find("DistributedBoundDiverges"), std::string::npos) << inv.out << inv.err;
}

}  // namespace
}  // namespace dsmpc
