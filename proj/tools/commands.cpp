#include "commands.hpp"

#include "checks.hpp"

#include "dsmpc/artifact.hpp"
#include "dsmpc/error.hpp"
#include "dsmpc/model_io.hpp"
#include "dsmpc/sim.hpp"
#include "dsmpc/synthesis.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace dsmpc::cli {
namespace {

namespace fs = std::filesystem;

struct Manifest {
    std::string model;
    std::string scenario;
    std::string artifact = "artifact.json";
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    std::string backend = "centralized";
    std::optional<std::string> gamma_policy;
    std::optional<std::string> distribution;
    std::string terminal_shape = "box";
    std::optional<double> noise_scale;
    unsigned threads = 0;
    bool verbose = false;
};

NetworkModel load_model(const Manifest& m) {
    NetworkModel model = load_network_file(m.model);
    if (m.distribution) model.distribution = parse_distribution(*m.distribution);
    return model;
}

std::string vec(const Vector& v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << '[';
    for (Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
    os << ']';
    return os.str();
}

int cmd_synth(const Manifest& m, std::ostream& out) {
    const NetworkModel model = load_model(m);
    SynthesisOptions opts;
    if (m.gamma_policy) opts.gamma_policy = parse_gamma_policy(*m.gamma_policy);
    opts.terminal_shape = parse_terminal_shape(m.terminal_shape);
    const SynthesisArtifacts a = synthesize(model, model_hash(model), opts);
    write_text_file(m.artifact, serialize_artifacts(a));
    out << synthesis_report(a, model);
    out << "artifact written to " << m.artifact << '\n';
    return kSuccess;
}

SynthesisArtifacts load_checked_artifact(const Manifest& m, const NetworkModel& model) {
    if (!fs::exists(m.artifact)) {
        throw Error(ErrorCode::IoError, "cli", "artifact '" + m.artifact + "' not found; run `dsmpc synth --model " +
                                                   m.model + " --out " + m.artifact + "` first");
    }
    SynthesisArtifacts a = load_artifacts(read_text_file(m.artifact));
    check_artifacts(a, model, model_hash(model));
    if (m.gamma_policy && parse_gamma_policy(*m.gamma_policy) != a.gamma_policy) {
        throw Error(ErrorCode::ArtifactModelMismatch, "cli",
                    "artifact uses gamma policy '" + std::string(to_string(a.gamma_policy)) + "'");
    }
    return a;
}

int cmd_simulate(const Manifest& m, std::ostream& out) {
    const NetworkModel model = load_model(m);
    const SynthesisArtifacts a = load_checked_artifact(m, model);
    ScenarioSpec scenario = load_scenario(read_text_file(m.scenario));
    if (m.seed) scenario.seed = *m.seed;
    if (m.runs) scenario.runs = *m.runs;
    if (m.distribution) scenario.distribution = parse_distribution(*m.distribution);
    if (m.noise_scale) scenario.noise_scale = *m.noise_scale;
    scenario.validate(model);

    SimulationOptions opts;
    opts.backend = parse_backend(m.backend);
    opts.threads = m.threads;
    const MonteCarloResult mc = monte_carlo(model, a, scenario, opts);

    const fs::path dir(m.out);
    fs::create_directories(dir / "traces");
    for (std::size_t r = 0; r < mc.traces.size(); ++r) {
        std::ostringstream name;
        name << "run_" << std::setw(4) << std::setfill('0') << r << ".csv";
        write_text_file(dir / "traces" / name.str(), trace_csv(mc.traces[r]));
    }
    write_text_file(dir / "aggregate.csv", aggregate_csv(mc.report));
    write_text_file(dir / "summary.json", summary_json(mc.report));
    write_text_file(dir / "scenario.json", serialize_scenario(scenario));

    const StatsReport& r = mc.report;
    out << r.runs << " runs x " << r.steps << " steps, backend " << to_string(opts.backend) << '\n';
    out << "infeasible events   " << r.infeasible_events << '\n';
    out << "Mode-2 activations  " << r.mode2_activations << '\n';
    out << "worst satisfaction  " << r.min_satisfaction << " (subsystem " << r.worst_subsystem << ", k = " << r.worst_step
        << ")\n";
    if (m.verbose) {
        for (const auto& s : r.segments) {
            out << "segment k=" << s.start << ".." << s.end << "  y_ref " << vec(s.y_ref) << "  mean y " << vec(s.mean_output)
                << '\n';
        }
    }
    out << "outputs written to " << dir.string() << '\n';
    return r.infeasible_events == 0 ? kSuccess : kFailure;
}

std::string plot_script(const NetworkModel& model, const StatsReport& r, const ScenarioSpec& s) {
    std::ostringstream os;
    os << "# gnuplot script; run from the output directory: gnuplot plot.gp\n"
       << "set datafile separator ','\n"
       << "set key autotitle columnhead\n"
       << "set terminal pngcairo size 1200,900\n"
       << "files = system('ls traces/run_*.csv')\n";
    os << "$ref << EOD\n";
    for (std::size_t g = 0; g < s.segments.size(); ++g) {
        for (int k : {s.segments[g].start, s.segment_end(g)}) {
            os << k;
            for (Index j = 0; j < model.l; ++j) os << ',' << s.segments[g].y_ref(j);
            os << '\n';
        }
    }
    os << "EOD\n";
    os << "set output 'outputs.png'\nset multiplot layout " << model.l << ",1\n";
    for (Index j = 0; j < model.l; ++j) {
        os << "set ylabel 'y" << j << "'\nplot for [f in files] f using 1:(column('y" << j
           << "')) with lines lc rgb '#40000000' notitle, \\\n     $ref using 1:" << j + 2
           << " with lines lc rgb 'red' lw 2 title 'reference'\n";
    }
    os << "unset multiplot\n";
    os << "set output 'satisfaction.png'\nset yrange [0:1.05]\nset style fill solid 0.6\nset multiplot layout "
       << r.subsystem_satisfaction.cols() << ",1\n";
    for (Index i = 0; i < r.subsystem_satisfaction.cols(); ++i) {
        os << "plot 'aggregate.csv' using 1:'rate_sub" << i << "' with boxes title 'subsystem " << i
           << "', " << r.subsystem_probability[static_cast<std::size_t>(i)] << " lc rgb 'red' title 'p'\n";
    }
    os << "unset multiplot\n";
    return os.str();
}

int cmd_report(const Manifest& m, std::ostream& out) {
    const NetworkModel model = load_model(m);
    const fs::path dir(m.out);
    const fs::path traces_dir = dir / "traces";
    std::vector<fs::path> files;
    if (fs::is_directory(traces_dir)) {
        for (const auto& e : fs::directory_iterator(traces_dir)) {
            if (e.path().extension() == ".csv") files.push_back(e.path());
        }
    }
    if (files.empty()) throw Error(ErrorCode::EmptyTraceDir, "cli", "no trace CSVs under " + traces_dir.string());
    std::sort(files.begin(), files.end());
    std::vector<ClosedLoopTrace> traces;
    for (const auto& f : files) traces.push_back(parse_trace_csv(read_text_file(f), model.n, model.m, model.l));
    const ScenarioSpec scenario = load_scenario(read_text_file(dir / "scenario.json"));
    const StatsReport r = aggregate(model, scenario, traces);
    write_text_file(dir / "plot.gp", plot_script(model, r, scenario));

    out << "traces              " << r.runs << " x " << r.steps << " steps\n";
    out << "infeasible events   " << r.infeasible_events << (r.infeasible_events == 0 ? "  (recursively feasible)" : "")
        << '\n';
    out << "Mode-2 activations  " << r.mode2_activations << '\n';
    for (Index i = 0; i < r.subsystem_satisfaction.cols(); ++i) {
        Index worst = 0;
        r.subsystem_satisfaction.col(i).minCoeff(&worst);
        out << "subsystem " << i << " min satisfaction " << r.subsystem_satisfaction(worst, i) << " at k = " << worst
            << " (p = " << r.subsystem_probability[static_cast<std::size_t>(i)] << ")\n";
    }
    std::optional<SynthesisArtifacts> a;
    if (fs::exists(m.artifact)) a = load_checked_artifact(m, model);
    for (const auto& s : r.segments) {
        out << "segment k=" << s.start << ".." << s.end << "  y_ref " << vec(s.y_ref) << "\n  mean y(" << s.end
            << ") " << vec(s.mean_output) << "  std error " << vec(s.std_error) << '\n';
        if (!a) continue;
        const SteadyState tracked = admissible_steady_state(s.y_ref, make_steady_state_oracle(model, a->sets, &a->terminal));
        const SteadyState relaxed = admissible_steady_state(s.y_ref, make_steady_state_oracle(model, a->sets, nullptr));
        out << "  oracle y_s " << vec(tracked.y_s) << "  |mean - oracle|_inf "
            << (s.mean_output - tracked.y_s).cwiseAbs().maxCoeff() << "  tracking cost " << tracked.cost << '\n';
        out << "  polytope-only oracle " << vec(relaxed.y_s) << "  tracking cost " << relaxed.cost << '\n';
    }
    out << "plot script written to " << (dir / "plot.gp").string() << '\n';
    return r.infeasible_events == 0 ? kSuccess : kFailure;
}

int cmd_check(const Manifest& m, std::ostream& out) {
    const NetworkModel model = load_model(m);
    SynthesisOptions opts;
    if (m.gamma_policy) opts.gamma_policy = parse_gamma_policy(*m.gamma_policy);
    opts.terminal_shape = parse_terminal_shape(m.terminal_shape);
    const SynthesisArtifacts a = synthesize(model, model_hash(model), opts);
    ScenarioSpec scenario;
    if (!m.scenario.empty()) {
        scenario = load_scenario(read_text_file(m.scenario));
    } else {
        scenario.x0 = Vector::Zero(model.n);
        scenario.segments.push_back({0, Vector::Zero(model.l)});
        scenario.steps = 3 * model.horizon;
    }
    if (m.distribution) scenario.distribution = parse_distribution(*m.distribution);
    scenario.validate(model);
    CheckOptions copts;
    if (m.runs) copts.runs = *m.runs;
    if (m.seed) copts.seed = *m.seed;
    const auto results = run_checks(model, a, scenario, copts);
    int failed = 0;
    for (const auto& r : results) {
        out << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(66) << r.name;
        if (m.verbose || !r.passed) out << r.detail;
        out << '\n';
        failed += r.passed ? 0 : 1;
    }
    out << results.size() - static_cast<std::size_t>(failed) << '/' << results.size() << " checks passed\n";
    return failed == 0 ? kSuccess : kFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Distributed stochastic MPC: offline synthesis, closed-loop simulation and reporting"};
    app.require_subcommand(1);
    Manifest m;

    const std::vector<std::string> backends{"centralized", "distributed"};
    const std::vector<std::string> policies{"global", "per-constraint"};
    const std::vector<std::string> distributions{"gaussian", "uniform"};
    const std::vector<std::string> shapes{"box", "identity"};

    auto common = [&](CLI::App* sub, bool model_required) {
        sub->add_option("--model", m.model, "Model file (JSON)")->required(model_required)->check(CLI::ExistingFile);
        sub->add_option("--distribution", m.distribution, "Disturbance distribution")
            ->check(CLI::IsMember(distributions));
        sub->add_flag("--verbose,-v", m.verbose, "Print more detail");
    };

    CLI::App* synth = app.add_subcommand("synth", "Offline synthesis: covariances, tightened sets, terminal set");
    common(synth, true);
    synth->add_option("--out,--artifact", m.artifact, "Artifact file to write");
    synth->add_option("--gamma-policy", m.gamma_policy, "Tightening level policy")->check(CLI::IsMember(policies));
    synth->add_option("--terminal-shape", m.terminal_shape, "Shape of the terminal blocks for (z_s, v_s)")
        ->check(CLI::IsMember(shapes));

    CLI::App* simulate = app.add_subcommand("simulate", "Closed-loop Monte-Carlo simulation");
    common(simulate, true);
    simulate->add_option("--scenario", m.scenario, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
    simulate->add_option("--artifact", m.artifact, "Artifact produced by synth");
    simulate->add_option("--out", m.out, "Output directory");
    simulate->add_option("--seed", m.seed, "Master seed (overrides the scenario)");
    simulate->add_option("--runs", m.runs, "Number of runs (overrides the scenario)")->check(CLI::PositiveNumber);
    simulate->add_option("--backend", m.backend, "OCP solver backend")->check(CLI::IsMember(backends));
    simulate->add_option("--gamma-policy", m.gamma_policy, "Expected policy of the artifact")
        ->check(CLI::IsMember(policies));
    simulate->add_option("--noise-scale", m.noise_scale, "Plant noise covariance multiplier")->check(CLI::NonNegativeNumber);
    simulate->add_option("--threads", m.threads, "Worker threads (0 = all cores)");

    CLI::App* report = app.add_subcommand("report", "Summaries and plot scripts from a simulation directory");
    common(report, true);
    report->add_option("--out", m.out, "Simulation output directory")->required();
    report->add_option("--artifact", m.artifact, "Artifact for the steady-state oracle (optional)");

    CLI::App* check = app.add_subcommand("check", "Run the invariant suite on a model");
    common(check, true);
    check->add_option("--scenario", m.scenario, "Scenario used for closed-loop checks")->check(CLI::ExistingFile);
    check->add_option("--runs", m.runs, "Monte-Carlo runs")->check(CLI::PositiveNumber);
    check->add_option("--seed", m.seed, "Seed");
    check->add_option("--gamma-policy", m.gamma_policy, "Tightening level policy")->check(CLI::IsMember(policies));
    check->add_option("--terminal-shape", m.terminal_shape, "Shape of the terminal blocks")->check(CLI::IsMember(shapes));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kInputError;
    }

    try {
        if (synth->parsed()) return cmd_synth(m, out);
        if (simulate->parsed()) return cmd_simulate(m, out);
        if (report->parsed()) return cmd_report(m, out);
        return cmd_check(m, out);
    } catch (const Error& e) {
        err << "error [" << e.module() << '/' << to_string(e.code()) << "]: " << e.what() << '\n';
        return e.code() == ErrorCode::InitialInfeasible ? kFailure : kInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
}

}  // namespace dsmpc::cli
