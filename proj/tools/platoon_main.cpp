// Command-line front end: scenario runs, protocol checking, bounded
// exploration, and trace replay.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "platoon/explorer.hpp"
#include "platoon/sim.hpp"

using namespace platoon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDiagnostics = 1;
constexpr int kExitSafety = 2;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw std::runtime_error("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string file_stem(const std::string& path) {
    auto slash = path.find_last_of("/\\");
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    auto dot = name.rfind('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

std::vector<std::pair<std::uint32_t, dyn::RoleKind>> parse_owner_spec(const std::string& spec) {
    std::vector<std::pair<std::uint32_t, dyn::RoleKind>> owners;
    std::istringstream in(spec);
    std::string tok;
    std::uint32_t id = 0;
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        dyn::RoleKind role;
        if (tok == "L" || tok == "leader" || tok == "Leader")
            role = dyn::RoleKind::Leader;
        else if (tok == "F" || tok == "follower" || tok == "Follower")
            role = dyn::RoleKind::Follower;
        else if (tok == "J" || tok == "joiner" || tok == "Joiner")
            role = dyn::RoleKind::Joiner;
        else
            throw std::runtime_error("bad role in --owners: '" + tok + "'");
        owners.emplace_back(id++, role);
    }
    if (owners.empty()) throw std::runtime_error("--owners needs at least one role");
    return owners;
}

int cmd_check(const std::vector<std::string>& files) {
    bool ok = true;
    if (files.size() == 1) {
        auto res = dsl::parse(slurp(files[0]));
        for (const auto& d : res.diagnostics)
            std::cerr << files[0] << ": " << dsl::format_diagnostic(d) << "\n";
        ok = res.ok();
        if (ok)
            std::cout << files[0] << ": ok (" << res.env.size() << " definitions)\n";
    } else {
        // multiple files resolve against each other, one scope per file
        std::map<std::string, std::string> sources;
        for (const auto& f : files) sources[file_stem(f)] = slurp(f);
        try {
            auto corpus = proto::load_corpus(sources);
            std::cout << files.size() << " files: ok (" << corpus.env.size()
                      << " definitions)\n";
        } catch (const proto::ProtocolError& e) {
            std::cerr << e.what() << "\n";
            ok = false;
        }
    }
    return ok ? kExitOk : kExitDiagnostics;
}

int cmd_explore(const std::vector<std::string>& files, const std::string& owner_spec,
                std::size_t max_states, const std::string& goal_name) {
    // role programs from the given files (scope = file stem), the standard
    // programs filling any role the owner spec needs but the files omit
    std::map<std::string, std::string> sources;
    for (const auto& f : files) sources[file_stem(f)] = slurp(f);
    auto owners = parse_owner_spec(owner_spec);
    for (const auto& [id, role] : owners) {
        (void)id;
        std::string scope = dsl::scope_of(proto::entry_for_role(role));
        if (sources.count(scope)) continue;
        if (role == dyn::RoleKind::Leader) sources[scope] = proto::leader_source();
        if (role == dyn::RoleKind::Follower) sources[scope] = proto::follower_source();
        if (role == dyn::RoleKind::Joiner) sources[scope] = proto::joiner_source();
    }

    explorer::Instance inst;
    try {
        inst.env = proto::load_corpus(sources).env;
    } catch (const proto::ProtocolError& e) {
        std::cerr << e.what() << "\n";
        return kExitDiagnostics;
    }
    inst.owners = owners;

    explorer::Bounds bounds;
    if (max_states) bounds.max_states = max_states;
    bool want_goal = goal_name == "joined";

    auto result = explorer::explore(inst, explorer::goal_all_joined(inst), bounds);

    std::cout << "states visited: " << result.states_visited << "\n";
    std::cout << "deadlocks: " << result.deadlocks.size() << "\n";
    if (want_goal)
        std::cout << "goal " << (result.goal_reached ? "reached" : "not reached")
                  << (result.goal_universal ? " (on every bounded execution)" : "") << "\n";
    if (result.truncated)
        std::cout << "bounds hit: results are a lower bound, not a verification\n";
    for (std::size_t i = 0; i < result.deadlocks.size() && i < 3; ++i) {
        std::cout << "deadlock trace " << i + 1 << ":\n";
        for (const auto& step : result.deadlocks[i].trace) std::cout << "  " << step << "\n";
    }

    bool bad = !result.deadlocks.empty() || (want_goal && !result.goal_reached);
    return bad ? kExitSafety : kExitOk;
}

int cmd_run(const std::string& scenario_path, const std::string& trace_out,
            const std::string& metrics_out, std::int64_t seed_override) {
    sim::Scenario sc = sim::load_scenario_file(scenario_path);
    if (seed_override >= 0) sc.seed = static_cast<std::uint64_t>(seed_override);

    sim::RunResult res = sim::run_scenario(sc);

    if (!trace_out.empty()) {
        std::ofstream out(trace_out);
        out << sim::trace_to_csv(sc, res.trace);
    }
    if (!metrics_out.empty()) {
        std::ofstream out(metrics_out);
        out << sim::metrics_to_json(res.metrics);
    }

    std::cout << "ticks: " << res.trace.size() << "\n";
    std::cout << "merges completed: " << res.metrics.merges_completed << "\n";
    for (const auto& [id, t] : res.metrics.merge_times)
        std::cout << "  vehicle " << id << " merged at " << t << " s\n";
    std::cout << "min same-lane gap: " << res.metrics.min_gap << " m\n";
    std::cout << "final gap rms error: " << res.metrics.final_gap_rms << " m\n";
    if (res.metrics.deadlock_flag) std::cout << "flag: deadlock or timeout without merge\n";

    if (res.metrics.min_gap < 0.5 * sc.d) {
        std::cerr << "safety violation: min gap " << res.metrics.min_gap << " m is below half of d\n";
        return kExitSafety;
    }
    return kExitOk;
}

int cmd_replay(const std::string& trace_path) {
    sim::TraceFile tf = sim::trace_from_csv(slurp(trace_path));
    if (!tf.digest_ok) {
        std::cerr << "determinism digest mismatch: trace was edited or truncated\n";
        return kExitDiagnostics;
    }
    double min_gap = std::numeric_limits<double>::infinity();
    for (const auto& rec : tf.trace) {
        double recomputed = sim::min_same_lane_gap(rec.vehicles, tf.lengths);
        bool both_inf = std::isinf(recomputed) && std::isinf(rec.min_gap);
        if (!both_inf && std::abs(recomputed - rec.min_gap) > 1e-4) {
            std::cerr << "tick " << rec.tick << ": stored min gap " << rec.min_gap
                      << " does not match recomputed " << recomputed << "\n";
            return kExitDiagnostics;
        }
        min_gap = std::min(min_gap, recomputed);
    }
    std::cout << "ticks: " << tf.trace.size() << "\n";
    std::cout << "digest: ok\n";
    std::cout << "min same-lane gap: " << min_gap << " m\n";
    if (min_gap < 0.5 * tf.d) {
        std::cerr << "safety violation recorded in trace\n";
        return kExitSafety;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"process-calculus platoon co-simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run a scenario file");
    std::string scenario_path, trace_out, metrics_out;
    std::int64_t seed_override = -1;
    run->add_option("scenario", scenario_path, "scenario file")->required();
    run->add_option("--trace", trace_out, "write the tick trace as CSV");
    run->add_option("--metrics", metrics_out, "write run metrics as JSON");
    run->add_option("--seed", seed_override, "override the scenario seed");

    auto* check = app.add_subcommand("check", "parse protocol files and report diagnostics");
    std::vector<std::string> check_files;
    check->add_option("files", check_files, "protocol .pic files")->required();

    auto* explore = app.add_subcommand("explore", "bounded state-space exploration");
    std::vector<std::string> explore_files;
    std::string owner_spec, goal_name = "joined";
    std::size_t max_states = 0;
    explore->add_option("files", explore_files, "protocol .pic files")->required();
    explore->add_option("--owners", owner_spec, "roles, e.g. L,F,F,J")->required();
    explore->add_option("--max-states", max_states, "state budget");
    explore->add_option("--goal", goal_name, "goal predicate (joined)");

    auto* replay = app.add_subcommand("replay", "verify a trace file and recompute metrics");
    std::string trace_path;
    replay->add_option("trace", trace_path, "trace CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(scenario_path, trace_out, metrics_out, seed_override);
        if (check->parsed()) return cmd_check(check_files);
        if (explore->parsed())
            return cmd_explore(explore_files, owner_spec, max_states, goal_name);
        if (replay->parsed()) return cmd_replay(trace_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiagnostics;
    }
    return kExitDiagnostics;
}
