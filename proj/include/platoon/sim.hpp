#ifndef PLATOON_SIM_HPP
#define PLATOON_SIM_HPP

#include <map>

#include "platoon/protocol.hpp"
#include "platoon/scenario.hpp"

namespace platoon::sim {

// ── Trace ───────────────────────────────────────────────────────────────────

struct TraceVehicle {
    std::uint32_t id = 0;
    double long_pos = 0;
    double lat_pos = 0;
    double v_long = 0;
    dyn::RoleKind role = dyn::RoleKind::Leader;
    dyn::HaMode mode = dyn::HaMode::Cruise;
    std::optional<std::uint32_t> leader;
    std::optional<std::uint32_t> prev_leader;
};

struct TraceRecord {
    std::uint64_t tick = 0;
    double time = 0;
    std::vector<TraceVehicle> vehicles;  // sorted by id
    std::vector<std::string> events;
    std::vector<std::string> reactions;
    double min_gap = 0;  // +inf when no same-lane pair exists
};

struct MetricsSummary {
    std::size_t merges_completed = 0;
    std::vector<std::pair<std::uint32_t, double>> merge_times;  // joiner id, seconds
    double min_gap = 0;
    double final_gap_rms = 0;
    bool deadlock_flag = false;
    bool timeout_without_merge = false;
};

struct RunResult {
    std::vector<TraceRecord> trace;
    MetricsSummary metrics;
    bool completed = false;  // all joiners merged and gaps settled
};

// ── Running ─────────────────────────────────────────────────────────────────
// One protocol tick per sampling period: (1) discrete reactions and interface
// dispatch, (2) automata stepping, (3) dynamics substeps, (4) localization
// broadcast, (5) logging. Ends at max_duration or once every joiner has
// merged and the platoon gaps have settled.

RunResult run_scenario(const Scenario& sc);

// ── Trace and metrics serialization ─────────────────────────────────────────

std::string trace_to_csv(const Scenario& sc, const std::vector<TraceRecord>& trace);

struct TraceFile {
    std::vector<TraceRecord> trace;
    double d = 0;
    std::map<std::uint32_t, double> lengths;
    int leader_lane = 0;
    bool digest_ok = false;
};

struct TraceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

TraceFile trace_from_csv(const std::string& csv);

std::string metrics_to_json(const MetricsSummary& m);

// Minimum same-lane bumper-to-bumper gap over consecutive vehicles; +inf when
// no lane holds two vehicles.
double min_same_lane_gap(const std::vector<TraceVehicle>& vehicles,
                         const std::map<std::uint32_t, double>& lengths);

}  // namespace platoon::sim

#endif
