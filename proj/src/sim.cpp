#include "platoon/sim.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace platoon::sim {

using namespace platoon::calc;
using dyn::RoleKind;
using dyn::VehicleState;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

dyn::Pose pose_of(const VehicleState& v) {
    return {v.id, v.long_pos, v.lat_pos, v.v_long, v.lane_index, v.params.length};
}

std::string fmt(double v) {
    char buf[64];
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string opt_id(const std::optional<std::uint32_t>& v) {
    return v ? std::to_string(*v) : "-";
}

std::uint64_t fnv1a(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

RoleKind role_from(const std::string& s) {
    if (s == "Leader") return RoleKind::Leader;
    if (s == "Follower") return RoleKind::Follower;
    if (s == "Joiner") return RoleKind::Joiner;
    throw TraceError("bad role in trace: " + s);
}

}  // namespace

double min_same_lane_gap(const std::vector<TraceVehicle>& vehicles,
                         const std::map<std::uint32_t, double>& lengths) {
    std::map<int, std::vector<const TraceVehicle*>> lanes;
    for (const auto& v : vehicles) {
        int lane = static_cast<int>(std::llround(v.lat_pos / dyn::kLaneWidth));
        lanes[lane].push_back(&v);
    }
    double best = kInf;
    for (auto& [lane, vs] : lanes) {
        (void)lane;
        std::sort(vs.begin(), vs.end(), [](const TraceVehicle* a, const TraceVehicle* b) {
            return a->long_pos < b->long_pos;
        });
        for (std::size_t i = 0; i + 1 < vs.size(); ++i) {
            double len = 0;
            auto it = lengths.find(vs[i + 1]->id);
            if (it != lengths.end()) len = it->second;
            double gap = (vs[i + 1]->long_pos - len) - vs[i]->long_pos;
            best = std::min(best, gap);
        }
    }
    return best;
}

// ── run_scenario ────────────────────────────────────────────────────────────

RunResult run_scenario(const Scenario& sc) {
    validate(sc);

    proto::Corpus corpus = proto::load_standard_corpus();

    // vehicle states
    std::vector<VehicleState> vehicles;
    for (const auto& spec : sc.vehicles) {
        VehicleState v;
        v.id = spec.id;
        v.role = spec.role;
        v.long_pos = spec.long_pos;
        v.lane_index = spec.lane;
        v.target_lane = spec.lane;
        v.lat_pos = dyn::lane_center(spec.lane);
        v.v_long = spec.params.cruise_speed;
        v.params = spec.params;
        v.mode = spec.role == RoleKind::Follower ? dyn::HaMode::Follow : dyn::HaMode::Cruise;
        vehicles.push_back(v);
    }
    std::sort(vehicles.begin(), vehicles.end(),
              [](const VehicleState& a, const VehicleState& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < sc.platoon_order.size(); ++i) {
        for (auto& v : vehicles) {
            if (v.id == sc.platoon_order[i]) {
                v.signals.leader = sc.platoon_order[i - 1];
                v.signals.prev_leader = v.signals.leader;
            }
        }
    }
    int leader_lane = sc.find(sc.platoon_order[0])->lane;

    std::map<std::uint32_t, double> lengths;
    for (const auto& v : vehicles) lengths[v.id] = v.params.length;

    auto vehicle_ref = [&](std::uint32_t id) -> VehicleState& {
        for (auto& v : vehicles)
            if (v.id == id) return v;
        throw ConfigError("no vehicle " + std::to_string(id));
    };

    std::map<std::uint32_t, proto::VehicleAccount> accounts;
    std::map<std::uint32_t, std::uint64_t> align_armed_since;
    for (const auto& v : vehicles) accounts[v.id];

    // discrete layer, spelled out to its initial configuration
    SystemTerm sys;
    for (const auto& v : vehicles) sys.participants.push_back({v.id, proto::entry_call(v.role)});
    sys = rt::elaborate_entries(sys, corpus.env);

    dyn::WorldView world;
    for (const auto& v : vehicles) world.put(pose_of(v));

    // per-tick event log, filled by handlers and the automata phase
    std::vector<std::string> tick_events;
    std::uint64_t current_tick = 0;

    RunResult result;
    result.metrics.min_gap = kInf;

    rt::HandlerMap handlers;
    for (const auto& v : vehicles) {
        std::uint32_t id = v.id;
        handlers[id] = [&, id](const rt::InterfaceRequest& req) {
            VehicleState& self = vehicle_ref(id);
            RoleKind role_before = self.role;
            auto out = proto::handle_interface(req, self, accounts[id], world, vehicles);
            if (out.kind == rt::InterfaceOutcome::Kind::Completed) {
                if (req.label == "join_ok") {
                    bool yes = out.channel_reply &&
                               out.channel_reply->second == std::vector<Name>{true_constant()};
                    tick_events.push_back(std::string(yes ? "join_ok_true:" : "join_ok_false:") +
                                          std::to_string(id) + ">" + req.args[1].display);
                } else if (req.label == "set_ldr") {
                    tick_events.push_back("set_ldr:" + std::to_string(id) + "=" +
                                          req.args[0].display);
                } else if (req.label == "align_start" || req.label == "merge_start") {
                    tick_events.push_back(req.label + ":" + std::to_string(id));
                } else if (req.label == "merge_done" && role_before == RoleKind::Joiner) {
                    tick_events.push_back("merge_done:" + std::to_string(id));
                    tick_events.push_back("role:" + std::to_string(id) + "=Follower");
                    result.metrics.merge_times.emplace_back(
                        id, static_cast<double>(current_tick) * sc.sampling_period);
                }
            }
            return out;
        };
    }

    rt::RunState run_state;
    rt::TickOptions tick_opts;
    tick_opts.buffered_broadcast = sc.buffered_broadcast;

    auto total_joiners = [&] {
        std::size_t n = 0;
        for (const auto& spec : sc.vehicles)
            if (spec.role == RoleKind::Joiner) ++n;
        return n;
    }();

    std::uint64_t max_ticks =
        static_cast<std::uint64_t>(std::llround(sc.max_duration / sc.sampling_period));
    int substeps = static_cast<int>(std::llround(sc.sampling_period / sc.dynamics_dt));
    int settled_ticks = 0;
    const int settle_hold = 20;

    for (std::uint64_t t = 0; t < max_ticks; ++t) {
        current_tick = t;
        tick_events.clear();

        // joiner re-broadcast while nothing is in flight
        for (std::size_t pi = 0; pi < sys.participants.size(); ++pi) {
            auto& part = sys.participants[pi];
            VehicleState& v = vehicle_ref(part.owner);
            if (v.role != RoleKind::Joiner) continue;
            if (!proto::needs_rebroadcast(sys, pi)) continue;
            if (auto rearmed = proto::rearm_broadcast(part.term)) {
                part.term = *rearmed;
                accounts[part.owner].join = {};  // a new attempt may decide afresh
                tick_events.push_back("rebroadcast:" + std::to_string(part.owner));
            }
        }

        // optional align-wait timeout (disabled unless configured)
        if (sc.align_timeout_ticks > 0) {
            for (auto& v : vehicles) {
                if (v.align_monitor.armed) {
                    auto [it, inserted] = align_armed_since.try_emplace(v.id, t);
                    (void)inserted;
                    if (t - it->second >= sc.align_timeout_ticks) {
                        v.align_monitor = {};
                        v.signals.leader = v.signals.prev_leader;
                        accounts[v.id].align_wait_aborted = true;
                        align_armed_since.erase(v.id);
                        tick_events.push_back("align_timeout:" + std::to_string(v.id));
                    }
                } else {
                    align_armed_since.erase(v.id);
                }
            }
        }

        // (1) protocol reactions against the last localization snapshot
        calc::RangeRelation in_range = [&](std::uint32_t a, std::uint32_t b) {
            const dyn::Pose &pa = world.at(a), &pb = world.at(b);
            double dx = pa.long_pos - pb.long_pos, dy = pa.lat_pos - pb.lat_pos;
            return std::sqrt(dx * dx + dy * dy) <= sc.broadcast_range;
        };
        rt::TickReport report;
        try {
            auto [next, rep] = rt::tick(sys, corpus.env, handlers, in_range, sc.seed, t,
                                        run_state, tick_opts);
            sys = std::move(next);
            report = std::move(rep);
        } catch (const rt::BudgetExceededError&) {
            result.metrics.deadlock_flag = true;
            break;
        }
        for (const auto& [req, reason] : report.rejected_requests) {
            (void)reason;
            tick_events.push_back("rejected:" + std::to_string(req.owner) + ":" + req.label);
        }

        // (2) behavior automata, in owner-id order
        for (auto& v : vehicles) {
            dyn::HaOutputs out = dyn::ha_step(v, world, sc.d, sc.tolerances);
            if (out.align_done) tick_events.push_back("align_done:" + std::to_string(v.id));
            if (out.merge_done) tick_events.push_back("ha_merge_done:" + std::to_string(v.id));
        }

        // (3) dynamics substeps with synchronous per-substep snapshots
        for (int s = 0; s < substeps; ++s) {
            dyn::WorldView snap;
            for (const auto& v : vehicles) snap.put(pose_of(v));
            for (auto& v : vehicles) dyn::flow(v, dyn::command_for(v, sc.d), snap, sc.dynamics_dt,
                                               sc.tolerances);
        }

        // (4) localization broadcast
        world = dyn::WorldView{};
        for (const auto& v : vehicles) world.put(pose_of(v));

        // (5) log
        TraceRecord rec;
        rec.tick = t;
        rec.time = static_cast<double>(t) * sc.sampling_period;
        for (const auto& v : vehicles)
            rec.vehicles.push_back({v.id, v.long_pos, v.lat_pos, v.v_long, v.role, v.mode,
                                    v.signals.leader, v.signals.prev_leader});
        rec.events = tick_events;
        for (const auto& step : report.steps_taken) rec.reactions.push_back(step.describe());
        rec.min_gap = min_same_lane_gap(rec.vehicles, lengths);
        result.metrics.min_gap = std::min(result.metrics.min_gap, rec.min_gap);
        result.trace.push_back(std::move(rec));

        // termination: all joiners merged and the platoon gaps settled
        std::size_t merged = result.metrics.merge_times.size();
        if (merged == total_joiners && total_joiners > 0) {
            bool ok = true;
            std::vector<const VehicleState*> lane;
            for (const auto& v : vehicles)
                if (v.lane_index == leader_lane) lane.push_back(&v);
            std::sort(lane.begin(), lane.end(), [](auto* a, auto* b) {
                return a->long_pos < b->long_pos;
            });
            for (std::size_t i = 0; i + 1 < lane.size(); ++i) {
                double gap = (lane[i + 1]->long_pos - lane[i + 1]->params.length) -
                             lane[i]->long_pos;
                ok &= std::abs(gap - sc.d) <= 0.05 * sc.d;
            }
            settled_ticks = ok ? settled_ticks + 1 : 0;
            if (settled_ticks >= settle_hold) {
                result.completed = true;
                break;
            }
        }
    }

    result.metrics.merges_completed = result.metrics.merge_times.size();
    result.metrics.timeout_without_merge =
        total_joiners > 0 && result.metrics.merges_completed < total_joiners;
    if (result.metrics.timeout_without_merge) result.metrics.deadlock_flag = true;

    // final rms gap error over the platoon lane
    if (!result.trace.empty()) {
        const auto& last = result.trace.back();
        std::vector<const TraceVehicle*> lane;
        for (const auto& v : last.vehicles) {
            int li = static_cast<int>(std::llround(v.lat_pos / dyn::kLaneWidth));
            if (li == leader_lane) lane.push_back(&v);
        }
        std::sort(lane.begin(), lane.end(),
                  [](auto* a, auto* b) { return a->long_pos < b->long_pos; });
        double sum = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i + 1 < lane.size(); ++i) {
            double gap = (lane[i + 1]->long_pos - lengths[lane[i + 1]->id]) - lane[i]->long_pos;
            sum += (gap - sc.d) * (gap - sc.d);
            ++n;
        }
        result.metrics.final_gap_rms = n ? std::sqrt(sum / static_cast<double>(n)) : 0.0;
    }
    return result;
}

// ── CSV ─────────────────────────────────────────────────────────────────────

std::string trace_to_csv(const Scenario& sc, const std::vector<TraceRecord>& trace) {
    std::ostringstream os;
    os << "# scenario d=" << fmt(sc.d) << " sampling_period=" << fmt(sc.sampling_period)
       << " seed=" << sc.seed << " leader_lane=" << sc.find(sc.platoon_order[0])->lane
       << " lengths=";
    for (std::size_t i = 0; i < sc.vehicles.size(); ++i) {
        if (i) os << ",";
        os << sc.vehicles[i].id << ":" << fmt(sc.vehicles[i].params.length);
    }
    os << "\n";

    std::vector<std::uint32_t> ids;
    for (const auto& v : sc.vehicles) ids.push_back(v.id);
    std::sort(ids.begin(), ids.end());

    os << "tick,time";
    for (auto id : ids)
        os << ",v" << id << "_long,v" << id << "_lat,v" << id << "_vlong,v" << id << "_role,v"
           << id << "_mode,v" << id << "_L,v" << id << "_Lp";
    os << ",events,reactions,min_gap\n";

    for (const auto& rec : trace) {
        os << rec.tick << "," << fmt(rec.time);
        for (const auto& v : rec.vehicles) {
            os << "," << fmt(v.long_pos) << "," << fmt(v.lat_pos) << "," << fmt(v.v_long) << ","
               << dyn::role_name(v.role) << "," << dyn::mode_name(v.mode) << "," << opt_id(v.leader)
               << "," << opt_id(v.prev_leader);
        }
        auto join_list = [](const std::vector<std::string>& xs) {
            std::string s;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (i) s += ";";
                std::string x = xs[i];
                for (auto& c : x)
                    if (c == ',') c = '/';
                s += x;
            }
            return s;
        };
        os << "," << join_list(rec.events) << "," << join_list(rec.reactions) << ","
           << fmt(rec.min_gap) << "\n";
    }

    std::string body = os.str();
    char digest[32];
    std::snprintf(digest, sizeof digest, "%016" PRIx64, fnv1a(body));
    return body + "# digest fnv1a=" + digest + "\n";
}

TraceFile trace_from_csv(const std::string& csv) {
    TraceFile out;
    std::istringstream in(csv);
    std::string line;

    // scenario comment
    if (!std::getline(in, line) || line.rfind("# scenario ", 0) != 0)
        throw TraceError("missing scenario header line");
    {
        std::istringstream hs(line.substr(11));
        std::string tok;
        while (hs >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
            if (key == "d") out.d = std::stod(value);
            if (key == "leader_lane") out.leader_lane = std::stoi(value);
            if (key == "lengths") {
                std::istringstream ls(value);
                std::string pair;
                while (std::getline(ls, pair, ',')) {
                    auto colon = pair.find(':');
                    if (colon == std::string::npos) continue;
                    out.lengths[static_cast<std::uint32_t>(std::stoul(pair.substr(0, colon)))] =
                        std::stod(pair.substr(colon + 1));
                }
            }
        }
    }

    // header
    if (!std::getline(in, line)) throw TraceError("missing csv header");
    std::vector<std::uint32_t> ids;
    {
        std::istringstream hs(line);
        std::string col;
        while (std::getline(hs, col, ',')) {
            if (col.rfind("v", 0) == 0 && col.find("_long") != std::string::npos)
                ids.push_back(static_cast<std::uint32_t>(std::stoul(col.substr(1))));
        }
    }

    std::string digest_line;
    while (std::getline(in, line)) {
        if (line.rfind("# digest", 0) == 0) {
            digest_line = line;
            break;
        }
        std::vector<std::string> cols;
        std::istringstream ls(line);
        std::string col;
        while (std::getline(ls, col, ',')) cols.push_back(col);
        std::size_t want = 2 + ids.size() * 7 + 3;
        if (cols.size() != want) throw TraceError("corrupt trace row: " + line);

        TraceRecord rec;
        rec.tick = std::stoull(cols[0]);
        rec.time = std::stod(cols[1]);
        std::size_t k = 2;
        for (auto id : ids) {
            TraceVehicle v;
            v.id = id;
            v.long_pos = std::stod(cols[k++]);
            v.lat_pos = std::stod(cols[k++]);
            v.v_long = std::stod(cols[k++]);
            v.role = role_from(cols[k++]);
            ++k;  // mode is informational here
            v.leader = cols[k] == "-" ? std::nullopt
                                      : std::make_optional(static_cast<std::uint32_t>(
                                            std::stoul(cols[k])));
            ++k;
            v.prev_leader = cols[k] == "-" ? std::nullopt
                                           : std::make_optional(static_cast<std::uint32_t>(
                                                 std::stoul(cols[k])));
            ++k;
            rec.vehicles.push_back(v);
        }
        std::istringstream es(cols[k++]);
        std::string ev;
        while (std::getline(es, ev, ';'))
            if (!ev.empty()) rec.events.push_back(ev);
        std::istringstream rs(cols[k++]);
        while (std::getline(rs, ev, ';'))
            if (!ev.empty()) rec.reactions.push_back(ev);
        rec.min_gap = cols[k] == "inf" ? kInf : std::stod(cols[k]);
        out.trace.push_back(std::move(rec));
    }

    if (!digest_line.empty()) {
        auto pos = csv.rfind("# digest fnv1a=");
        char expect[32];
        std::snprintf(expect, sizeof expect, "%016" PRIx64, fnv1a(csv.substr(0, pos)));
        out.digest_ok = digest_line == std::string("# digest fnv1a=") + expect;
    }
    return out;
}

std::string metrics_to_json(const MetricsSummary& m) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"merges_completed\": " << m.merges_completed << ",\n";
    os << "  \"merge_times\": {";
    for (std::size_t i = 0; i < m.merge_times.size(); ++i) {
        if (i) os << ", ";
        os << "\"" << m.merge_times[i].first << "\": " << fmt(m.merge_times[i].second);
    }
    os << "},\n";
    os << "  \"min_gap\": " << (std::isinf(m.min_gap) ? "null" : fmt(m.min_gap)) << ",\n";
    os << "  \"final_gap_rms\": " << fmt(m.final_gap_rms) << ",\n";
    os << "  \"deadlock_flag\": " << (m.deadlock_flag ? "true" : "false") << ",\n";
    os << "  \"timeout_without_merge\": " << (m.timeout_without_merge ? "true" : "false") << "\n";
    os << "}\n";
    return os.str();
}

}  // namespace platoon::sim
