#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "platoon/sim.hpp"

using namespace platoon;
using namespace platoon::sim;

namespace {

Scenario fig4_scenario() {
    Scenario sc;
    sc.d = 10;
    sc.seed = 42;
    sc.max_duration = 120;
    sc.platoon_order = {0, 1, 2};
    auto veh = [&](std::uint32_t id, dyn::RoleKind role, int lane, double pos) {
        VehicleSpec v;
        v.id = id;
        v.role = role;
        v.lane = lane;
        v.long_pos = pos;
        sc.vehicles.push_back(v);
    };
    veh(0, dyn::RoleKind::Leader, 0, 300.0);
    veh(1, dyn::RoleKind::Follower, 0, 285.5);
    veh(2, dyn::RoleKind::Follower, 0, 271.0);
    veh(3, dyn::RoleKind::Joiner, 1, 285.5);
    return sc;
}

// flattened (position, event) list
std::vector<std::string> all_events(const RunResult& res) {
    std::vector<std::string> out;
    for (const auto& rec : res.trace)
        for (const auto& e : rec.events) out.push_back(e);
    return out;
}

std::ptrdiff_t index_of(const std::vector<std::string>& events, const std::string& needle) {
    for (std::size_t i = 0; i < events.size(); ++i)
        if (events[i] == needle) return static_cast<std::ptrdiff_t>(i);
    return -1;
}

}  // namespace

TEST_CASE("the four-vehicle merge runs the expected event order") {
    RunResult res = run_scenario(fig4_scenario());
    REQUIRE(res.completed);
    REQUIRE(res.metrics.merges_completed == 1);
    CHECK_FALSE(res.metrics.deadlock_flag);

    auto events = all_events(res);
    // exactly one positive join answer, at the follower beside the joiner
    std::size_t trues = 0;
    for (const auto& e : events) trues += (e.rfind("join_ok_true:", 0) == 0);
    CHECK(trues == 1);
    CHECK(index_of(events, "join_ok_true:3>1") >= 0);

    std::ptrdiff_t jt = index_of(events, "join_ok_true:3>1");
    std::ptrdiff_t sl_j = index_of(events, "set_ldr:3=0");
    std::ptrdiff_t sl_f = index_of(events, "set_ldr:1=3");
    std::ptrdiff_t ad_j = index_of(events, "align_done:3");
    std::ptrdiff_t ad_f = index_of(events, "align_done:1");
    std::ptrdiff_t ms = index_of(events, "merge_start:3");
    std::ptrdiff_t md = index_of(events, "merge_done:3");
    REQUIRE(jt >= 0);
    REQUIRE(sl_j > jt);
    REQUIRE(sl_f > sl_j);
    REQUIRE(ad_j > sl_j);
    REQUIRE(ad_f >= ad_j);
    REQUIRE(ms > ad_f);
    REQUIRE(md > ms);

    // joiner ends up a follower, chained between A and B
    const auto& last = res.trace.back();
    for (const auto& v : last.vehicles) {
        if (v.id == 3) {
            CHECK(v.role == dyn::RoleKind::Follower);
            CHECK(v.leader == 0);
        }
        if (v.id == 1) CHECK(v.leader == 3);
    }
    CHECK(res.metrics.final_gap_rms < 0.05 * 10.0);
    CHECK(res.metrics.min_gap >= 5.0);
}

TEST_CASE("gap creation reaches 2d plus the joiner length before the merge") {
    Scenario sc = fig4_scenario();
    RunResult res = run_scenario(sc);
    // find the merge_start tick and measure the slot B left open
    for (std::size_t i = 0; i < res.trace.size(); ++i) {
        bool fired = false;
        for (const auto& e : res.trace[i].events) fired |= (e == "merge_start:3");
        if (!fired) continue;
        const TraceVehicle *a = nullptr, *b = nullptr, *d = nullptr;
        for (const auto& v : res.trace[i].vehicles) {
            if (v.id == 0) a = &v;
            if (v.id == 1) b = &v;
            if (v.id == 3) d = &v;
        }
        REQUIRE(a);
        REQUIRE(b);
        REQUIRE(d);
        double slot = (a->long_pos - 4.5) - b->long_pos;
        CHECK(slot >= 2 * sc.d + 4.5 - 0.5);
        return;
    }
    FAIL("merge_start never fired");
}

TEST_CASE("a lone leader runs to the duration limit with no events") {
    Scenario sc;
    sc.d = 10;
    sc.max_duration = 3.0;
    sc.platoon_order = {0};
    VehicleSpec v;
    v.id = 0;
    v.role = dyn::RoleKind::Leader;
    v.long_pos = 50;
    sc.vehicles.push_back(v);

    RunResult res = run_scenario(sc);
    CHECK(res.trace.size() == 30);
    CHECK_FALSE(res.completed);
    CHECK_FALSE(res.metrics.deadlock_flag);
    CHECK_FALSE(res.metrics.timeout_without_merge);
    CHECK(std::isinf(res.metrics.min_gap));
    for (const auto& rec : res.trace) CHECK(rec.events.empty());
}

TEST_CASE("same seed gives byte-identical traces") {
    Scenario sc = fig4_scenario();
    RunResult a = run_scenario(sc);
    RunResult b = run_scenario(sc);
    CHECK(trace_to_csv(sc, a.trace) == trace_to_csv(sc, b.trace));
}

TEST_CASE("trace csv round-trips with a valid digest and consistent metrics") {
    Scenario sc = fig4_scenario();
    RunResult res = run_scenario(sc);
    std::string csv = trace_to_csv(sc, res.trace);

    TraceFile parsed = trace_from_csv(csv);
    CHECK(parsed.digest_ok);
    CHECK(parsed.d == doctest::Approx(sc.d));
    REQUIRE(parsed.trace.size() == res.trace.size());

    // metrics consistency: the summary minimum equals the row minimum, and
    // each stored row minimum is recomputable from the stored positions
    double min_across = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < parsed.trace.size(); ++i) {
        double recomputed = min_same_lane_gap(parsed.trace[i].vehicles, parsed.lengths);
        if (!std::isinf(recomputed) || !std::isinf(parsed.trace[i].min_gap))
            CHECK(recomputed == doctest::Approx(parsed.trace[i].min_gap).epsilon(1e-6));
        min_across = std::min(min_across, parsed.trace[i].min_gap);
    }
    CHECK(min_across == doctest::Approx(res.metrics.min_gap).epsilon(1e-6));

    // tampering with a recorded speed breaks the digest
    std::string tampered = csv;
    std::size_t pos = csv.find("20.000000,Leader");
    REQUIRE(pos != std::string::npos);
    tampered[pos] = '3';
    CHECK_FALSE(trace_from_csv(tampered).digest_ok);
}

TEST_CASE("scenario files parse, validate, and reject bad input") {
    Scenario sc = load_scenario_file("scenarios/fig4.scn");
    CHECK(sc.vehicles.size() == 4);
    CHECK(sc.platoon_order == std::vector<std::uint32_t>{0, 1, 2});
    CHECK(sc.d == doctest::Approx(10.0));

    CHECK_THROWS_AS(parse_scenario("nonsense"), ConfigError);
    CHECK_THROWS_AS(parse_scenario("d: 10\nplatoon_order: [0]\n"
                                   "vehicle: id=0 role=Joiner lane=0 long=0\n"),
                    ConfigError);
    CHECK_THROWS_AS(parse_scenario("d: 10\nsampling_period: 0.1\ndynamics_dt: 0.03\n"
                                   "platoon_order: [0]\n"
                                   "vehicle: id=0 role=Leader lane=0 long=0\n"),
                    ConfigError);
    // duplicate ids
    CHECK_THROWS_AS(parse_scenario("d: 10\nplatoon_order: [0]\n"
                                   "vehicle: id=0 role=Leader lane=0 long=0\n"
                                   "vehicle: id=0 role=Joiner lane=1 long=0\n"),
                    ConfigError);
}

TEST_CASE("metrics render as structured key/value text") {
    MetricsSummary m;
    m.merges_completed = 2;
    m.merge_times = {{5, 14.4}, {6, 18.2}};
    m.min_gap = 9.7;
    m.final_gap_rms = 0.12;
    std::string js = metrics_to_json(m);
    CHECK(js.find("\"merges_completed\": 2") != std::string::npos);
    CHECK(js.find("\"5\": 14.4") != std::string::npos);
    CHECK(js.find("\"deadlock_flag\": false") != std::string::npos);
}

TEST_CASE("the align timeout extension restores the previous leader") {
    // aborted handover: the joiner never reaches its slot because we force an
    // unreachable alignment by teleporting it away; disabled timeout stalls,
    // enabled timeout restores L' and rejects the pending wait
    Scenario sc = fig4_scenario();
    sc.max_duration = 30.0;
    sc.align_timeout_ticks = 40;
    // make the joiner vastly slower so alignment cannot complete in time
    sc.vehicles[3].params.cruise_speed = 1.0;
    RunResult res = run_scenario(sc);
    bool timed_out = false, rejected = false;
    for (const auto& rec : res.trace)
        for (const auto& e : rec.events) {
            timed_out |= e.rfind("align_timeout:", 0) == 0;
            rejected |= e.rfind("rejected:", 0) == 0;
        }
    CHECK(timed_out);
    CHECK(rejected);
    CHECK(res.metrics.merges_completed == 0);
}
