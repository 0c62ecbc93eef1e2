#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "platoon/explorer.hpp"
#include "platoon/protocol.hpp"
#include "support/gen.hpp"

using namespace platoon;
using namespace platoon::calc;
using namespace platoon::explorer;
using dyn::RoleKind;

namespace {

Instance make_instance(const std::string& roles, bool mutated_follower = false) {
    auto corpus = mutated_follower
                      ? proto::load_corpus({{"leader", proto::leader_source()},
                                            {"follower", proto::follower_without_reply_source()},
                                            {"joiner", proto::joiner_source()}})
                      : proto::load_standard_corpus();
    Instance inst;
    inst.env = corpus.env;
    std::uint32_t id = 0;
    for (char c : roles) {
        if (c == ',') continue;
        RoleKind r = c == 'L' ? RoleKind::Leader : c == 'F' ? RoleKind::Follower : RoleKind::Joiner;
        inst.owners.push_back({id++, r});
    }
    return inst;
}

// Independent brute-force enumerator over the same successor semantics:
// depth-first with an explicit stack, its own visited store, and its own
// deadlock/goal verdicts. Written first; explore() must agree with it.
struct BruteForce {
    std::size_t states = 0;
    std::size_t deadlocks = 0;
    bool goal_reached = false;

    void run(const Instance& inst, const GoalPredicate& goal, const Bounds& bounds) {
        std::map<std::uint64_t, std::vector<AbstractState>> visited;
        std::vector<AbstractState> stack{initial_state(inst)};
        auto seen = [&](const AbstractState& s) {
            for (const auto& v : visited[s.hash])
                if (v.books == s.books && system_equal(v.sys, s.sys)) return true;
            return false;
        };
        visited[stack[0].hash].push_back(stack[0]);
        states = 1;
        while (!stack.empty()) {
            AbstractState s = std::move(stack.back());
            stack.pop_back();
            if (goal(s)) goal_reached = true;
            auto succs = successors(s, inst, bounds);
            bool all_self = true;
            for (auto& [label, next] : succs) {
                (void)label;
                bool self = next.books == s.books && system_equal(next.sys, s.sys);
                all_self &= self;
                if (self || seen(next)) continue;
                visited[next.hash].push_back(next);
                ++states;
                stack.push_back(std::move(next));
            }
            if (all_self) {
                bool settled = true;
                for (const auto& p : s.sys.participants) settled &= owner_settled(p.term);
                if (!settled) ++deadlocks;
            }
        }
    }
};

}  // namespace

TEST_CASE("a lone leader explores to a single live-idle canonical state") {
    Instance inst = make_instance("L");
    auto res = explore(inst, goal_all_joined(inst), Bounds{});
    CHECK(res.states_visited == 1);
    CHECK(res.deadlocks.empty());
    CHECK_FALSE(res.truncated);
    CHECK(res.goal_reached);  // no joiners: vacuously joined
}

TEST_CASE("a joiner with no followers retries forever without deadlocking") {
    Instance inst = make_instance("J");
    auto res = explore(inst, goal_all_joined(inst), Bounds{});
    CHECK(res.deadlocks.empty());
    CHECK_FALSE(res.goal_reached);
    CHECK_FALSE(res.truncated);
    CHECK(res.states_visited == 2);  // listening and re-armed, cycling
}

TEST_CASE("leader + follower + joiner reaches the merge with no deadlock") {
    Instance inst = make_instance("L,F,J");
    auto res = explore(inst, goal_all_joined(inst), Bounds{});
    CHECK(res.goal_reached);
    CHECK(res.deadlocks.empty());
    CHECK_FALSE(res.truncated);
    // the all-False retry loop is an execution that never merges
    CHECK_FALSE(res.goal_universal);
}

TEST_CASE("explore agrees with the independent brute-force enumerator") {
    for (const char* roles : {"L,F,J", "L,F,F,J"}) {
        Instance inst = make_instance(roles);
        Bounds bounds;
        BruteForce oracle;
        oracle.run(inst, goal_all_joined(inst), bounds);
        auto res = explore(inst, goal_all_joined(inst), bounds);
        CAPTURE(roles);
        CHECK(res.states_visited == oracle.states);
        CHECK(res.deadlocks.size() == oracle.deadlocks);
        CHECK(res.goal_reached == oracle.goal_reached);
        CHECK(res.goal_reached);
        CHECK(res.deadlocks.empty());
        CHECK_FALSE(res.truncated);
    }
}

TEST_CASE("dropping the handover reply is caught as a deadlock with a replayable trace") {
    Instance inst = make_instance("L,F,J", true);
    auto res = explore(inst, goal_all_joined(inst), Bounds{});
    REQUIRE(res.deadlocks.size() >= 1);
    CHECK_FALSE(res.goal_reached);

    const auto& d = res.deadlocks.front();
    auto states = replay(inst, d.trace, Bounds{});
    REQUIRE(states.size() == d.trace.size() + 1);
    CHECK(states.back().hash == d.state.hash);
    CHECK(system_equal(states.back().sys, d.state.sys));

    // the stuck state has pending work that can never proceed
    bool unsettled = false;
    for (const auto& p : d.state.sys.participants) unsettled |= !owner_settled(p.term);
    CHECK(unsettled);
}

TEST_CASE("two joiners contending for one slot strand the rejected one") {
    // the set_ldr rejection during an armed align kills the follower's
    // session, but the losing joiner is left waiting on the handover; the
    // explorer reports that honestly (the align-timeout extension exists to
    // recover it and is off by default)
    Instance inst = make_instance("L,F,J,J");
    auto res = explore(inst, goal_all_joined(inst), Bounds{});
    CHECK_FALSE(res.truncated);
    CHECK(res.goal_reached);  // many interleavings still merge both
    CHECK(res.deadlocks.size() >= 1);
    bool saw_rejection = false;
    for (const auto& d : res.deadlocks)
        for (const auto& step : d.trace) saw_rejection |= step.find(":rejected") != std::string::npos;
    CHECK(saw_rejection);
}

TEST_CASE("replay rejects corrupt traces and handles the empty trace") {
    Instance inst = make_instance("L,F,J");
    auto states = replay(inst, {}, Bounds{});
    REQUIRE(states.size() == 1);
    CHECK(states[0].hash == initial_state(inst).hash);
    CHECK_THROWS_AS(replay(inst, {"tau:9:nonsense"}, Bounds{}), CorruptTraceError);
}

TEST_CASE("enlarging bounds never flips the goal verdict to false") {
    Instance inst = make_instance("L,F,J");
    Bounds small;
    small.max_states = 12;
    auto tight = explore(inst, goal_all_joined(inst), small);
    auto wide = explore(inst, goal_all_joined(inst), Bounds{});
    if (tight.goal_reached) CHECK(wide.goal_reached);
    CHECK(tight.truncated);
    CHECK(wide.goal_reached);
}

TEST_CASE("canonicalization maps congruent systems to one state") {
    // sample reachable states; shuffling components with congruence laws and
    // renaming run-minted names must not change the canonical form
    Instance inst = make_instance("L,F,J");
    Bounds bounds;
    std::vector<AbstractState> sample{initial_state(inst)};
    for (int i = 0; i < 40; ++i) {
        auto succs = successors(sample.back(), inst, bounds);
        if (succs.empty()) break;
        sample.push_back(succs[i % succs.size()].second);
    }

    platoon::SplitMix64 rng(2024);
    for (const auto& s : sample) {
        SystemTerm shuffled = s.sys;
        // structural shuffle within each participant
        for (auto& p : shuffled.participants)
            p.term = platoon::testgen::law_rewrite_n(p.term, rng, 3);
        // rename every execution-minted name through a bijection
        NameMap bij;
        FreshNames fresh(kFirstRuntimeId + 500000);
        for (const auto& p : shuffled.participants)
            for (const auto& n : free_names(p.term))
                if (!n.is_constant() && n.id >= kFirstRuntimeId && !bij.count(n))
                    bij[n] = fresh.fresh(n);
        FreshNames scratch(kFirstRuntimeId + 900000);
        for (auto& p : shuffled.participants) p.term = substitute(p.term, bij, scratch);
        for (auto& n : shuffled.shared_restrictions) {
            auto it = bij.find(n);
            if (it != bij.end()) n = it->second;
        }
        shuffled.fresh_counter = fresh.counter();

        SystemTerm c1 = canonical_system(s.sys);
        SystemTerm c2 = canonical_system(shuffled);
        CHECK(system_equal(c1, c2));
    }
}
