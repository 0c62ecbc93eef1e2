#ifndef PLATOON_EXPLORER_HPP
#define PLATOON_EXPLORER_HPP

#include "platoon/dynamics.hpp"
#include "platoon/system.hpp"

namespace platoon::explorer {

// Bounded exhaustive exploration of the discrete protocol layer. Interface
// actions are abstracted: identity and leader queries answer from per-owner
// bookkeeping, the join decision is nondeterministic (subject to the
// once-per-attempt latch), and armed event waits may complete at any point
// relative to other steps, so every dynamics timing is covered.

struct Bounds {
    std::size_t max_states = 200000;
    std::size_t max_depth = 100000;
    std::size_t max_term_nodes = 4000;  // per-owner ceiling (replication guard)
};

struct OwnerBook {
    std::uint32_t owner = 0;
    dyn::RoleKind role = dyn::RoleKind::Leader;
    std::optional<std::uint32_t> leader, prev_leader;
    bool join_decided = false;
    bool align_armed = false;
    bool merge_armed = false;

    bool operator==(const OwnerBook& o) const = default;
};

struct AbstractState {
    calc::SystemTerm sys;  // canonical
    std::vector<OwnerBook> books;
    std::uint64_t hash = 0;
};

struct Instance {
    calc::DefinitionEnv env;
    std::vector<std::pair<std::uint32_t, dyn::RoleKind>> owners;
};

using GoalPredicate = std::function<bool(const AbstractState&)>;

// Every owner that started as a joiner has become a follower.
GoalPredicate goal_all_joined(const Instance& inst);

struct DeadlockReport {
    AbstractState state;
    std::vector<std::string> trace;  // step labels from the initial state
};

struct ExplorationResult {
    std::size_t states_visited = 0;
    std::vector<DeadlockReport> deadlocks;
    bool goal_reached = false;
    // Bounded-fairness report: no reachable execution settles or cycles
    // without passing a goal state (self-loops ignored).
    bool goal_universal = false;
    bool truncated = false;
};

struct CorruptTraceError : calc::CalcError {
    using calc::CalcError::CalcError;
};

AbstractState initial_state(const Instance& inst);

// All successors with deterministic labels. Exposed so the brute-force
// oracle in the test suite can drive the very same semantics through an
// independently written search.
std::vector<std::pair<std::string, AbstractState>> successors(const AbstractState& s,
                                                              const Instance& inst,
                                                              const Bounds& bounds);

// A state with pending work but no way to change (every successor loops back
// to the state itself).
bool is_deadlock(const AbstractState& s, const Instance& inst, const Bounds& bounds);
bool owner_settled(const calc::Term& t);

ExplorationResult explore(const Instance& inst, const GoalPredicate& goal, const Bounds& bounds);

// Deterministic reconstruction of a trace produced by explore; throws
// CorruptTraceError when a label does not match any successor.
std::vector<AbstractState> replay(const Instance& inst, const std::vector<std::string>& trace,
                                  const Bounds& bounds);

}  // namespace platoon::explorer

#endif
