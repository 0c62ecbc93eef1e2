#ifndef PLATOON_RUNTIME_HPP
#define PLATOON_RUNTIME_HPP

#include <map>
#include <unordered_map>

#include "platoon/system.hpp"

namespace platoon::rt {

using calc::Name;

// ── Interface layer ─────────────────────────────────────────────────────────
// Unobservable prefixes become requests against the vehicle interface. A
// request may complete at once (binding reply values), stay pending until a
// later tick (event waits), or be rejected, which terminates that branch of
// the protocol. A completion may additionally carry a reply to deliver on a
// channel the request passed out (the join_ok facility).

struct InterfaceRequest {
    std::uint32_t owner = 0;
    std::string label;
    std::vector<Name> args;
    std::vector<Name> reply_binders;
};

struct InterfaceOutcome {
    enum class Kind { Completed, Pending, Rejected };
    Kind kind = Kind::Pending;
    std::vector<Name> bound_values;
    std::optional<std::pair<Name, std::vector<Name>>> channel_reply;
    std::string reject_reason;

    static InterfaceOutcome completed(std::vector<Name> values = {}) {
        return {Kind::Completed, std::move(values), std::nullopt, {}};
    }
    static InterfaceOutcome completed_with_reply(Name chan, std::vector<Name> payload) {
        return {Kind::Completed, {}, std::make_pair(std::move(chan), std::move(payload)), {}};
    }
    static InterfaceOutcome pending() { return {Kind::Pending, {}, std::nullopt, {}}; }
    static InterfaceOutcome rejected(std::string reason) {
        return {Kind::Rejected, {}, std::nullopt, std::move(reason)};
    }
};

using InterfaceHandler = std::function<InterfaceOutcome(const InterfaceRequest&)>;
using HandlerMap = std::unordered_map<std::uint32_t, InterfaceHandler>;

// ── Tick ────────────────────────────────────────────────────────────────────

struct TickOptions {
    std::size_t per_owner_budget = 64;  // counted steps per owner per tick
    bool buffered_broadcast = false;    // zero-receiver broadcasts stay armed
};

struct PendingReply {
    std::uint32_t owner = 0;
    Name chan;
    std::vector<Name> payload;
};

// Carried across ticks within one run.
struct RunState {
    std::vector<PendingReply> pending_replies;
};

struct TickReport {
    std::uint64_t tick_index = 0;
    std::vector<calc::ReactionStep> steps_taken;
    std::vector<InterfaceRequest> pending_requests;
    std::vector<std::pair<InterfaceRequest, std::string>> rejected_requests;
    bool quiescent = false;
};

struct BudgetExceededError : calc::CalcError {
    explicit BudgetExceededError(std::uint32_t owner)
        : calc::CalcError("per-tick step budget exceeded by owner " + std::to_string(owner)) {}
};

struct HandlerMissingError : calc::CalcError {
    explicit HandlerMissingError(std::uint32_t owner)
        : calc::CalcError("no interface handler for owner " + std::to_string(owner)) {}
};

// Structural elaboration of a freshly configured system: unfolds calls and
// resolves matches (outside replications) until every participant exposes
// its first prefixes. Used when setting up a run so tick 0 starts from the
// fully spelled-out initial configuration; no interface action fires.
calc::SystemTerm elaborate_entries(const calc::SystemTerm& sys, const calc::DefinitionEnv& env);

// Advances the system to quiescence for one sampling period. Each definition
// name unfolds at most once per owner per tick; unobservable prefixes are
// dispatched to handlers; selection among simultaneously enabled steps is by
// seeded deterministic choice; the broadcast range is the one given (callers
// snapshot it at tick start).
std::pair<calc::SystemTerm, TickReport> tick(const calc::SystemTerm& sys,
                                             const calc::DefinitionEnv& env,
                                             const HandlerMap& handlers,
                                             const calc::RangeRelation& in_range,
                                             std::uint64_t seed, std::uint64_t tick_index,
                                             RunState& state, const TickOptions& opts = {});

// ── Channel topology ────────────────────────────────────────────────────────
// The communication graph over owners: an edge exists where a shared
// restricted channel is used with send capability on one side and receive
// capability on the other (capabilities are read through definition bodies).

struct Topology {
    // key: (lower owner, higher owner); value: the connecting channels
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<Name>> edges;

    bool has_edge(std::uint32_t a, std::uint32_t b) const {
        if (a > b) std::swap(a, b);
        return edges.count({a, b}) != 0;
    }
    std::size_t edge_count() const { return edges.size(); }
};

Topology channel_topology(const calc::SystemTerm& sys, const calc::DefinitionEnv& env);

}  // namespace platoon::rt

#endif
