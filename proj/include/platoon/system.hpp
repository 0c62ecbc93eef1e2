#ifndef PLATOON_SYSTEM_HPP
#define PLATOON_SYSTEM_HPP

#include <functional>
#include <optional>

#include "platoon/congruence.hpp"
#include "platoon/term.hpp"
#include "platoon/term_ops.hpp"

namespace platoon::calc {

// ── SystemTerm ──────────────────────────────────────────────────────────────
// Top-level parallel composition of per-owner terms. shared_restrictions are
// restrictions whose scope spans participants (created by extrusion when a
// private name is communicated out). fresh_counter is the monotone source of
// names minted during execution; it rides along so runs replay exactly.

struct Participant {
    std::uint32_t owner = 0;
    Term term;
};

struct SystemTerm {
    std::vector<Participant> participants;
    std::vector<Name> shared_restrictions;
    std::uint64_t fresh_counter = kFirstRuntimeId;

    const Participant* find_owner(std::uint32_t owner) const {
        for (const auto& p : participants)
            if (p.owner == owner) return &p;
        return nullptr;
    }
};

bool system_equal(const SystemTerm& a, const SystemTerm& b);
std::uint64_t system_hash(const SystemTerm& s);

// Canonical form for state-space exploration: participant terms canonicalized,
// dead shared restrictions pruned, surviving ones renamed consistently, the
// fresh counter reset. Congruent systems map to equal canonical systems.
SystemTerm canonical_system(const SystemTerm& s);

using RangeRelation = std::function<bool(std::uint32_t, std::uint32_t)>;
RangeRelation all_in_range();

// ── Reaction steps ──────────────────────────────────────────────────────────

struct CommunicationStep {
    std::uint32_t sender_owner = 0, receiver_owner = 0;
    Name chan;
    std::vector<Name> payload;  // after any extrusion renames
    TermPath send_path, recv_path;
};

struct BroadcastStep {
    std::uint32_t sender_owner = 0;
    std::vector<std::uint32_t> receiver_owners;
    Name payload;  // after any extrusion rename
    TermPath send_path;
    std::vector<TermPath> recv_paths;
};

struct MatchStep {
    std::uint32_t owner = 0;
    std::size_t branch_index = 0;
    Name subject;
    TermPath path;
};

enum class UnobservableResolution : std::uint8_t { Symbolic, Completed, Rejected };

struct UnobservableStep {
    std::uint32_t owner = 0;
    std::string label;
    std::vector<Name> args;  // after any extrusion renames
    std::vector<Name> binders;
    std::vector<Name> bound_values;  // symbolic at enumeration; actual once resolved
    UnobservableResolution resolution = UnobservableResolution::Symbolic;
    TermPath path;
};

struct UnfoldStep {
    std::uint32_t owner = 0;
    std::string def_name;
    TermPath path;
};

struct ReactionStep {
    std::variant<CommunicationStep, BroadcastStep, MatchStep, UnobservableStep, UnfoldStep> v;
    std::uint64_t pre_hash = 0;
    SystemTerm post;
    // Set when the consumed prefix (or unfolded call) sits under a replication:
    // owner plus canonical key of the replicate body, for unfold budgeting.
    std::optional<std::pair<std::uint32_t, std::string>> replicate_site;

    std::uint32_t initiating_owner() const;
    std::string describe() const;
};

struct StaleStepError : CalcError {
    StaleStepError() : CalcError("reaction step does not match the given system state") {}
};

// ── Operations ──────────────────────────────────────────────────────────────

// Every enabled step, deterministically ordered by (initiating owner,
// syntactic position). Post-states are precomputed against `sys`.
std::vector<ReactionStep> enabled_reactions(const SystemTerm& sys, const DefinitionEnv& env,
                                            const RangeRelation& in_range);

// Scheduler-facing variant: the same steps in the same order, but without
// post-states (and with pre-extrusion argument names). A scheduler filters
// and picks one sketch, then materializes just that step.

// A prefix reached through a call body under a replication (only with
// expand_replicated_calls): consuming it materializes one copy, unfolds the
// call, and fires the prefix in a single step. Schedulers enforcing the
// sampling rule charge def_name as an unfolding of that definition.
struct ExpansionPoint {
    TermPath call_path;   // position of the replicated call
    TermPath inner_path;  // position of the prefix inside the instantiated body
    std::string def_name;
};

struct StepSketch {
    std::variant<CommunicationStep, BroadcastStep, MatchStep, UnobservableStep, UnfoldStep> v;
    std::optional<std::pair<std::uint32_t, std::string>> replicate_site;
    std::optional<ExpansionPoint> primary_expansion;
    std::optional<ExpansionPoint> secondary_expansion;                 // comm receiver
    std::vector<std::optional<ExpansionPoint>> receiver_expansions;    // broadcast receivers
    std::uint32_t initiating_owner() const;
};

struct SketchOptions {
    // canonical replicate-body keys cost an alpha pass per site; schedulers
    // that do not budget replication skip them
    bool with_replicate_sites = false;
    // expose head prefixes of calls under replications (state-space
    // exploration mode; the tick scheduler surfaces UnfoldSteps instead so
    // the sampling rule can gate them)
    bool expand_replicated_calls = false;
};

std::vector<StepSketch> sketch_reactions(const SystemTerm& sys, const DefinitionEnv& env,
                                         const RangeRelation& in_range,
                                         const SketchOptions& opts = {});

ReactionStep materialize(const SystemTerm& sys, const DefinitionEnv& env, const StepSketch& s);
ReactionStep materialize_unobservable(const SystemTerm& sys, const DefinitionEnv& env,
                                      const StepSketch& s, const std::vector<Name>& values);
ReactionStep materialize_unobservable_rejected(const SystemTerm& sys, const DefinitionEnv& env,
                                               const StepSketch& s);

// Returns the stored post-state after checking the step was produced from an
// identical pre-state; throws StaleStepError otherwise.
SystemTerm apply_reaction(const SystemTerm& sys, const ReactionStep& step);

// Re-derives an unobservable step with actual interface results substituted
// for the symbolic ones (runtime completion path).
ReactionStep resolve_unobservable(const SystemTerm& sys, const UnobservableStep& info,
                                  const std::vector<Name>& values);

// Consumes the prefix and discards its continuation (interface rejection).
ReactionStep resolve_unobservable_rejected(const SystemTerm& sys, const UnobservableStep& info);

// Delivers a payload on a channel to the owner's first exposed matching
// receive, as a self-communication (interface channel replies). Returns
// nothing when no matching receive is exposed.
std::optional<ReactionStep> deliver_on_channel(const SystemTerm& sys, std::uint32_t owner,
                                               const Name& chan, const std::vector<Name>& payload);

// Count of exposed prefixes consumed by the step (2 for communication,
// 1 + receivers for broadcast, 1 otherwise); used by invariant checks.
std::size_t consumed_prefix_count(const ReactionStep& step);

}  // namespace platoon::calc

#endif
