#ifndef PLATOON_PROTOCOL_HPP
#define PLATOON_PROTOCOL_HPP

#include <map>

#include "platoon/dsl.hpp"
#include "platoon/dynamics.hpp"
#include "platoon/runtime.hpp"

namespace platoon::proto {

// ── Role programs ───────────────────────────────────────────────────────────
// The canonical process definitions for the three behaviors. The sources are
// the same text as the shipped protocols/*.pic files; tests assert they stay
// in sync.

const std::string& leader_source();
const std::string& follower_source();
const std::string& joiner_source();

// Follower variant with the leader handover reply dropped from Send_Ldr:
// a deliberately broken protocol used to prove the explorer catches
// deadlocks rather than passing vacuously.
const std::string& follower_without_reply_source();

calc::DefinitionEnv leader_program();
calc::DefinitionEnv follower_program();
calc::DefinitionEnv joiner_program();

struct ProtocolError : calc::CalcError {
    using calc::CalcError::CalcError;
};

struct Corpus {
    calc::DefinitionEnv env;
    std::shared_ptr<calc::NameTable> names;
};

// Parses one source per scope into a single environment and resolves
// cross-scope calls (e.g. the joiner's Merge continuing as follower::Follower).
Corpus load_corpus(const std::map<std::string, std::string>& sources_by_scope);

// The three canonical role programs as one environment.
Corpus load_standard_corpus();

// Entry call for a role, e.g. "leader::Leader".
std::string entry_for_role(dyn::RoleKind role);
calc::Term entry_call(dyn::RoleKind role);

// ── Vehicle-side interface semantics ────────────────────────────────────────

struct JoinDecision {
    std::optional<std::uint32_t> chosen;
    bool decided = false;
};

// Per-vehicle protocol bookkeeping beyond the dynamics state.
struct VehicleAccount {
    JoinDecision join;
    bool align_wait_aborted = false;  // set by the optional align timeout
};

// Picks the platoon member to join beside: the follower whose longitudinal
// position is nearest to ours, ties broken by lowest id; at most one True is
// ever issued per join attempt.
bool join_decision(JoinDecision& latch, const dyn::VehicleState& self,
                   std::uint32_t candidate, const std::vector<dyn::VehicleState>& vehicles);

// Executes one interface action against the vehicle. `vehicles` is the whole
// fleet (used by set_ldr validation and join_ok); `world` is the last
// localization snapshot.
rt::InterfaceOutcome handle_interface(const rt::InterfaceRequest& request,
                                      dyn::VehicleState& self, VehicleAccount& account,
                                      const dyn::WorldView& world,
                                      const std::vector<dyn::VehicleState>& vehicles);

// Vehicle-id names on the wire are integer constants.
calc::Name id_constant(std::uint32_t id);
std::optional<std::uint32_t> id_of_name(const calc::Name& n);

// ── Joiner re-broadcast ─────────────────────────────────────────────────────
// A lossy broadcast can strand a joiner, so the scenario re-issues the
// contact broadcast each period while the join attempt has nothing in
// flight: no session or pending work in the joiner's own term, and no peer
// still holding the contact channel (a follower that heard the broadcast
// answers immediately).

bool needs_rebroadcast(const calc::Term& joiner_term);
bool needs_rebroadcast(const calc::SystemTerm& sys, std::size_t participant_index);

// The joiner term with a fresh contact broadcast re-armed (inside the
// restriction that binds the contact channel, when still private).
std::optional<calc::Term> rearm_broadcast(const calc::Term& joiner_term);

}  // namespace platoon::proto

#endif
