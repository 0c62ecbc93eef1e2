#include "platoon/protocol.hpp"

#include <algorithm>
#include <cmath>

namespace platoon::proto {

using namespace platoon::calc;
using platoon::dyn::RoleKind;
using platoon::dyn::VehicleState;
using platoon::rt::InterfaceOutcome;
using platoon::rt::InterfaceRequest;

// ── Sources ─────────────────────────────────────────────────────────────────

const std::string& leader_source() {
    static const std::string text = "Leader() = tau drive . Leader()\n";
    return text;
}

const std::string& follower_source() {
    static const std::string text =
        "Wait(y) = y() . tau merge_done\n"
        "Align(y) = tau align_start . tau align_done . y<> . Wait(y)\n"
        "Rcv_Ldr(y, ldr) = y(nldr) . tau set_ldr(nldr) . Align(y)\n"
        "Send_Ldr(y) = tau get_ldr -> (ldr) . y<ldr> . Rcv_Ldr(y, ldr)\n"
        "Respond(y, flag) = flag:[True => Send_Ldr(y)]\n"
        "Ident(y) = tau get_id -> (id) . y<id> . y(flag) . Respond(y, flag)\n"
        "Cooperate() = !recv(x) . new y in (x<y> . Ident(y))\n"
        "Follow() = tau keep_dist . Follow()\n"
        "Follower() = Follow() | Cooperate()\n";
    return text;
}

const std::string& joiner_source() {
    static const std::string text =
        "Merge(y) = tau merge_start . tau merge_done . y<> . Follower()\n"
        "Wait(y) = tau get_id -> (id) . y<id> . y() . Merge(y)\n"
        "Align(y) = tau align_start . tau align_done . Wait(y)\n"
        "Rcv_Ldr(y) = y(ldr) . tau set_ldr(ldr) . Align(y)\n"
        "Ans(y, ok) = y<ok> . ok:[True => Rcv_Ldr(y)]\n"
        "Check(y, id) = new z in (tau join_ok(z, id) . z(ok) . Ans(y, ok))\n"
        "Listen(x) = x(y) . y(id) . Check(y, id)\n"
        "Joiner() = new x in (bcast<x> | !Listen(x))\n";
    return text;
}

const std::string& follower_without_reply_source() {
    static const std::string text =
        "Wait(y) = y() . tau merge_done\n"
        "Align(y) = tau align_start . tau align_done . y<> . Wait(y)\n"
        "Rcv_Ldr(y, ldr) = y(nldr) . tau set_ldr(nldr) . Align(y)\n"
        "Send_Ldr(y) = tau get_ldr -> (ldr) . Rcv_Ldr(y, ldr)\n"
        "Respond(y, flag) = flag:[True => Send_Ldr(y)]\n"
        "Ident(y) = tau get_id -> (id) . y<id> . y(flag) . Respond(y, flag)\n"
        "Cooperate() = !recv(x) . new y in (x<y> . Ident(y))\n"
        "Follow() = tau keep_dist . Follow()\n"
        "Follower() = Follow() | Cooperate()\n";
    return text;
}

// ── Corpus loading ──────────────────────────────────────────────────────────

Corpus load_corpus(const std::map<std::string, std::string>& sources_by_scope) {
    Corpus corpus;
    corpus.names = std::make_shared<NameTable>();

    for (const auto& [scope, text] : sources_by_scope) {
        dsl::ParseOptions opts;
        opts.scope = scope;
        opts.allow_unresolved = true;
        opts.names = corpus.names;
        auto res = dsl::parse(text, opts);
        if (!res.ok()) {
            std::string msg = "protocol source '" + scope + "' failed to parse:";
            for (const auto& d : res.diagnostics) msg += "\n  " + dsl::format_diagnostic(d);
            throw ProtocolError(msg);
        }
        corpus.env.merge(res.env);
    }

    // Resolve leftover unqualified calls across scopes.
    std::map<std::string, std::vector<std::string>> by_base;
    for (const auto& key : corpus.env.order()) by_base[dsl::base_name(key)].push_back(key);

    DefinitionEnv resolved;
    for (const auto& key : corpus.env.order()) {
        const Definition& def = corpus.env.at(key);
        Term body = dsl::rewrite_calls(def.body, [&](const std::string& target) -> std::string {
            if (corpus.env.contains(target)) return target;
            auto it = by_base.find(dsl::base_name(target));
            if (it == by_base.end())
                throw ProtocolError("unresolved call to " + target + " in " + key);
            if (it->second.size() > 1)
                throw ProtocolError("ambiguous call to " + target + " in " + key);
            return it->second[0];
        });
        resolved.add({def.name, def.params, body});
    }

    // Arity check now that everything resolves.
    for (const auto& key : resolved.order()) {
        const Definition& def = resolved.at(key);
        std::function<void(const Term&)> walk = [&](const Term& t) {
            if (const auto* p = as<PrefixTerm>(t)) return walk(p->cont);
            if (const auto* p = as<ParallelTerm>(t)) {
                walk(p->left);
                walk(p->right);
                return;
            }
            if (const auto* p = as<ChoiceTerm>(t)) {
                walk(p->left);
                walk(p->right);
                return;
            }
            if (const auto* p = as<ReplicateTerm>(t)) return walk(p->body);
            if (const auto* p = as<RestrictTerm>(t)) return walk(p->body);
            if (const auto* p = as<MatchTerm>(t)) {
                for (const auto& b : p->branches) walk(b.body);
                return;
            }
            if (const auto* c = as<CallTerm>(t)) {
                const Definition& target = resolved.at(c->def_name);
                if (target.params.size() != c->args.size())
                    throw ProtocolError("arity mismatch calling " + c->def_name + " from " + key);
            }
        };
        walk(def.body);
    }

    corpus.env = std::move(resolved);
    return corpus;
}

Corpus load_standard_corpus() {
    return load_corpus({{"leader", leader_source()},
                        {"follower", follower_source()},
                        {"joiner", joiner_source()}});
}

calc::DefinitionEnv leader_program() {
    return load_corpus({{"leader", leader_source()}}).env;
}

calc::DefinitionEnv follower_program() {
    return load_corpus({{"follower", follower_source()}}).env;
}

calc::DefinitionEnv joiner_program() {
    // resolved against the follower program it continues into
    return load_corpus({{"joiner", joiner_source()}, {"follower", follower_source()}}).env;
}

std::string entry_for_role(RoleKind role) {
    switch (role) {
        case RoleKind::Leader: return "leader::Leader";
        case RoleKind::Follower: return "follower::Follower";
        case RoleKind::Joiner: return "joiner::Joiner";
    }
    throw ProtocolError("unknown role");
}

calc::Term entry_call(RoleKind role) { return call(entry_for_role(role), {}); }

// ── Names on the wire ───────────────────────────────────────────────────────

Name id_constant(std::uint32_t id) { return constant(std::to_string(id)); }

std::optional<std::uint32_t> id_of_name(const Name& n) {
    if (!n.is_constant() || n.display.empty()) return std::nullopt;
    for (char c : n.display)
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    return static_cast<std::uint32_t>(std::stoul(n.display));
}

// ── Join decision ───────────────────────────────────────────────────────────

bool join_decision(JoinDecision& latch, const VehicleState& self, std::uint32_t candidate,
                   const std::vector<VehicleState>& vehicles) {
    if (latch.decided) return false;

    std::optional<std::uint32_t> best;
    double best_dist = 0;
    for (const auto& v : vehicles) {
        if (v.role != RoleKind::Follower) continue;  // members with a predecessor
        double dist = std::abs(self.long_pos - v.long_pos);
        if (!best || dist < best_dist - 1e-12 ||
            (std::abs(dist - best_dist) <= 1e-12 && v.id < *best)) {
            best = v.id;
            best_dist = dist;
        }
    }
    if (!best || *best != candidate) return false;
    latch.decided = true;
    latch.chosen = candidate;
    return true;
}

// ── Interface dispatch ──────────────────────────────────────────────────────

namespace {

const VehicleState* find_vehicle(const std::vector<VehicleState>& vehicles, std::uint32_t id) {
    for (const auto& v : vehicles)
        if (v.id == id) return &v;
    return nullptr;
}

}  // namespace

InterfaceOutcome handle_interface(const InterfaceRequest& request, VehicleState& self,
                                  VehicleAccount& account, const dyn::WorldView& world,
                                  const std::vector<VehicleState>& vehicles) {
    (void)world;
    const std::string& label = request.label;

    if (label == "get_id") return InterfaceOutcome::completed({id_constant(self.id)});

    if (label == "get_ldr") {
        if (!self.signals.leader) return InterfaceOutcome::rejected("no leader set");
        return InterfaceOutcome::completed({id_constant(*self.signals.leader)});
    }

    if (label == "set_ldr") {
        if (request.args.size() != 1) return InterfaceOutcome::rejected("set_ldr needs one id");
        auto id = id_of_name(request.args[0]);
        if (!id || !find_vehicle(vehicles, *id))
            return InterfaceOutcome::rejected("set_ldr to unknown id");
        if (self.role == RoleKind::Follower && self.align_monitor.armed)
            return InterfaceOutcome::rejected("align in progress");
        self.signals.prev_leader = self.signals.leader;
        self.signals.leader = *id;
        return InterfaceOutcome::completed();
    }

    if (label == "drive") return InterfaceOutcome::completed();

    if (label == "keep_dist") {
        if (!self.signals.leader) return InterfaceOutcome::rejected("keep_dist with no leader");
        return InterfaceOutcome::completed();
    }

    if (label == "join_ok" || label == "check_join") {
        if (request.args.size() != 2)
            return InterfaceOutcome::rejected("join_ok needs a reply channel and an id");
        auto candidate = id_of_name(request.args[1]);
        if (!candidate) return InterfaceOutcome::rejected("join_ok with a bad id");
        bool verdict = join_decision(account.join, self, *candidate, vehicles);
        return InterfaceOutcome::completed_with_reply(
            request.args[0], {verdict ? true_constant() : false_constant()});
    }

    if (label == "align_start") {
        if (!self.signals.leader) return InterfaceOutcome::rejected("align_start with no leader");
        self.signals.align_start_pulse = true;
        return InterfaceOutcome::completed();
    }

    if (label == "align_done") {
        if (account.align_wait_aborted) {
            account.align_wait_aborted = false;
            return InterfaceOutcome::rejected("align timed out");
        }
        if (self.signals.align_done_fired) {
            self.signals.align_done_fired = false;
            return InterfaceOutcome::completed();
        }
        return InterfaceOutcome::pending();
    }

    if (label == "merge_start") {
        self.signals.merge_start_pulse = true;
        return InterfaceOutcome::completed();
    }

    if (label == "merge_done") {
        if (self.role == RoleKind::Joiner) {
            // the joiner waits for its own automaton to finish the merge
            if (self.signals.merge_done_fired) {
                self.signals.merge_done_fired = false;
                self.role = RoleKind::Follower;  // the one legal role change
                return InterfaceOutcome::completed();
            }
            return InterfaceOutcome::pending();
        }
        // a follower raising merge_done switches both axes to the new leader
        self.signals.merge_done_input_pulse = true;
        return InterfaceOutcome::completed();
    }

    return InterfaceOutcome::rejected("unknown interface action: " + label);
}

// ── Joiner re-broadcast ─────────────────────────────────────────────────────

namespace {

void flatten_components(const Term& t, std::vector<Term>& out) {
    if (const auto* p = as<ParallelTerm>(t)) {
        flatten_components(p->left, out);
        flatten_components(p->right, out);
        return;
    }
    if (const auto* r = as<RestrictTerm>(t)) {
        flatten_components(r->body, out);
        return;
    }
    out.push_back(t);
}

std::optional<Name> listener_channel(const Term& t) {
    std::vector<Term> comps;
    flatten_components(t, comps);
    for (const auto& c : comps) {
        const auto* rep = as<ReplicateTerm>(c);
        if (!rep) continue;
        if (const auto* call_node = as<CallTerm>(rep->body)) {
            if (call_node->args.size() == 1) return call_node->args[0];
        }
    }
    return std::nullopt;
}

}  // namespace

bool needs_rebroadcast(const Term& t) {
    std::vector<Term> comps;
    flatten_components(t, comps);
    bool has_listener = false;
    for (const auto& c : comps) {
        if (is_nil(c)) continue;
        if (as<ReplicateTerm>(c)) {
            has_listener = true;
            continue;
        }
        return false;  // a session or an armed broadcast is still in flight
    }
    return has_listener;
}

bool needs_rebroadcast(const SystemTerm& sys, std::size_t participant_index) {
    const Term& own = sys.participants[participant_index].term;
    if (!needs_rebroadcast(own)) return false;
    // a peer still holding the contact channel is about to open a session
    auto chan = listener_channel(own);
    if (chan) {
        for (std::size_t i = 0; i < sys.participants.size(); ++i) {
            if (i == participant_index) continue;
            if (occurs_free(sys.participants[i].term, *chan)) return false;
        }
    }
    return true;
}

std::optional<Term> rearm_broadcast(const Term& t) {
    auto chan = listener_channel(t);
    if (!chan) return std::nullopt;

    // insert the broadcast just inside the restriction binding the contact
    // channel, or at the top when the channel was already extruded
    std::function<std::optional<Term>(const Term&)> insert =
        [&](const Term& node) -> std::optional<Term> {
        if (const auto* r = as<RestrictTerm>(node)) {
            if (r->binder == *chan)
                return restrict_name(r->binder,
                                     parallel(prefix(BroadcastAction{*chan}, nil()), r->body));
            if (auto inner = insert(r->body)) return restrict_name(r->binder, *inner);
            return std::nullopt;
        }
        if (const auto* p = as<ParallelTerm>(node)) {
            if (auto l = insert(p->left)) return parallel(*l, p->right);
            if (auto rgt = insert(p->right)) return parallel(p->left, *rgt);
            return std::nullopt;
        }
        return std::nullopt;
    };
    if (auto inside = insert(t)) return inside;
    return parallel(prefix(BroadcastAction{*chan}, nil()), t);
}

}  // namespace platoon::proto
