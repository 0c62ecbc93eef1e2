#include "platoon/runtime.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "platoon/rng.hpp"

namespace platoon::rt {

using namespace platoon::calc;

namespace {

std::string poll_key(const UnobservableStep& u) {
    std::ostringstream os;
    os << u.owner << "|" << u.label;
    for (const auto& a : u.args) os << "|" << (a.is_constant() ? a.display : std::to_string(a.id));
    return os.str();
}

}  // namespace

SystemTerm elaborate_entries(const SystemTerm& sys, const DefinitionEnv& env) {
    SystemTerm cur = sys;
    for (int guard = 0; guard < 10000; ++guard) {
        const StepSketch* next = nullptr;
        auto sketches = sketch_reactions(cur, env, all_in_range());
        for (const auto& sk : sketches) {
            if (std::holds_alternative<MatchStep>(sk.v) ||
                (std::holds_alternative<UnfoldStep>(sk.v) && !sk.replicate_site)) {
                next = &sk;
                break;
            }
        }
        if (!next) return cur;
        cur = apply_reaction(cur, materialize(cur, env, *next));
    }
    throw CalcError("entry elaboration did not terminate (unguarded recursion?)");
}

std::pair<SystemTerm, TickReport> tick(const SystemTerm& sys, const DefinitionEnv& env,
                                       const HandlerMap& handlers,
                                       const RangeRelation& in_range, std::uint64_t seed,
                                       std::uint64_t tick_index, RunState& state,
                                       const TickOptions& opts) {
    SystemTerm cur = sys;
    TickReport report;
    report.tick_index = tick_index;

    SplitMix64 rng(mix_seed(seed, tick_index));
    std::unordered_map<std::uint32_t, std::set<std::string>> unfolded;
    std::unordered_map<std::uint32_t, std::size_t> counted;
    std::set<std::string> polled;

    // definition unfoldings implied by a step: plain unfolds, plus any
    // replicated-call expansions the step consumes through
    auto implied_unfolds = [](const StepSketch& sk) {
        std::vector<std::pair<std::uint32_t, const std::string*>> out;
        if (const auto* u = std::get_if<UnfoldStep>(&sk.v)) out.emplace_back(u->owner, &u->def_name);
        if (sk.primary_expansion)
            out.emplace_back(sk.initiating_owner(), &sk.primary_expansion->def_name);
        if (sk.secondary_expansion) {
            const auto& c = std::get<CommunicationStep>(sk.v);
            out.emplace_back(c.receiver_owner, &sk.secondary_expansion->def_name);
        }
        if (const auto* b = std::get_if<BroadcastStep>(&sk.v)) {
            for (std::size_t i = 0; i < sk.receiver_expansions.size(); ++i)
                if (sk.receiver_expansions[i])
                    out.emplace_back(b->receiver_owners[i],
                                     &sk.receiver_expansions[i]->def_name);
        }
        return out;
    };

    SketchOptions sketch_opts;
    sketch_opts.expand_replicated_calls = true;

    for (;;) {
        std::vector<StepSketch> candidates;
        std::vector<ReactionStep> deliveries;
        bool budget_blocked = false;

        for (auto& sk : sketch_reactions(cur, env, in_range, sketch_opts)) {
            bool sampled_out = false;
            for (const auto& [owner, def] : implied_unfolds(sk)) {
                auto it = unfolded.find(owner);
                if (it != unfolded.end() && it->second.count(*def)) sampled_out = true;
            }
            if (sampled_out) continue;
            if (std::holds_alternative<UnfoldStep>(sk.v)) {
                candidates.push_back(std::move(sk));
                continue;  // unfoldings are administrative: not budget-counted
            }
            if (const auto* uo = std::get_if<UnobservableStep>(&sk.v)) {
                if (polled.count(poll_key(*uo))) continue;
            }
            if (opts.buffered_broadcast) {
                if (const auto* b = std::get_if<BroadcastStep>(&sk.v))
                    if (b->receiver_owners.empty()) continue;
            }
            if (counted[sk.initiating_owner()] >= opts.per_owner_budget) {
                budget_blocked = true;
                continue;
            }
            candidates.push_back(std::move(sk));
        }

        // interface channel replies become self-deliveries
        for (std::size_t i = 0; i < state.pending_replies.size(); ++i) {
            const auto& pr = state.pending_replies[i];
            if (counted[pr.owner] >= opts.per_owner_budget) {
                budget_blocked = true;
                continue;
            }
            if (auto step = deliver_on_channel(cur, pr.owner, pr.chan, pr.payload))
                deliveries.push_back(std::move(*step));
        }

        std::size_t total = candidates.size() + deliveries.size();
        if (total == 0) {
            if (budget_blocked) {
                // every remaining step is blocked purely by the budget
                std::uint32_t worst = 0;
                std::size_t worst_count = 0;
                for (const auto& [owner, n] : counted)
                    if (n >= worst_count) {
                        worst = owner;
                        worst_count = n;
                    }
                throw BudgetExceededError(worst);
            }
            report.quiescent = true;
            break;
        }

        std::size_t pick_index = rng.below(total);

        if (pick_index >= candidates.size()) {
            // interface channel delivery
            ReactionStep step = std::move(deliveries[pick_index - candidates.size()]);
            cur = apply_reaction(cur, step);
            const auto& c = std::get<CommunicationStep>(step.v);
            auto& q = state.pending_replies;
            for (std::size_t i = 0; i < q.size(); ++i) {
                if (q[i].owner == c.receiver_owner && q[i].chan == c.chan &&
                    q[i].payload == c.payload) {
                    q.erase(q.begin() + static_cast<std::ptrdiff_t>(i));
                    break;
                }
            }
            ++counted[step.initiating_owner()];
            report.steps_taken.push_back(std::move(step));
            continue;
        }

        const StepSketch& pick = candidates[pick_index];
        auto charge_unfolds = [&] {
            for (const auto& [owner, def] : implied_unfolds(pick)) unfolded[owner].insert(*def);
        };

        if (std::holds_alternative<UnfoldStep>(pick.v)) {
            ReactionStep step = materialize(cur, env, pick);
            cur = apply_reaction(cur, step);
            charge_unfolds();
            report.steps_taken.push_back(std::move(step));
            continue;
        }
        if (const auto* uo = std::get_if<UnobservableStep>(&pick.v)) {
            auto hit = handlers.find(uo->owner);
            if (hit == handlers.end()) throw HandlerMissingError(uo->owner);
            InterfaceRequest request{uo->owner, uo->label, uo->args, uo->binders};
            InterfaceOutcome outcome = hit->second(request);
            switch (outcome.kind) {
                case InterfaceOutcome::Kind::Completed: {
                    ReactionStep done = materialize_unobservable(cur, env, pick, outcome.bound_values);
                    cur = apply_reaction(cur, done);
                    charge_unfolds();
                    if (outcome.channel_reply) {
                        // the request may have extruded (renamed) the names it
                        // passed out; route the reply through the renames
                        const auto& final_args = std::get<UnobservableStep>(done.v).args;
                        Name chan = outcome.channel_reply->first;
                        std::vector<Name> payload = outcome.channel_reply->second;
                        for (std::size_t i = 0; i < uo->args.size(); ++i) {
                            if (chan == uo->args[i]) chan = final_args[i];
                            for (auto& p : payload)
                                if (p == uo->args[i]) p = final_args[i];
                        }
                        state.pending_replies.push_back({uo->owner, chan, std::move(payload)});
                    }
                    report.steps_taken.push_back(std::move(done));
                    ++counted[uo->owner];
                    break;
                }
                case InterfaceOutcome::Kind::Pending:
                    polled.insert(poll_key(*uo));
                    report.pending_requests.push_back(std::move(request));
                    break;
                case InterfaceOutcome::Kind::Rejected: {
                    ReactionStep dead = materialize_unobservable_rejected(cur, env, pick);
                    cur = apply_reaction(cur, dead);
                    charge_unfolds();
                    report.rejected_requests.emplace_back(std::move(request),
                                                          outcome.reject_reason);
                    report.steps_taken.push_back(std::move(dead));
                    ++counted[uo->owner];
                    break;
                }
            }
            continue;
        }

        // communication, broadcast, or match
        ReactionStep step = materialize(cur, env, pick);
        cur = apply_reaction(cur, step);
        charge_unfolds();
        ++counted[step.initiating_owner()];
        report.steps_taken.push_back(std::move(step));
    }

    return {std::move(cur), std::move(report)};
}

// ── Channel topology ────────────────────────────────────────────────────────

namespace {

struct Usage {
    bool snd = false;
    bool rcv = false;

    void merge(const Usage& o) {
        snd |= o.snd;
        rcv |= o.rcv;
    }
    bool any() const { return snd || rcv; }
};

using UsageMap = std::unordered_map<Name, Usage, NameHash>;

struct DefUsage {
    std::vector<Usage> params;
    UsageMap free;
};

using DefUsageTable = std::unordered_map<std::string, DefUsage>;

void term_usage(const Term& t, const DefinitionEnv& env, const DefUsageTable& table,
                NameSet& bound, UsageMap& out);

void use(const Name& n, bool snd, NameSet& bound, UsageMap& out) {
    if (n.is_constant() || bound.count(n)) return;
    Usage& u = out[n];
    u.snd |= snd;
    u.rcv |= !snd;
}

void term_usage(const Term& t, const DefinitionEnv& env, const DefUsageTable& table,
                NameSet& bound, UsageMap& out) {
    if (as<NilTerm>(t)) return;
    if (const auto* p = as<PrefixTerm>(t)) {
        std::vector<Name> binders;
        if (const auto* s = std::get_if<SendAction>(&p->action)) {
            use(s->chan, true, bound, out);
        } else if (const auto* r = std::get_if<ReceiveAction>(&p->action)) {
            use(r->chan, false, bound, out);
            binders = r->binders;
        } else if (const auto* brr = std::get_if<BroadcastReceiveAction>(&p->action)) {
            binders.push_back(brr->binder);
        } else if (const auto* u = std::get_if<UnobservableAction>(&p->action)) {
            binders = u->binders;  // args are carried, not used
        }
        std::vector<Name> added;
        for (const auto& b : binders)
            if (bound.insert(b).second) added.push_back(b);
        term_usage(p->cont, env, table, bound, out);
        for (const auto& b : added) bound.erase(b);
        return;
    }
    if (const auto* p = as<ParallelTerm>(t)) {
        term_usage(p->left, env, table, bound, out);
        term_usage(p->right, env, table, bound, out);
        return;
    }
    if (const auto* p = as<ChoiceTerm>(t)) {
        term_usage(p->left, env, table, bound, out);
        term_usage(p->right, env, table, bound, out);
        return;
    }
    if (const auto* p = as<ReplicateTerm>(t)) {
        term_usage(p->body, env, table, bound, out);
        return;
    }
    if (const auto* p = as<RestrictTerm>(t)) {
        bool added = bound.insert(p->binder).second;
        term_usage(p->body, env, table, bound, out);
        if (added) bound.erase(p->binder);
        return;
    }
    if (const auto* p = as<MatchTerm>(t)) {
        for (const auto& b : p->branches) term_usage(b.body, env, table, bound, out);
        return;
    }
    const auto& c = std::get<CallTerm>(t->v);
    auto it = table.find(c.def_name);
    if (it == table.end()) return;  // unresolved or not yet computed
    const DefUsage& du = it->second;
    for (std::size_t i = 0; i < c.args.size() && i < du.params.size(); ++i) {
        if (c.args[i].is_constant() || bound.count(c.args[i])) continue;
        if (du.params[i].any()) out[c.args[i]].merge(du.params[i]);
    }
    for (const auto& [n, u] : du.free)
        if (!bound.count(n)) out[n].merge(u);
}

DefUsageTable def_usages(const DefinitionEnv& env) {
    DefUsageTable table;
    for (const auto& name : env.order())
        table[name] = {std::vector<Usage>(env.at(name).params.size()), {}};

    // fixpoint over recursive definitions; the lattice is tiny
    for (int round = 0; round < 8; ++round) {
        bool changed = false;
        for (const auto& name : env.order()) {
            const Definition& def = env.at(name);
            NameSet bound;
            UsageMap usage;
            term_usage(def.body, env, table, bound, usage);
            DefUsage next;
            next.params.resize(def.params.size());
            for (std::size_t i = 0; i < def.params.size(); ++i) {
                auto it = usage.find(def.params[i]);
                if (it != usage.end()) next.params[i] = it->second;
            }
            for (const auto& [n, u] : usage) {
                bool is_param = false;
                for (const auto& p : def.params) is_param |= (p == n);
                if (!is_param) next.free[n] = u;
            }
            DefUsage& curdu = table[name];
            for (std::size_t i = 0; i < next.params.size(); ++i) {
                if (next.params[i].snd != curdu.params[i].snd ||
                    next.params[i].rcv != curdu.params[i].rcv)
                    changed = true;
            }
            if (next.free.size() != curdu.free.size()) changed = true;
            curdu = std::move(next);
        }
        if (!changed) break;
    }
    return table;
}

}  // namespace

Topology channel_topology(const SystemTerm& sys, const DefinitionEnv& env) {
    DefUsageTable table = def_usages(env);

    std::vector<std::pair<std::uint32_t, UsageMap>> per_owner;
    for (const auto& p : sys.participants) {
        NameSet bound;
        UsageMap usage;
        term_usage(p.term, env, table, bound, usage);
        per_owner.emplace_back(p.owner, std::move(usage));
    }

    NameSet shared(sys.shared_restrictions.begin(), sys.shared_restrictions.end());

    Topology topo;
    for (std::size_t i = 0; i < per_owner.size(); ++i) {
        for (std::size_t j = i + 1; j < per_owner.size(); ++j) {
            std::vector<Name> chans;
            for (const auto& [n, ui] : per_owner[i].second) {
                if (!shared.count(n)) continue;
                auto it = per_owner[j].second.find(n);
                if (it == per_owner[j].second.end()) continue;
                const Usage& uj = it->second;
                if ((ui.snd && uj.rcv) || (ui.rcv && uj.snd)) chans.push_back(n);
            }
            if (chans.empty()) continue;
            std::sort(chans.begin(), chans.end(), NameLess{});
            std::uint32_t a = per_owner[i].first, b = per_owner[j].first;
            if (a > b) std::swap(a, b);
            topo.edges[{a, b}] = std::move(chans);
        }
    }
    return topo;
}

}  // namespace platoon::rt
