#include "platoon/explorer.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_map>

#include "platoon/congruence.hpp"
#include "platoon/protocol.hpp"
#include "platoon/rng.hpp"
#include "platoon/runtime.hpp"

namespace platoon::explorer {

using namespace platoon::calc;
using dyn::RoleKind;

namespace {

std::size_t term_nodes(const Term& t) {
    if (as<NilTerm>(t)) return 1;
    if (const auto* p = as<PrefixTerm>(t)) return 1 + term_nodes(p->cont);
    if (const auto* p = as<ParallelTerm>(t)) return 1 + term_nodes(p->left) + term_nodes(p->right);
    if (const auto* p = as<ChoiceTerm>(t)) return 1 + term_nodes(p->left) + term_nodes(p->right);
    if (const auto* p = as<ReplicateTerm>(t)) return 1 + term_nodes(p->body);
    if (const auto* p = as<RestrictTerm>(t)) return 1 + term_nodes(p->body);
    if (const auto* p = as<MatchTerm>(t)) {
        std::size_t n = 1;
        for (const auto& b : p->branches) n += term_nodes(b.body);
        return n;
    }
    return 1;
}

std::uint64_t book_hash(const OwnerBook& b) {
    std::uint64_t h = b.owner;
    h = hash_combine(h, static_cast<std::uint64_t>(b.role));
    h = hash_combine(h, b.leader ? *b.leader + 1 : 0);
    h = hash_combine(h, b.prev_leader ? *b.prev_leader + 1 : 0);
    h = hash_combine(h, (b.join_decided ? 1 : 0) | (b.align_armed ? 2 : 0) |
                            (b.merge_armed ? 4 : 0));
    return h;
}

std::uint64_t state_hash(const AbstractState& s) {
    std::uint64_t h = system_hash(s.sys);
    for (const auto& b : s.books) h = hash_combine(h, book_hash(b));
    return h;
}

bool state_equal(const AbstractState& a, const AbstractState& b) {
    return a.books == b.books && system_equal(a.sys, b.sys);
}

// Eagerly applies every deterministic administrative step (matches, call
// unfoldings outside replications) and canonicalizes; this is the state
// representative the explorer stores.
AbstractState elaborate(SystemTerm sys, std::vector<OwnerBook> books, const Instance& inst) {
    AbstractState out;
    out.sys = canonical_system(rt::elaborate_entries(sys, inst.env));
    out.books = std::move(books);
    std::sort(out.books.begin(), out.books.end(),
              [](const OwnerBook& a, const OwnerBook& b) { return a.owner < b.owner; });
    out.hash = state_hash(out);
    return out;
}

OwnerBook& book_of(std::vector<OwnerBook>& books, std::uint32_t owner) {
    for (auto& b : books)
        if (b.owner == owner) return b;
    throw CalcError("no bookkeeping for owner " + std::to_string(owner));
}

const OwnerBook& book_of(const std::vector<OwnerBook>& books, std::uint32_t owner) {
    for (const auto& b : books)
        if (b.owner == owner) return b;
    throw CalcError("no bookkeeping for owner " + std::to_string(owner));
}

std::optional<std::uint32_t> parse_id(const Name& n) { return proto::id_of_name(n); }

}  // namespace

AbstractState initial_state(const Instance& inst) {
    SystemTerm sys;
    std::vector<OwnerBook> books;
    std::optional<std::uint32_t> previous;
    for (const auto& [owner, role] : inst.owners) {
        sys.participants.push_back({owner, proto::entry_call(role)});
        OwnerBook b;
        b.owner = owner;
        b.role = role;
        if (role == RoleKind::Follower) {
            b.leader = previous;
            b.prev_leader = previous;
        }
        if (role != RoleKind::Joiner) previous = owner;
        books.push_back(b);
    }
    return elaborate(std::move(sys), std::move(books), inst);
}

bool owner_settled(const Term& t) {
    // components reachable through restrictions: settled owners hold only
    // inert terms, dormant replications, and the idle drive/keep_dist loops
    std::vector<Term> comps;
    std::vector<Term> stack{t};
    while (!stack.empty()) {
        Term cur = stack.back();
        stack.pop_back();
        if (const auto* p = as<ParallelTerm>(cur)) {
            stack.push_back(p->left);
            stack.push_back(p->right);
            continue;
        }
        if (const auto* r = as<RestrictTerm>(cur)) {
            stack.push_back(r->body);
            continue;
        }
        comps.push_back(cur);
    }
    for (const auto& c : comps) {
        if (is_nil(c) || as<ReplicateTerm>(c)) continue;
        if (const auto* p = as<PrefixTerm>(c)) {
            const auto* u = std::get_if<UnobservableAction>(&p->action);
            if (u && (u->label == "drive" || u->label == "keep_dist") && as<CallTerm>(p->cont))
                continue;
        }
        return false;
    }
    return true;
}

std::vector<std::pair<std::string, AbstractState>> successors(const AbstractState& s,
                                                              const Instance& inst,
                                                              const Bounds& bounds) {
    std::vector<std::pair<std::string, AbstractState>> out;

    auto push = [&](std::string label, SystemTerm sys, std::vector<OwnerBook> books) {
        for (const auto& p : sys.participants)
            if (term_nodes(p.term) > bounds.max_term_nodes)
                throw CalcError("term ceiling exceeded");  // caught by explore
        AbstractState next = elaborate(std::move(sys), std::move(books), inst);
        // disambiguate duplicate labels deterministically
        std::size_t dup = 0;
        for (const auto& [l, st] : out) {
            (void)st;
            if (l.rfind(label + "#", 0) == 0 || l == label) ++dup;
        }
        if (dup) label += "#" + std::to_string(dup);
        out.emplace_back(std::move(label), std::move(next));
    };

    SketchOptions opts;
    opts.expand_replicated_calls = true;
    auto sketches = sketch_reactions(s.sys, inst.env, all_in_range(), opts);

    for (const auto& sk : sketches) {
        if (std::holds_alternative<UnfoldStep>(sk.v) || std::holds_alternative<MatchStep>(sk.v))
            continue;  // handled by elaboration (replicated calls are expanded)

        if (const auto* c = std::get_if<CommunicationStep>(&sk.v)) {
            ReactionStep step = materialize(s.sys, inst.env, sk);
            std::ostringstream label;
            label << "comm:" << c->sender_owner << ">" << c->receiver_owner << ":"
                  << c->chan.display << "/" << c->payload.size();
            push(label.str(), apply_reaction(s.sys, step), s.books);
            continue;
        }
        if (const auto* b = std::get_if<BroadcastStep>(&sk.v)) {
            ReactionStep step = materialize(s.sys, inst.env, sk);
            std::ostringstream label;
            label << "bcast:" << b->sender_owner << ":" << b->receiver_owners.size();
            push(label.str(), apply_reaction(s.sys, step), s.books);
            continue;
        }

        const auto& u = std::get<UnobservableStep>(sk.v);
        const OwnerBook& book = book_of(s.books, u.owner);
        auto complete = [&](std::string label, const std::vector<Name>& values,
                            std::vector<OwnerBook> books,
                            const std::optional<std::vector<Name>>& reply = std::nullopt) {
            ReactionStep step = materialize_unobservable(s.sys, inst.env, sk, values);
            SystemTerm post = apply_reaction(s.sys, step);
            if (reply) {
                const auto& final_args = std::get<UnobservableStep>(step.v).args;
                if (auto delivery = deliver_on_channel(post, u.owner, final_args[0], *reply))
                    post = apply_reaction(post, *delivery);
            }
            push(std::move(label), std::move(post), std::move(books));
        };
        auto reject = [&](std::string label) {
            ReactionStep step = materialize_unobservable_rejected(s.sys, inst.env, sk);
            push(std::move(label), apply_reaction(s.sys, step), s.books);
        };
        std::string base = "tau:" + std::to_string(u.owner) + ":" + u.label;

        if (u.label == "drive" || u.label == "keep_dist") {
            complete(base, {}, s.books);
        } else if (u.label == "get_id") {
            complete(base, {proto::id_constant(u.owner)}, s.books);
        } else if (u.label == "get_ldr") {
            if (book.leader)
                complete(base, {proto::id_constant(*book.leader)}, s.books);
            else
                reject(base + ":rejected");
        } else if (u.label == "set_ldr") {
            auto id = u.args.size() == 1 ? parse_id(u.args[0]) : std::nullopt;
            if (!id) {
                reject(base + ":rejected");
            } else if (book.role == RoleKind::Follower && book.align_armed) {
                // a follower already creating a gap turns later joiners away
                reject(base + ":rejected");
            } else {
                auto books = s.books;
                OwnerBook& b = book_of(books, u.owner);
                b.prev_leader = b.leader;
                b.leader = *id;
                complete(base + "=" + std::to_string(*id), {}, std::move(books));
            }
        } else if (u.label == "align_start") {
            if (!book.leader) {
                reject(base + ":rejected");
            } else {
                auto books = s.books;
                book_of(books, u.owner).align_armed = true;
                complete(base, {}, std::move(books));
            }
        } else if (u.label == "align_done") {
            if (book.align_armed) {
                auto books = s.books;
                book_of(books, u.owner).align_armed = false;
                complete(base, {}, std::move(books));
            }
            // not armed: the wait cannot complete under any timing
        } else if (u.label == "merge_start") {
            auto books = s.books;
            book_of(books, u.owner).merge_armed = true;
            complete(base, {}, std::move(books));
        } else if (u.label == "merge_done") {
            if (book.role == RoleKind::Joiner) {
                if (book.merge_armed) {
                    auto books = s.books;
                    OwnerBook& b = book_of(books, u.owner);
                    b.merge_armed = false;
                    b.role = RoleKind::Follower;
                    complete(base, {}, std::move(books));
                }
            } else {
                complete(base, {}, s.books);
            }
        } else if (u.label == "join_ok" || u.label == "check_join") {
            if (!book.join_decided) {
                auto books = s.books;
                book_of(books, u.owner).join_decided = true;
                complete(base + ":True", {}, std::move(books),
                         std::vector<Name>{true_constant()});
            }
            complete(base + ":False", {}, s.books, std::vector<Name>{false_constant()});
        } else {
            complete(base, std::vector<Name>(u.binders.size(), constant("?")), s.books);
        }
    }

    // joiner re-broadcast while nothing is in flight
    for (std::size_t i = 0; i < s.sys.participants.size(); ++i) {
        const auto& part = s.sys.participants[i];
        const OwnerBook& book = book_of(s.books, part.owner);
        if (book.role != RoleKind::Joiner) continue;
        if (!proto::needs_rebroadcast(s.sys, i)) continue;
        if (auto rearmed = proto::rearm_broadcast(part.term)) {
            SystemTerm sys = s.sys;
            sys.participants[i].term = *rearmed;
            auto books = s.books;
            book_of(books, part.owner).join_decided = false;  // fresh attempt
            push("rearm:" + std::to_string(part.owner), std::move(sys), std::move(books));
        }
    }

    return out;
}

bool is_deadlock(const AbstractState& s, const Instance& inst, const Bounds& bounds) {
    auto succs = successors(s, inst, bounds);
    for (const auto& [label, next] : succs) {
        (void)label;
        if (!state_equal(next, s)) return false;
    }
    for (std::size_t i = 0; i < s.sys.participants.size(); ++i)
        if (!owner_settled(s.sys.participants[i].term)) return true;
    return false;
}

GoalPredicate goal_all_joined(const Instance& inst) {
    std::vector<std::uint32_t> joiners;
    for (const auto& [owner, role] : inst.owners)
        if (role == RoleKind::Joiner) joiners.push_back(owner);
    return [joiners](const AbstractState& s) {
        for (auto id : joiners) {
            bool follower = false;
            for (const auto& b : s.books)
                if (b.owner == id && b.role == RoleKind::Follower) follower = true;
            if (!follower) return false;
        }
        return true;
    };
}

// ── explore ─────────────────────────────────────────────────────────────────

ExplorationResult explore(const Instance& inst, const GoalPredicate& goal, const Bounds& bounds) {
    ExplorationResult result;

    struct Node {
        AbstractState state;
        std::size_t parent = SIZE_MAX;
        std::string via;
        std::size_t depth = 0;
        bool goal = false;
        std::vector<std::size_t> succ_indexes;
        bool has_self_loop = false;
    };

    std::vector<Node> nodes;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> index;

    auto find_or_add = [&](AbstractState st, std::size_t parent, const std::string& via,
                           std::size_t depth) -> std::pair<std::size_t, bool> {
        auto& bucket = index[st.hash];
        for (auto i : bucket)
            if (state_equal(nodes[i].state, st)) return {i, false};
        std::size_t id = nodes.size();
        bucket.push_back(id);
        nodes.push_back({std::move(st), parent, via, depth, false, {}, false});
        nodes[id].goal = goal(nodes[id].state);
        return {id, true};
    };

    auto [root, added] = find_or_add(initial_state(inst), SIZE_MAX, "", 0);
    (void)added;
    std::deque<std::size_t> frontier{root};

    while (!frontier.empty()) {
        std::size_t id = frontier.front();
        frontier.pop_front();
        const std::size_t depth = nodes[id].depth;
        if (depth >= bounds.max_depth) {
            result.truncated = true;
            continue;
        }
        std::vector<std::pair<std::string, AbstractState>> succs;
        try {
            succs = successors(nodes[id].state, inst, bounds);
        } catch (const CalcError&) {
            result.truncated = true;  // term ceiling: report a lower bound
            continue;
        }
        for (auto& [label, st] : succs) {
            if (state_equal(st, nodes[id].state)) {
                nodes[id].has_self_loop = true;
                nodes[id].succ_indexes.push_back(id);
                continue;
            }
            if (nodes.size() >= bounds.max_states) {
                result.truncated = true;
                break;
            }
            auto [sid, fresh] = find_or_add(std::move(st), id, label, depth + 1);
            nodes[id].succ_indexes.push_back(sid);
            if (fresh) frontier.push_back(sid);
        }
        if (result.truncated && nodes.size() >= bounds.max_states) break;
    }

    result.states_visited = nodes.size();

    // verdicts
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].goal) result.goal_reached = true;
        bool all_self = true;
        for (auto sidx : nodes[i].succ_indexes) all_self &= (sidx == i);
        if (all_self) {
            bool settled = true;
            for (const auto& p : nodes[i].state.sys.participants)
                settled &= owner_settled(p.term);
            if (!settled) {
                DeadlockReport report;
                report.state = nodes[i].state;
                std::size_t cur = i;
                while (nodes[cur].parent != SIZE_MAX) {
                    report.trace.push_back(nodes[cur].via);
                    cur = nodes[cur].parent;
                }
                std::reverse(report.trace.begin(), report.trace.end());
                result.deadlocks.push_back(std::move(report));
            }
        }
    }

    // bounded universal-goal report: no non-goal state may settle, and no
    // proper cycle may run entirely through non-goal states
    if (!result.truncated) {
        bool universal = result.deadlocks.empty();
        for (std::size_t i = 0; i < nodes.size() && universal; ++i) {
            if (nodes[i].goal) continue;
            bool all_self = true;
            for (auto sidx : nodes[i].succ_indexes) all_self &= (sidx == i);
            if (all_self) universal = false;  // settles before the goal
        }
        if (universal) {
            // cycle detection on the non-goal subgraph, self-loops ignored
            std::vector<int> color(nodes.size(), 0);
            std::function<bool(std::size_t)> has_cycle = [&](std::size_t v) -> bool {
                color[v] = 1;
                for (auto w : nodes[v].succ_indexes) {
                    if (w == v || nodes[w].goal) continue;
                    if (color[w] == 1) return true;
                    if (color[w] == 0 && has_cycle(w)) return true;
                }
                color[v] = 2;
                return false;
            };
            for (std::size_t i = 0; i < nodes.size() && universal; ++i)
                if (!nodes[i].goal && color[i] == 0 && has_cycle(i)) universal = false;
        }
        result.goal_universal = universal && result.goal_reached;
    }

    return result;
}

std::vector<AbstractState> replay(const Instance& inst, const std::vector<std::string>& trace,
                                  const Bounds& bounds) {
    std::vector<AbstractState> states{initial_state(inst)};
    for (const auto& label : trace) {
        auto succs = successors(states.back(), inst, bounds);
        bool found = false;
        for (auto& [l, st] : succs) {
            if (l == label) {
                states.push_back(std::move(st));
                found = true;
                break;
            }
        }
        if (!found) throw CorruptTraceError("trace step not enabled: " + label);
    }
    return states;
}

}  // namespace platoon::explorer
