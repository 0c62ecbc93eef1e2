#include "platoon/system.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

#include "platoon/rng.hpp"

namespace platoon::calc {

RangeRelation all_in_range() {
    return [](std::uint32_t, std::uint32_t) { return true; };
}

// ── Hash / equality ─────────────────────────────────────────────────────────

bool system_equal(const SystemTerm& a, const SystemTerm& b) {
    if (a.participants.size() != b.participants.size()) return false;
    if (a.shared_restrictions != b.shared_restrictions) return false;
    if (a.fresh_counter != b.fresh_counter) return false;
    for (std::size_t i = 0; i < a.participants.size(); ++i) {
        if (a.participants[i].owner != b.participants[i].owner) return false;
        if (!term_equal(a.participants[i].term, b.participants[i].term)) return false;
    }
    return true;
}

std::uint64_t system_hash(const SystemTerm& s) {
    std::uint64_t h = 0x9ae16a3b2f90404fULL;
    for (const auto& p : s.participants) {
        h = hash_combine(h, p.owner);
        h = hash_combine(h, term_hash(p.term));
    }
    for (const auto& n : s.shared_restrictions) h = hash_combine(h, n.id);
    h = hash_combine(h, s.fresh_counter);
    return h;
}

// ── Exposure ────────────────────────────────────────────────────────────────
// Walks a participant term and lists every reducible position: head prefixes
// (reachable through |, !, new, and prefix-guarded choice operands), matches,
// and calls. Choice operands that are not prefix-guarded cannot react.

namespace {

enum class ExposedKind { Prefix, Match, Call };

struct ExposedItem {
    ExposedKind kind = ExposedKind::Prefix;
    std::size_t part = 0;
    std::uint32_t owner = 0;
    TermPath path;  // virtual (call_path ++ inner_path) for expanded items
    Term node;
    // For sends/receives: path of the innermost enclosing restriction binding
    // the channel, if any. Prefixes on such channels only pair under the very
    // same restriction instance.
    std::optional<TermPath> chan_restrict;
    std::optional<std::pair<std::uint32_t, std::string>> replicate_site;
    std::optional<ExpansionPoint> expansion;
};

struct WalkCtx {
    std::vector<std::pair<Name, TermPath>> restricts;
    std::optional<std::pair<std::uint32_t, std::string>> replicate_site;
    std::uint32_t owner = 0;
    std::size_t part = 0;
    bool with_site_keys = true;
    // replicated-call expansion
    const DefinitionEnv* env = nullptr;
    bool expand_calls = false;
    bool under_replicate = false;
    std::optional<TermPath> expansion_base;  // call_path while inside an expansion
    std::string expansion_def;
};

std::optional<TermPath> innermost_restrict(const WalkCtx& ctx, const Name& chan) {
    for (auto it = ctx.restricts.rbegin(); it != ctx.restricts.rend(); ++it)
        if (it->first == chan) return it->second;
    return std::nullopt;
}

void walk_exposed(const Term& t, TermPath& path, WalkCtx& ctx, std::vector<ExposedItem>& out,
                  bool under_choice) {
    if (as<NilTerm>(t)) return;
    if (const auto* p = as<PrefixTerm>(t)) {
        ExposedItem item;
        item.kind = ExposedKind::Prefix;
        item.part = ctx.part;
        item.owner = ctx.owner;
        item.path = path;
        item.node = t;
        item.replicate_site = ctx.replicate_site;
        if (ctx.expansion_base) {
            ExpansionPoint exp;
            exp.call_path = *ctx.expansion_base;
            exp.inner_path.assign(path.begin() + static_cast<std::ptrdiff_t>(
                                                     ctx.expansion_base->size()),
                                  path.end());
            exp.def_name = ctx.expansion_def;
            item.expansion = std::move(exp);
        }
        if (const auto* s = std::get_if<SendAction>(&p->action))
            item.chan_restrict = innermost_restrict(ctx, s->chan);
        else if (const auto* r = std::get_if<ReceiveAction>(&p->action))
            item.chan_restrict = innermost_restrict(ctx, r->chan);
        out.push_back(std::move(item));
        return;
    }
    if (const auto* p = as<ParallelTerm>(t)) {
        if (under_choice) return;  // non-prefix-guarded choice operand
        path.push_back(0);
        walk_exposed(p->left, path, ctx, out, false);
        path.back() = 1;
        walk_exposed(p->right, path, ctx, out, false);
        path.pop_back();
        return;
    }
    if (const auto* p = as<ChoiceTerm>(t)) {
        path.push_back(0);
        walk_exposed(p->left, path, ctx, out, true);
        path.back() = 1;
        walk_exposed(p->right, path, ctx, out, true);
        path.pop_back();
        return;
    }
    if (const auto* p = as<ReplicateTerm>(t)) {
        if (under_choice) return;
        auto saved = ctx.replicate_site;
        bool saved_rep = ctx.under_replicate;
        ctx.replicate_site = {ctx.owner,
                              ctx.with_site_keys ? canonical_key(alpha_normalize(p->body))
                                                 : std::string{}};
        ctx.under_replicate = true;
        path.push_back(0);
        walk_exposed(p->body, path, ctx, out, false);
        path.pop_back();
        ctx.under_replicate = saved_rep;
        ctx.replicate_site = saved;
        return;
    }
    if (const auto* p = as<RestrictTerm>(t)) {
        if (under_choice) return;
        ctx.restricts.emplace_back(p->binder, path);
        path.push_back(0);
        walk_exposed(p->body, path, ctx, out, false);
        path.pop_back();
        ctx.restricts.pop_back();
        return;
    }
    if (as<MatchTerm>(t)) {
        if (under_choice || ctx.expansion_base) return;
        out.push_back({ExposedKind::Match, ctx.part, ctx.owner, path, t, std::nullopt,
                       ctx.replicate_site, std::nullopt});
        return;
    }
    // Call
    if (under_choice) return;
    if (ctx.expand_calls && ctx.under_replicate && ctx.env && !ctx.expansion_base) {
        // expose the head prefixes of one virtual copy; consuming one
        // materializes the copy and unfolds the call in a single step
        const auto& c = std::get<CallTerm>(t->v);
        const Definition* def = ctx.env->find(c.def_name);
        if (!def) throw UnresolvedCallError(c.def_name);
        FreshNames scratch(kCanonicalBase - (1ULL << 24));
        Term body = instantiate(*def, c.args, scratch);
        ctx.expansion_base = path;
        ctx.expansion_def = c.def_name;
        walk_exposed(body, path, ctx, out, false);
        ctx.expansion_base.reset();
        ctx.expansion_def.clear();
        return;
    }
    if (ctx.expansion_base) return;  // nested calls are reached after unfolding
    out.push_back({ExposedKind::Call, ctx.part, ctx.owner, path, t, std::nullopt,
                   ctx.replicate_site, std::nullopt});
}

std::vector<ExposedItem> expose(const SystemTerm& sys, bool with_site_keys = true,
                                const DefinitionEnv* env = nullptr, bool expand_calls = false) {
    std::vector<ExposedItem> out;
    for (std::size_t i = 0; i < sys.participants.size(); ++i) {
        WalkCtx ctx;
        ctx.part = i;
        ctx.owner = sys.participants[i].owner;
        ctx.with_site_keys = with_site_keys;
        ctx.env = env;
        ctx.expand_calls = expand_calls;
        TermPath path;
        walk_exposed(sys.participants[i].term, path, ctx, out, false);
    }
    return out;
}

// ── Path rewriting ──────────────────────────────────────────────────────────
// Replaces the node at `path` with leaf(node), handling context on the way
// back up: parallels rebuild (nil-pruned), a fired choice operand replaces the
// whole choice, replications materialize the rewritten copy next to the
// original, and restrictions either stay or extrude. A restriction extrudes
// when its binder is about to escape (it appears in `escaping`): the binder is
// renamed fresh, recorded, and lifted out.

struct RewriteCtx {
    FreshNames& fresh;
    NameSet escaping;
    std::vector<Name> extruded;
    NameMap renames;
};

Term rewrite_at(const Term& t, const TermPath& path, std::size_t depth,
                const std::function<Term(const Term&)>& leaf, RewriteCtx& ctx) {
    if (depth == path.size()) return leaf(t);
    std::uint32_t idx = path[depth];
    if (const auto* p = as<ParallelTerm>(t)) {
        Term sub = rewrite_at(idx == 0 ? p->left : p->right, path, depth + 1, leaf, ctx);
        return idx == 0 ? parallel_pruned(std::move(sub), p->right)
                        : parallel_pruned(p->left, std::move(sub));
    }
    if (const auto* p = as<ChoiceTerm>(t)) {
        // Committing a guarded operand discards the alternatives.
        return rewrite_at(idx == 0 ? p->left : p->right, path, depth + 1, leaf, ctx);
    }
    if (const auto* p = as<ReplicateTerm>(t)) {
        Term copy = rewrite_at(p->body, path, depth + 1, leaf, ctx);
        return parallel_pruned(std::move(copy), t);
    }
    if (const auto* p = as<RestrictTerm>(t)) {
        Term body = rewrite_at(p->body, path, depth + 1, leaf, ctx);
        if (ctx.escaping.count(p->binder)) {
            Name renamed = ctx.fresh.fresh(p->binder);
            NameMap m{{p->binder, renamed}};
            body = substitute(body, m, ctx.fresh);
            ctx.escaping.erase(p->binder);
            ctx.renames[p->binder] = renamed;
            ctx.extruded.push_back(renamed);
            return body;
        }
        return restrict_name(p->binder, std::move(body));
    }
    throw CalcError("rewrite_at: path crosses a non-context node");
}

std::vector<Name> apply_renames(const std::vector<Name>& ns, const NameMap& renames) {
    std::vector<Name> out;
    out.reserve(ns.size());
    for (const auto& n : ns) {
        auto it = renames.find(n);
        out.push_back(it == renames.end() ? n : it->second);
    }
    return out;
}

// Longest common prefix of two paths.
std::size_t common_depth(const TermPath& a, const TermPath& b) {
    std::size_t n = std::min(a.size(), b.size());
    std::size_t i = 0;
    while (i < n && a[i] == b[i]) ++i;
    return i;
}

TermPath subpath(const TermPath& p, std::size_t from) {
    return TermPath(p.begin() + static_cast<std::ptrdiff_t>(from), p.end());
}

struct SystemRewriter {
    SystemTerm post;
    FreshNames fresh;

    explicit SystemRewriter(const SystemTerm& sys) : post(sys), fresh(sys.fresh_counter) {}

    void commit_participant(std::size_t part, Term t, std::vector<Name> extruded) {
        post.participants[part].term = std::move(t);
        for (auto& n : extruded) post.shared_restrictions.push_back(std::move(n));
    }

    SystemTerm finish() {
        post.fresh_counter = fresh.counter();
        return post;
    }
};

}  // namespace

// ── Step metadata ───────────────────────────────────────────────────────────

std::uint32_t ReactionStep::initiating_owner() const {
    if (const auto* c = std::get_if<CommunicationStep>(&v)) return c->sender_owner;
    if (const auto* b = std::get_if<BroadcastStep>(&v)) return b->sender_owner;
    if (const auto* m = std::get_if<MatchStep>(&v)) return m->owner;
    if (const auto* u = std::get_if<UnobservableStep>(&v)) return u->owner;
    return std::get<UnfoldStep>(v).owner;
}

std::string ReactionStep::describe() const {
    std::ostringstream os;
    if (const auto* c = std::get_if<CommunicationStep>(&v)) {
        os << "comm " << c->sender_owner << "->" << c->receiver_owner << " on "
           << c->chan.display << "/" << c->payload.size();
    } else if (const auto* b = std::get_if<BroadcastStep>(&v)) {
        os << "bcast " << b->sender_owner << " -> {";
        for (std::size_t i = 0; i < b->receiver_owners.size(); ++i)
            os << (i ? "," : "") << b->receiver_owners[i];
        os << "}";
    } else if (const auto* m = std::get_if<MatchStep>(&v)) {
        os << "match " << m->owner << " " << m->subject.display << " #" << m->branch_index;
    } else if (const auto* u = std::get_if<UnobservableStep>(&v)) {
        os << "tau " << u->owner << " " << u->label;
        if (u->resolution == UnobservableResolution::Rejected) os << " rejected";
    } else {
        const auto& f = std::get<UnfoldStep>(v);
        os << "unfold " << f.owner << " " << f.def_name;
    }
    return os.str();
}

std::size_t consumed_prefix_count(const ReactionStep& step) {
    if (std::holds_alternative<CommunicationStep>(step.v)) return 2;
    if (const auto* b = std::get_if<BroadcastStep>(&step.v)) return 1 + b->receiver_owners.size();
    return 1;
}

// ── Step construction ───────────────────────────────────────────────────────
// The leaves read the actual prefix at the reaction site (re-instantiating a
// replicated call body for expanded sites), so extrusion renames and binder
// substitutions always see the names the rewritten tree really carries.

namespace {

using Leaf = std::function<Term(const Term&)>;

Leaf at_expansion(const std::optional<ExpansionPoint>& exp, const DefinitionEnv& env,
                  RewriteCtx& ctx, Leaf leaf) {
    if (!exp) return leaf;
    TermPath inner = exp->inner_path;
    return [&env, &ctx, inner, leaf](const Term& node) -> Term {
        const auto* c = as<CallTerm>(node);
        if (!c) throw CalcError("expected a replicated call at an expanded site");
        Term body = instantiate(env.at(c->def_name), c->args, ctx.fresh);
        return rewrite_at(body, inner, 0, leaf, ctx);
    };
}

const TermPath& site_path(const TermPath& virtual_path,
                          const std::optional<ExpansionPoint>& exp) {
    return exp ? exp->call_path : virtual_path;
}

Leaf send_leaf(RewriteCtx& ctx, std::vector<Name>& payload_out) {
    return [&ctx, &payload_out](const Term& node) -> Term {
        const auto* p = as<PrefixTerm>(node);
        if (!p) throw CalcError("expected a send prefix at reaction site");
        const auto& sa = std::get<SendAction>(p->action);
        payload_out = sa.payload;
        for (const auto& n : sa.payload)
            if (!n.is_constant()) ctx.escaping.insert(n);
        return p->cont;
    };
}

Leaf recv_leaf(RewriteCtx& ctx, const std::vector<Name>& payload) {
    return [&ctx, payload](const Term& node) -> Term {
        const auto* p = as<PrefixTerm>(node);
        if (!p) throw CalcError("expected a receive prefix at reaction site");
        const auto& ra = std::get<ReceiveAction>(p->action);
        NameMap bind;
        for (std::size_t i = 0; i < ra.binders.size(); ++i) bind[ra.binders[i]] = payload[i];
        if (bind.empty()) return p->cont;
        return substitute(p->cont, bind, ctx.fresh);
    };
}

Leaf bcast_send_leaf(RewriteCtx& ctx, std::vector<Name>& payload_out, bool heard) {
    return [&ctx, &payload_out, heard](const Term& node) -> Term {
        const auto* p = as<PrefixTerm>(node);
        const auto& ba = std::get<BroadcastAction>(p->action);
        payload_out = {ba.payload};
        // an unheard broadcast is lost: the private name never left its scope
        if (heard && !ba.payload.is_constant()) ctx.escaping.insert(ba.payload);
        return p->cont;
    };
}

Leaf bcast_recv_leaf(RewriteCtx& ctx, const Name& payload) {
    return [&ctx, payload](const Term& node) -> Term {
        const auto* p = as<PrefixTerm>(node);
        const auto& rb = std::get<BroadcastReceiveAction>(p->action);
        NameMap bind{{rb.binder, payload}};
        return substitute(p->cont, bind, ctx.fresh);
    };
}

ReactionStep make_communication(const SystemTerm& sys, const DefinitionEnv& env,
                                std::uint64_t pre, const CommunicationStep& info,
                                const std::optional<ExpansionPoint>& send_exp,
                                const std::optional<ExpansionPoint>& recv_exp,
                                const std::optional<std::pair<std::uint32_t, std::string>>& site) {
    SystemRewriter rw(sys);
    std::vector<Name> payload;
    std::size_t send_part = 0, recv_part = 0;
    for (std::size_t i = 0; i < sys.participants.size(); ++i) {
        if (sys.participants[i].owner == info.sender_owner) send_part = i;
        if (sys.participants[i].owner == info.receiver_owner) recv_part = i;
    }
    const TermPath& s_path = site_path(info.send_path, send_exp);
    const TermPath& r_path = site_path(info.recv_path, recv_exp);

    if (send_part == recv_part) {
        std::size_t lca = common_depth(s_path, r_path);
        TermPath lca_path(s_path.begin(), s_path.begin() + static_cast<std::ptrdiff_t>(lca));
        TermPath s_suffix = subpath(s_path, lca);
        TermPath r_suffix = subpath(r_path, lca);
        RewriteCtx sctx{rw.fresh, {}, {}, {}};
        RewriteCtx rctx{rw.fresh, {}, {}, {}};
        auto lca_leaf = [&](const Term& node) -> Term {
            const auto* par = as<ParallelTerm>(node);
            if (!par) throw CalcError("same-owner reaction outside a parallel context");
            std::uint32_t si = s_suffix[0], ri = r_suffix[0];
            Term s_child = rewrite_at(si == 0 ? par->left : par->right, s_suffix, 1,
                                      at_expansion(send_exp, env, sctx, send_leaf(sctx, payload)),
                                      sctx);
            payload = apply_renames(payload, sctx.renames);
            Term r_child = rewrite_at(ri == 0 ? par->left : par->right, r_suffix, 1,
                                      at_expansion(recv_exp, env, rctx, recv_leaf(rctx, payload)),
                                      rctx);
            Term rebuilt = si == 0 ? parallel_pruned(s_child, r_child)
                                   : parallel_pruned(r_child, s_child);
            // in-scope extrusions within one participant re-wrap at the LCA
            for (auto& n : sctx.extruded) rebuilt = restrict_name(n, rebuilt);
            return rebuilt;
        };
        RewriteCtx octx{rw.fresh, {}, {}, {}};
        Term t = rewrite_at(sys.participants[send_part].term, lca_path, 0, lca_leaf, octx);
        rw.commit_participant(send_part, std::move(t), std::move(octx.extruded));
    } else {
        RewriteCtx sctx{rw.fresh, {}, {}, {}};
        Term s_term = rewrite_at(sys.participants[send_part].term, s_path, 0,
                                 at_expansion(send_exp, env, sctx, send_leaf(sctx, payload)),
                                 sctx);
        payload = apply_renames(payload, sctx.renames);
        rw.commit_participant(send_part, std::move(s_term), std::move(sctx.extruded));

        RewriteCtx rctx{rw.fresh, {}, {}, {}};
        Term r_term = rewrite_at(sys.participants[recv_part].term, r_path, 0,
                                 at_expansion(recv_exp, env, rctx, recv_leaf(rctx, payload)),
                                 rctx);
        rw.commit_participant(recv_part, std::move(r_term), std::move(rctx.extruded));
    }

    ReactionStep step;
    CommunicationStep out = info;
    out.payload = payload;
    step.v = std::move(out);
    step.pre_hash = pre;
    step.post = rw.finish();
    step.replicate_site = site;
    return step;
}

ReactionStep make_broadcast(const SystemTerm& sys, const DefinitionEnv& env, std::uint64_t pre,
                            const BroadcastStep& info,
                            const std::optional<ExpansionPoint>& send_exp,
                            const std::vector<std::optional<ExpansionPoint>>& recv_exps,
                            const std::optional<std::pair<std::uint32_t, std::string>>& site) {
    SystemRewriter rw(sys);
    std::size_t send_part = 0;
    for (std::size_t i = 0; i < sys.participants.size(); ++i)
        if (sys.participants[i].owner == info.sender_owner) send_part = i;

    std::vector<Name> payload;
    RewriteCtx sctx{rw.fresh, {}, {}, {}};
    Term s_term = rewrite_at(sys.participants[send_part].term, site_path(info.send_path, send_exp),
                             0,
                             at_expansion(send_exp, env, sctx,
                                          bcast_send_leaf(sctx, payload,
                                                          !info.receiver_owners.empty())),
                             sctx);
    Name final_payload = apply_renames(payload, sctx.renames)[0];
    rw.commit_participant(send_part, std::move(s_term), std::move(sctx.extruded));

    for (std::size_t r = 0; r < info.receiver_owners.size(); ++r) {
        std::size_t part = 0;
        for (std::size_t i = 0; i < sys.participants.size(); ++i)
            if (sys.participants[i].owner == info.receiver_owners[r]) part = i;
        std::optional<ExpansionPoint> exp =
            r < recv_exps.size() ? recv_exps[r] : std::optional<ExpansionPoint>{};
        RewriteCtx rctx{rw.fresh, {}, {}, {}};
        Term t = rewrite_at(rw.post.participants[part].term, site_path(info.recv_paths[r], exp),
                            0, at_expansion(exp, env, rctx, bcast_recv_leaf(rctx, final_payload)),
                            rctx);
        rw.commit_participant(part, std::move(t), std::move(rctx.extruded));
    }

    ReactionStep step;
    BroadcastStep out = info;
    out.payload = final_payload;
    step.v = std::move(out);
    step.pre_hash = pre;
    step.post = rw.finish();
    step.replicate_site = site;
    return step;
}

ReactionStep make_match(const SystemTerm& sys, std::uint64_t pre, const MatchStep& info,
                        const std::optional<std::pair<std::uint32_t, std::string>>& site) {
    SystemRewriter rw(sys);
    std::size_t part = 0;
    for (std::size_t i = 0; i < sys.participants.size(); ++i)
        if (sys.participants[i].owner == info.owner) part = i;
    RewriteCtx ctx{rw.fresh, {}, {}, {}};
    std::size_t branch = info.branch_index;
    Term t = rewrite_at(sys.participants[part].term, info.path, 0,
                        [&](const Term& node) -> Term {
                            const auto* m = as<MatchTerm>(node);
                            if (!m) throw CalcError("expected a match at reaction site");
                            return m->branches.at(branch).body;
                        },
                        ctx);
    rw.commit_participant(part, std::move(t), std::move(ctx.extruded));

    ReactionStep step;
    step.v = info;
    step.pre_hash = pre;
    step.post = rw.finish();
    step.replicate_site = site;
    return step;
}

ReactionStep make_unfold(const SystemTerm& sys, const DefinitionEnv& env, std::uint64_t pre,
                         const UnfoldStep& info,
                         const std::optional<std::pair<std::uint32_t, std::string>>& site) {
    SystemRewriter rw(sys);
    std::size_t part = 0;
    for (std::size_t i = 0; i < sys.participants.size(); ++i)
        if (sys.participants[i].owner == info.owner) part = i;
    RewriteCtx ctx{rw.fresh, {}, {}, {}};
    Term t = rewrite_at(sys.participants[part].term, info.path, 0,
                        [&](const Term& node) -> Term {
                            const auto* c = as<CallTerm>(node);
                            if (!c) throw CalcError("expected a call at unfold site");
                            return instantiate(env.at(c->def_name), c->args, rw.fresh);
                        },
                        ctx);
    rw.commit_participant(part, std::move(t), std::move(ctx.extruded));

    ReactionStep step;
    step.v = info;
    step.pre_hash = pre;
    step.post = rw.finish();
    step.replicate_site = site;
    return step;
}

ReactionStep make_unobservable(const SystemTerm& sys, const DefinitionEnv& env, std::uint64_t pre,
                               const UnobservableStep& info,
                               const std::optional<ExpansionPoint>& exp,
                               const std::optional<std::pair<std::uint32_t, std::string>>& site,
                               const std::vector<Name>* actual_values,
                               UnobservableResolution resolution) {
    SystemRewriter rw(sys);
    std::size_t part = 0;
    for (std::size_t i = 0; i < sys.participants.size(); ++i)
        if (sys.participants[i].owner == info.owner) part = i;

    std::vector<Name> values;
    std::vector<Name> final_args = info.args;
    RewriteCtx ctx{rw.fresh, {}, {}, {}};
    if (resolution == UnobservableResolution::Rejected) {
        Term t = rewrite_at(sys.participants[part].term, site_path(info.path, exp), 0,
                            at_expansion(exp, env, ctx, [](const Term&) { return nil(); }), ctx);
        rw.commit_participant(part, std::move(t), std::move(ctx.extruded));
    } else {
        if (actual_values) {
            if (actual_values->size() != info.binders.size())
                throw ArityError("interface reply arity mismatch for " + info.label);
            values = *actual_values;
        } else {
            for (const auto& b : info.binders) values.push_back(rw.fresh.fresh(b));
        }
        Leaf leaf = [&](const Term& node) -> Term {
            const auto* p = as<PrefixTerm>(node);
            if (!p) throw CalcError("expected an interface prefix at reaction site");
            const auto& u = std::get<UnobservableAction>(p->action);
            final_args = u.args;
            for (const auto& n : u.args)
                if (!n.is_constant()) ctx.escaping.insert(n);
            NameMap bind;
            for (std::size_t i = 0; i < u.binders.size(); ++i) bind[u.binders[i]] = values[i];
            if (bind.empty()) return p->cont;
            return substitute(p->cont, bind, ctx.fresh);
        };
        Term t = rewrite_at(sys.participants[part].term, site_path(info.path, exp), 0,
                            at_expansion(exp, env, ctx, leaf), ctx);
        rw.commit_participant(part, std::move(t), std::move(ctx.extruded));
        final_args = apply_renames(final_args, ctx.renames);
    }

    ReactionStep step;
    UnobservableStep out = info;
    out.args = final_args;
    out.bound_values = values;
    out.resolution = resolution;
    step.v = std::move(out);
    step.pre_hash = pre;
    step.post = rw.finish();
    step.replicate_site = site;
    return step;
}

bool path_less(const TermPath& a, const TermPath& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

using StepVariant =
    std::variant<CommunicationStep, BroadcastStep, MatchStep, UnobservableStep, UnfoldStep>;

std::uint32_t variant_owner(const StepVariant& v) {
    if (const auto* c = std::get_if<CommunicationStep>(&v)) return c->sender_owner;
    if (const auto* b = std::get_if<BroadcastStep>(&v)) return b->sender_owner;
    if (const auto* m = std::get_if<MatchStep>(&v)) return m->owner;
    if (const auto* u = std::get_if<UnobservableStep>(&v)) return u->owner;
    return std::get<UnfoldStep>(v).owner;
}

bool variant_step_less(const StepVariant& a, const StepVariant& b) {
    if (variant_owner(a) != variant_owner(b)) return variant_owner(a) < variant_owner(b);
    auto primary_path = [](const StepVariant& s) -> const TermPath& {
        if (const auto* c = std::get_if<CommunicationStep>(&s)) return c->send_path;
        if (const auto* br = std::get_if<BroadcastStep>(&s)) return br->send_path;
        if (const auto* m = std::get_if<MatchStep>(&s)) return m->path;
        if (const auto* u = std::get_if<UnobservableStep>(&s)) return u->path;
        return std::get<UnfoldStep>(s).path;
    };
    const TermPath& pa = primary_path(a);
    const TermPath& pb = primary_path(b);
    if (pa != pb) return path_less(pa, pb);
    if (a.index() != b.index()) return a.index() < b.index();
    if (const auto* ca = std::get_if<CommunicationStep>(&a)) {
        const auto& cb = std::get<CommunicationStep>(b);
        if (ca->receiver_owner != cb.receiver_owner) return ca->receiver_owner < cb.receiver_owner;
        return path_less(ca->recv_path, cb.recv_path);
    }
    return false;
}

}  // namespace

// ── Enumeration ─────────────────────────────────────────────────────────────

std::uint32_t StepSketch::initiating_owner() const { return variant_owner(v); }

std::vector<StepSketch> sketch_reactions(const SystemTerm& sys, const DefinitionEnv& env,
                                         const RangeRelation& in_range,
                                         const SketchOptions& opts) {
    std::vector<ExposedItem> items =
        expose(sys, opts.with_replicate_sites, &env, opts.expand_replicated_calls);
    std::vector<StepSketch> sketches;

    // Presence marks a step that consumes through a replication; the body key
    // is only filled when requested (it costs an alpha pass).
    auto site_of = [](const ExposedItem& a, const ExposedItem* b = nullptr)
        -> std::optional<std::pair<std::uint32_t, std::string>> {
        if (a.replicate_site) return a.replicate_site;
        return b ? b->replicate_site : std::nullopt;
    };

    // Node identity check for same-restriction pairing.
    auto same_restrict = [](const ExposedItem& a, const ExposedItem& b) {
        if (!a.chan_restrict && !b.chan_restrict) return true;
        if (!a.chan_restrict || !b.chan_restrict) return false;
        return a.part == b.part && *a.chan_restrict == *b.chan_restrict;
    };

    for (const auto& send : items) {
        if (send.kind != ExposedKind::Prefix) continue;
        const auto& spfx = std::get<PrefixTerm>(send.node->v);
        const auto* sa = std::get_if<SendAction>(&spfx.action);
        if (!sa) continue;
        for (const auto& recv : items) {
            if (recv.kind != ExposedKind::Prefix) continue;
            const auto& rpfx = std::get<PrefixTerm>(recv.node->v);
            const auto* ra = std::get_if<ReceiveAction>(&rpfx.action);
            if (!ra) continue;
            if (!(sa->chan == ra->chan)) continue;
            if (sa->payload.size() != ra->binders.size()) continue;
            if (!same_restrict(send, recv)) continue;
            if (send.part == recv.part) {
                // prefixes of one virtual copy cannot react with each other
                if (send.expansion && recv.expansion &&
                    send.expansion->call_path == recv.expansion->call_path)
                    continue;
                // Must sit on different operands of a parallel composition.
                std::size_t lca = common_depth(send.path, recv.path);
                if (lca == send.path.size() || lca == recv.path.size()) continue;
                TermPath lca_path(send.path.begin(),
                                  send.path.begin() + static_cast<std::ptrdiff_t>(lca));
                Term lca_node = at_path(sys.participants[send.part].term, lca_path);
                if (!as<ParallelTerm>(lca_node)) continue;
            }
            StepSketch sk;
            sk.v = CommunicationStep{send.owner, recv.owner, sa->chan, sa->payload, send.path,
                                     recv.path};
            sk.replicate_site = site_of(send, &recv);
            sk.primary_expansion = send.expansion;
            sk.secondary_expansion = recv.expansion;
            sketches.push_back(std::move(sk));
        }
    }

    for (const auto& send : items) {
        if (send.kind != ExposedKind::Prefix) continue;
        const auto& spfx = std::get<PrefixTerm>(send.node->v);
        const auto* ba = std::get_if<BroadcastAction>(&spfx.action);
        if (!ba) continue;
        // One receive per in-range participant, first by syntactic position;
        // a node does not hear its own broadcast.
        BroadcastStep info;
        info.sender_owner = send.owner;
        info.payload = ba->payload;
        info.send_path = send.path;
        StepSketch sk;
        std::vector<bool> taken(sys.participants.size(), false);
        for (const auto& recv : items) {
            if (recv.kind != ExposedKind::Prefix) continue;
            if (recv.part == send.part || taken[recv.part]) continue;
            const auto& rpfx = std::get<PrefixTerm>(recv.node->v);
            if (!std::holds_alternative<BroadcastReceiveAction>(rpfx.action)) continue;
            if (!in_range(send.owner, recv.owner)) continue;
            taken[recv.part] = true;
            info.receiver_owners.push_back(recv.owner);
            info.recv_paths.push_back(recv.path);
            sk.receiver_expansions.push_back(recv.expansion);
        }
        sk.replicate_site = site_of(send);
        sk.primary_expansion = send.expansion;
        sk.v = std::move(info);
        sketches.push_back(std::move(sk));
    }

    for (const auto& item : items) {
        if (item.kind == ExposedKind::Match) {
            const auto& m = std::get<MatchTerm>(item.node->v);
            for (std::size_t i = 0; i < m.branches.size(); ++i) {
                if (m.branches[i].label == m.subject) {
                    StepSketch sk;
                    sk.v = MatchStep{item.owner, i, m.subject, item.path};
                    sk.replicate_site = site_of(item);
                    sketches.push_back(std::move(sk));
                    break;  // first matching branch fires
                }
            }
        } else if (item.kind == ExposedKind::Call) {
            const auto& c = std::get<CallTerm>(item.node->v);
            if (!env.contains(c.def_name)) throw UnresolvedCallError(c.def_name);
            StepSketch sk;
            sk.v = UnfoldStep{item.owner, c.def_name, item.path};
            sk.replicate_site = site_of(item);
            sketches.push_back(std::move(sk));
        } else {
            const auto& pfx = std::get<PrefixTerm>(item.node->v);
            if (const auto* u = std::get_if<UnobservableAction>(&pfx.action)) {
                StepSketch sk;
                sk.v = UnobservableStep{item.owner,  u->label, u->args,
                                        u->binders,  {},       UnobservableResolution::Symbolic,
                                        item.path};
                sk.replicate_site = site_of(item);
                sk.primary_expansion = item.expansion;
                sketches.push_back(std::move(sk));
            }
        }
    }

    std::stable_sort(sketches.begin(), sketches.end(),
                     [](const StepSketch& a, const StepSketch& b) {
                         return variant_step_less(a.v, b.v);
                     });
    return sketches;
}

ReactionStep materialize(const SystemTerm& sys, const DefinitionEnv& env, const StepSketch& s) {
    std::uint64_t pre = system_hash(sys);
    if (const auto* c = std::get_if<CommunicationStep>(&s.v))
        return make_communication(sys, env, pre, *c, s.primary_expansion, s.secondary_expansion,
                                  s.replicate_site);
    if (const auto* b = std::get_if<BroadcastStep>(&s.v))
        return make_broadcast(sys, env, pre, *b, s.primary_expansion, s.receiver_expansions,
                              s.replicate_site);
    if (const auto* m = std::get_if<MatchStep>(&s.v))
        return make_match(sys, pre, *m, s.replicate_site);
    if (const auto* u = std::get_if<UnobservableStep>(&s.v))
        return make_unobservable(sys, env, pre, *u, s.primary_expansion, s.replicate_site,
                                 nullptr, UnobservableResolution::Symbolic);
    return make_unfold(sys, env, pre, std::get<UnfoldStep>(s.v), s.replicate_site);
}

ReactionStep materialize_unobservable(const SystemTerm& sys, const DefinitionEnv& env,
                                      const StepSketch& s, const std::vector<Name>& values) {
    const auto& u = std::get<UnobservableStep>(s.v);
    return make_unobservable(sys, env, system_hash(sys), u, s.primary_expansion,
                             s.replicate_site, &values, UnobservableResolution::Completed);
}

ReactionStep materialize_unobservable_rejected(const SystemTerm& sys, const DefinitionEnv& env,
                                               const StepSketch& s) {
    const auto& u = std::get<UnobservableStep>(s.v);
    return make_unobservable(sys, env, system_hash(sys), u, s.primary_expansion,
                             s.replicate_site, nullptr, UnobservableResolution::Rejected);
}

// ── enabled_reactions ───────────────────────────────────────────────────────

std::vector<ReactionStep> enabled_reactions(const SystemTerm& sys, const DefinitionEnv& env,
                                            const RangeRelation& in_range) {
    SketchOptions opts;
    opts.with_replicate_sites = true;
    std::vector<ReactionStep> steps;
    for (const auto& sk : sketch_reactions(sys, env, in_range, opts))
        steps.push_back(materialize(sys, env, sk));
    return steps;
}

SystemTerm apply_reaction(const SystemTerm& sys, const ReactionStep& step) {
    if (system_hash(sys) != step.pre_hash) throw StaleStepError();
    return step.post;
}

namespace {

bool matches_unobservable(const ExposedItem& item, const UnobservableStep& info) {
    if (item.kind != ExposedKind::Prefix || item.owner != info.owner) return false;
    if (item.path != info.path) return false;
    const auto& pfx = std::get<PrefixTerm>(item.node->v);
    const auto* u = std::get_if<UnobservableAction>(&pfx.action);
    return u && u->label == info.label;
}

}  // namespace

ReactionStep resolve_unobservable(const SystemTerm& sys, const UnobservableStep& info,
                                  const std::vector<Name>& values) {
    for (auto& item : expose(sys, false)) {
        if (!matches_unobservable(item, info)) continue;
        static const DefinitionEnv no_env;
        return make_unobservable(sys, no_env, system_hash(sys), info, std::nullopt,
                                 item.replicate_site, &values, UnobservableResolution::Completed);
    }
    throw StaleStepError();
}

ReactionStep resolve_unobservable_rejected(const SystemTerm& sys, const UnobservableStep& info) {
    for (auto& item : expose(sys, false)) {
        if (!matches_unobservable(item, info)) continue;
        static const DefinitionEnv no_env;
        return make_unobservable(sys, no_env, system_hash(sys), info, std::nullopt,
                                 item.replicate_site, nullptr, UnobservableResolution::Rejected);
    }
    throw StaleStepError();
}

std::optional<ReactionStep> deliver_on_channel(const SystemTerm& sys, std::uint32_t owner,
                                               const Name& chan,
                                               const std::vector<Name>& payload) {
    for (auto& item : expose(sys, false)) {
        if (item.kind != ExposedKind::Prefix || item.owner != owner) continue;
        const auto& pfx = std::get<PrefixTerm>(item.node->v);
        const auto* r = std::get_if<ReceiveAction>(&pfx.action);
        if (!r || !(r->chan == chan) || r->binders.size() != payload.size()) continue;

        SystemRewriter rw(sys);
        RewriteCtx ctx{rw.fresh, {}, {}, {}};
        Term t = rewrite_at(sys.participants[item.part].term, item.path, 0,
                            recv_leaf(ctx, payload), ctx);
        rw.commit_participant(item.part, std::move(t), std::move(ctx.extruded));

        ReactionStep step;
        step.v = CommunicationStep{owner, owner, chan, payload, {}, item.path};
        step.pre_hash = system_hash(sys);
        step.post = rw.finish();
        step.replicate_site = item.replicate_site;
        return step;
    }
    return std::nullopt;
}

// ── Canonical system ────────────────────────────────────────────────────────
// Stable representative of a system modulo structural congruence and the
// identities of execution-minted names. Participant terms are normalized,
// run-minted free names renumbered by first occurrence, and the whole thing
// alpha-normalized jointly (shared restrictions act as outer binders). The
// numbering and normalization interact, so iterate to a fixpoint.

namespace {

constexpr std::uint64_t kProvisionalBase = kCanonicalBase + (1ULL << 60);
constexpr std::uint64_t kProvisionalEnd = kCanonicalBase + (1ULL << 61);

// Names minted during execution (extrusions), canonical ids assigned by a
// previous canonicalization pass, or provisional ids from an earlier round;
// these are the ids the canonicalization may rewrite. Canonical-range ids
// that are bound inside a term are shadowed during substitution, so
// renumbering them is a no-op; the ones free in participants (previously
// shared restrictions) must be renumbered or they would collide with the ids
// the final alpha pass hands out.
bool renumberable(const Name& n) {
    if (n.is_constant()) return false;
    if (n.id >= kFirstRuntimeId && n.id < kCanonicalBase) return true;
    if (n.id >= kCanonicalBase && n.id < kProvisionalBase) return true;
    return n.id >= kProvisionalBase && n.id < kProvisionalEnd;
}

void collect_ordered(const Term& t, std::vector<Name>& out) {
    if (as<NilTerm>(t)) return;
    if (const auto* p = as<PrefixTerm>(t)) {
        if (const auto* s = std::get_if<SendAction>(&p->action)) {
            out.push_back(s->chan);
            for (const auto& n : s->payload) out.push_back(n);
        } else if (const auto* r = std::get_if<ReceiveAction>(&p->action)) {
            out.push_back(r->chan);
        } else if (const auto* br = std::get_if<BroadcastAction>(&p->action)) {
            out.push_back(br->payload);
        } else if (const auto* u = std::get_if<UnobservableAction>(&p->action)) {
            for (const auto& n : u->args) out.push_back(n);
        }
        collect_ordered(p->cont, out);
        return;
    }
    if (const auto* p = as<ParallelTerm>(t)) {
        collect_ordered(p->left, out);
        collect_ordered(p->right, out);
        return;
    }
    if (const auto* p = as<ChoiceTerm>(t)) {
        collect_ordered(p->left, out);
        collect_ordered(p->right, out);
        return;
    }
    if (const auto* p = as<ReplicateTerm>(t)) {
        collect_ordered(p->body, out);
        return;
    }
    if (const auto* p = as<RestrictTerm>(t)) {
        collect_ordered(p->body, out);
        return;
    }
    if (const auto* p = as<MatchTerm>(t)) {
        out.push_back(p->subject);
        for (const auto& b : p->branches) {
            out.push_back(b.label);
            collect_ordered(b.body, out);
        }
        return;
    }
    const auto& c = std::get<CallTerm>(t->v);
    for (const auto& n : c.args) out.push_back(n);
}

// Execution-minted names in preorder first-occurrence order. These are never
// term binders, so every occurrence is free.
void first_occurrences(const Term& t, std::vector<Name>& order, NameSet& seen) {
    std::vector<Name> occ;
    collect_ordered(t, occ);
    for (const auto& n : occ) {
        if (!renumberable(n)) continue;
        if (seen.insert(n).second) order.push_back(n);
    }
}

}  // namespace

SystemTerm canonical_system(const SystemTerm& s) {
    SystemTerm cur = s;
    std::sort(cur.participants.begin(), cur.participants.end(),
              [](const Participant& a, const Participant& b) { return a.owner < b.owner; });
    for (auto& p : cur.participants) p.term = congruence_nf(p.term);

    NameSet shared(cur.shared_restrictions.begin(), cur.shared_restrictions.end());

    std::string last_signature;
    for (int round = 0; round < 4; ++round) {
        // Renumber execution-minted free names by first occurrence.
        std::vector<Name> order;
        NameSet seen;
        for (const auto& p : cur.participants) first_occurrences(p.term, order, seen);
        NameMap renum;
        bool changed = false;
        for (std::size_t i = 0; i < order.size(); ++i) {
            Name target{kProvisionalBase + i, order[i].kind, "~" + std::to_string(i)};
            if (!(order[i] == target)) changed = true;
            renum.emplace(order[i], target);
        }
        if (!renum.empty() && changed) {
            FreshNames throwaway(cur.fresh_counter);
            NameSet new_shared;
            for (auto& p : cur.participants) p.term = substitute(p.term, renum, throwaway);
            for (const auto& n : shared) {
                auto it = renum.find(n);
                new_shared.insert(it == renum.end() ? n : it->second);
            }
            shared.swap(new_shared);
            for (auto& p : cur.participants) p.term = congruence_nf(p.term);
        }
        std::ostringstream sig;
        for (const auto& p : cur.participants) sig << p.owner << ":" << canonical_key(p.term) << ";";
        if (sig.str() == last_signature) break;
        last_signature = sig.str();
    }

    // Live shared restrictions in first-occurrence order.
    std::vector<Name> live_shared;
    {
        std::vector<Name> order;
        NameSet seen;
        for (const auto& p : cur.participants) first_occurrences(p.term, order, seen);
        for (const auto& n : order)
            if (shared.count(n)) live_shared.push_back(n);
    }

    // Joint alpha pass: shared restrictions as outer binders over the spine.
    Term spine = nil();
    if (!cur.participants.empty()) {
        spine = cur.participants.back().term;
        for (std::size_t i = cur.participants.size() - 1; i-- > 0;)
            spine = parallel(cur.participants[i].term, spine);
    }
    Term pseudo = spine;
    for (std::size_t i = live_shared.size(); i-- > 0;) pseudo = restrict_name(live_shared[i], pseudo);
    pseudo = alpha_normalize(pseudo);

    SystemTerm out;
    out.fresh_counter = kFirstRuntimeId;
    std::vector<Name> canon_shared;
    Term walk = pseudo;
    for (std::size_t i = 0; i < live_shared.size(); ++i) {
        const auto* r = as<RestrictTerm>(walk);
        canon_shared.push_back(r->binder);
        walk = r->body;
    }
    out.shared_restrictions = std::move(canon_shared);
    for (std::size_t i = 0; i < cur.participants.size(); ++i) {
        Term t = walk;
        if (i + 1 < cur.participants.size()) {
            const auto* par = as<ParallelTerm>(walk);
            t = par->left;
            walk = par->right;
        }
        out.participants.push_back({cur.participants[i].owner, t});
    }
    return out;
}

}  // namespace platoon::calc
