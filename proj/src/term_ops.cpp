#include "platoon/term_ops.hpp"

#include <algorithm>

namespace platoon::calc {

namespace {

void collect_free(const Term& t, NameSet& bound, NameSet& out);

void note_free(const Name& n, const NameSet& bound, NameSet& out) {
    if (n.is_constant()) {
        out.insert(n);
        return;
    }
    if (!bound.count(n)) out.insert(n);
}

// Runs `body` with the given binders added to the bound set, then restores it.
template <typename Fn>
void with_bound(NameSet& bound, const std::vector<Name>& binders, Fn body) {
    std::vector<Name> added;
    for (const auto& b : binders) {
        if (bound.insert(b).second) added.push_back(b);
    }
    body();
    for (const auto& b : added) bound.erase(b);
}

void collect_free(const Term& t, NameSet& bound, NameSet& out) {
    if (as<NilTerm>(t)) return;
    if (const auto* p = as<PrefixTerm>(t)) {
        std::vector<Name> binders;
        if (const auto* s = std::get_if<SendAction>(&p->action)) {
            note_free(s->chan, bound, out);
            for (const auto& n : s->payload) note_free(n, bound, out);
        } else if (const auto* r = std::get_if<ReceiveAction>(&p->action)) {
            note_free(r->chan, bound, out);
            binders = r->binders;
        } else if (const auto* br = std::get_if<BroadcastAction>(&p->action)) {
            note_free(br->payload, bound, out);
        } else if (const auto* brr = std::get_if<BroadcastReceiveAction>(&p->action)) {
            binders.push_back(brr->binder);
        } else {
            const auto& u = std::get<UnobservableAction>(p->action);
            for (const auto& n : u.args) note_free(n, bound, out);
            binders = u.binders;
        }
        with_bound(bound, binders, [&] { collect_free(p->cont, bound, out); });
        return;
    }
    if (const auto* p = as<ParallelTerm>(t)) {
        collect_free(p->left, bound, out);
        collect_free(p->right, bound, out);
        return;
    }
    if (const auto* p = as<ChoiceTerm>(t)) {
        collect_free(p->left, bound, out);
        collect_free(p->right, bound, out);
        return;
    }
    if (const auto* p = as<ReplicateTerm>(t)) {
        collect_free(p->body, bound, out);
        return;
    }
    if (const auto* p = as<RestrictTerm>(t)) {
        with_bound(bound, {p->binder}, [&] { collect_free(p->body, bound, out); });
        return;
    }
    if (const auto* p = as<MatchTerm>(t)) {
        note_free(p->subject, bound, out);
        for (const auto& b : p->branches) {
            note_free(b.label, bound, out);
            collect_free(b.body, bound, out);
        }
        return;
    }
    const auto& c = std::get<CallTerm>(t->v);
    for (const auto& n : c.args) note_free(n, bound, out);
}

}  // namespace

NameSet free_names(const Term& t) {
    NameSet bound, out;
    collect_free(t, bound, out);
    return out;
}

bool occurs_free(const Term& t, const Name& n) {
    return free_names(t).count(n) != 0;
}

// ── Substitution ────────────────────────────────────────────────────────────

namespace {

Name apply_map(const Name& n, const NameMap& m) {
    auto it = m.find(n);
    return it == m.end() ? n : it->second;
}

std::vector<Name> apply_map(const std::vector<Name>& ns, const NameMap& m) {
    std::vector<Name> out;
    out.reserve(ns.size());
    for (const auto& n : ns) out.push_back(apply_map(n, m));
    return out;
}

bool in_range(const Name& n, const NameMap& m) {
    for (const auto& [k, v] : m) {
        (void)k;
        if (v == n) return true;
    }
    return false;
}

Term subst(const Term& t, NameMap m, FreshNames& fresh);

// Handles one binder list: drops shadowed keys, renames binders that collide
// with mapping targets, returns the rewritten binder list and continuation.
std::pair<std::vector<Name>, Term> subst_under(std::vector<Name> binders, Term cont,
                                               NameMap m, FreshNames& fresh) {
    for (const auto& b : binders) m.erase(b);
    for (auto& b : binders) {
        if (!m.empty() && in_range(b, m)) {
            Name nb = fresh.fresh(b);
            NameMap rename{{b, nb}};
            cont = subst(cont, rename, fresh);
            b = nb;
        }
    }
    if (m.empty()) return {std::move(binders), std::move(cont)};
    return {std::move(binders), subst(cont, std::move(m), fresh)};
}

Term subst(const Term& t, NameMap m, FreshNames& fresh) {
    if (m.empty() || as<NilTerm>(t)) return t;
    if (const auto* p = as<PrefixTerm>(t)) {
        if (const auto* s = std::get_if<SendAction>(&p->action)) {
            SendAction a{apply_map(s->chan, m), apply_map(s->payload, m)};
            return prefix(a, subst(p->cont, m, fresh));
        }
        if (const auto* r = std::get_if<ReceiveAction>(&p->action)) {
            Name chan = apply_map(r->chan, m);
            auto [binders, cont] = subst_under(r->binders, p->cont, m, fresh);
            return prefix(ReceiveAction{chan, std::move(binders)}, std::move(cont));
        }
        if (const auto* br = std::get_if<BroadcastAction>(&p->action)) {
            return prefix(BroadcastAction{apply_map(br->payload, m)}, subst(p->cont, m, fresh));
        }
        if (const auto* brr = std::get_if<BroadcastReceiveAction>(&p->action)) {
            auto [binders, cont] = subst_under({brr->binder}, p->cont, m, fresh);
            return prefix(BroadcastReceiveAction{binders[0]}, std::move(cont));
        }
        const auto& u = std::get<UnobservableAction>(p->action);
        auto args = apply_map(u.args, m);
        auto [binders, cont] = subst_under(u.binders, p->cont, m, fresh);
        return prefix(UnobservableAction{u.label, std::move(args), std::move(binders)},
                      std::move(cont));
    }
    if (const auto* p = as<ParallelTerm>(t))
        return parallel(subst(p->left, m, fresh), subst(p->right, m, fresh));
    if (const auto* p = as<ChoiceTerm>(t))
        return choice(subst(p->left, m, fresh), subst(p->right, m, fresh));
    if (const auto* p = as<ReplicateTerm>(t)) return replicate(subst(p->body, m, fresh));
    if (const auto* p = as<RestrictTerm>(t)) {
        auto [binders, body] = subst_under({p->binder}, p->body, m, fresh);
        return restrict_name(binders[0], std::move(body));
    }
    if (const auto* p = as<MatchTerm>(t)) {
        Name subject = apply_map(p->subject, m);
        std::vector<MatchBranch> branches;
        branches.reserve(p->branches.size());
        for (const auto& b : p->branches)
            branches.push_back({apply_map(b.label, m), subst(b.body, m, fresh)});
        return match(std::move(subject), std::move(branches));
    }
    const auto& c = std::get<CallTerm>(t->v);
    return call(c.def_name, apply_map(c.args, m));
}

}  // namespace

Term substitute(const Term& t, const NameMap& mapping, FreshNames& fresh) {
    return subst(t, mapping, fresh);
}

// ── Alpha normalization ─────────────────────────────────────────────────────

namespace {

struct AlphaCtx {
    NameMap env;
    std::uint64_t next = 0;

    Name canon(const Name& b) {
        Name c{kCanonicalBase + next, b.kind, "$" + std::to_string(next)};
        ++next;
        return c;
    }

    Name lookup(const Name& n) const {
        auto it = env.find(n);
        return it == env.end() ? n : it->second;
    }
};

Term alpha(const Term& t, AlphaCtx& ctx);

Term alpha_bound(const std::vector<Name>& binders, const Term& cont, AlphaCtx& ctx,
                 std::vector<Name>& out_binders) {
    std::vector<std::pair<Name, bool>> saved;  // (old mapping, had mapping)
    for (const auto& b : binders) {
        Name c = ctx.canon(b);
        out_binders.push_back(c);
        auto it = ctx.env.find(b);
        if (it != ctx.env.end()) {
            saved.emplace_back(it->second, true);
            it->second = c;
        } else {
            saved.emplace_back(Name{}, false);
            ctx.env.emplace(b, c);
        }
    }
    Term result = alpha(cont, ctx);
    for (std::size_t i = binders.size(); i-- > 0;) {
        if (saved[i].second)
            ctx.env[binders[i]] = saved[i].first;
        else
            ctx.env.erase(binders[i]);
    }
    return result;
}

Term alpha(const Term& t, AlphaCtx& ctx) {
    if (as<NilTerm>(t)) return t;
    if (const auto* p = as<PrefixTerm>(t)) {
        if (const auto* s = std::get_if<SendAction>(&p->action)) {
            std::vector<Name> payload;
            for (const auto& n : s->payload) payload.push_back(ctx.lookup(n));
            return prefix(SendAction{ctx.lookup(s->chan), std::move(payload)}, alpha(p->cont, ctx));
        }
        if (const auto* r = std::get_if<ReceiveAction>(&p->action)) {
            Name chan = ctx.lookup(r->chan);
            std::vector<Name> binders;
            Term cont = alpha_bound(r->binders, p->cont, ctx, binders);
            return prefix(ReceiveAction{chan, std::move(binders)}, std::move(cont));
        }
        if (const auto* br = std::get_if<BroadcastAction>(&p->action)) {
            return prefix(BroadcastAction{ctx.lookup(br->payload)}, alpha(p->cont, ctx));
        }
        if (const auto* brr = std::get_if<BroadcastReceiveAction>(&p->action)) {
            std::vector<Name> binders;
            Term cont = alpha_bound({brr->binder}, p->cont, ctx, binders);
            return prefix(BroadcastReceiveAction{binders[0]}, std::move(cont));
        }
        const auto& u = std::get<UnobservableAction>(p->action);
        std::vector<Name> args;
        for (const auto& n : u.args) args.push_back(ctx.lookup(n));
        std::vector<Name> binders;
        Term cont = alpha_bound(u.binders, p->cont, ctx, binders);
        return prefix(UnobservableAction{u.label, std::move(args), std::move(binders)},
                      std::move(cont));
    }
    if (const auto* p = as<ParallelTerm>(t))
        return parallel(alpha(p->left, ctx), alpha(p->right, ctx));
    if (const auto* p = as<ChoiceTerm>(t)) return choice(alpha(p->left, ctx), alpha(p->right, ctx));
    if (const auto* p = as<ReplicateTerm>(t)) return replicate(alpha(p->body, ctx));
    if (const auto* p = as<RestrictTerm>(t)) {
        std::vector<Name> binders;
        Term body = alpha_bound({p->binder}, p->body, ctx, binders);
        return restrict_name(binders[0], std::move(body));
    }
    if (const auto* p = as<MatchTerm>(t)) {
        Name subject = ctx.lookup(p->subject);
        std::vector<MatchBranch> branches;
        for (const auto& b : p->branches)
            branches.push_back({ctx.lookup(b.label), alpha(b.body, ctx)});
        return match(std::move(subject), std::move(branches));
    }
    const auto& c = std::get<CallTerm>(t->v);
    std::vector<Name> args;
    for (const auto& n : c.args) args.push_back(ctx.lookup(n));
    return call(c.def_name, std::move(args));
}

}  // namespace

Term alpha_normalize(const Term& t) {
    AlphaCtx ctx;
    return alpha(t, ctx);
}

Term alpha_normalize_seeded(const Term& t, const NameMap& seed) {
    AlphaCtx ctx;
    ctx.env = seed;
    return alpha(t, ctx);
}

Term instantiate(const Definition& def, const std::vector<Name>& args, FreshNames& fresh) {
    if (def.params.size() != args.size())
        throw ArityError("call to " + def.name + " with " + std::to_string(args.size()) +
                         " args, expected " + std::to_string(def.params.size()));
    NameMap m;
    for (std::size_t i = 0; i < args.size(); ++i) m.emplace(def.params[i], args[i]);
    return substitute(def.body, m, fresh);
}

}  // namespace platoon::calc
