#include "platoon/congruence.hpp"

#include <algorithm>
#include <sstream>

#include "platoon/term_ops.hpp"

namespace platoon::calc {

namespace {

void key_name(std::ostringstream& os, const Name& n) {
    if (n.is_constant())
        os << "c'" << n.display << "'";
    else
        os << "n" << n.id;
}

void key_names(std::ostringstream& os, const std::vector<Name>& ns) {
    for (const auto& n : ns) {
        key_name(os, n);
        os << ",";
    }
}

void key_term(std::ostringstream& os, const Term& t) {
    if (as<NilTerm>(t)) {
        os << "0";
        return;
    }
    if (const auto* p = as<PrefixTerm>(t)) {
        if (const auto* s = std::get_if<SendAction>(&p->action)) {
            os << "S(";
            key_name(os, s->chan);
            os << ";";
            key_names(os, s->payload);
        } else if (const auto* r = std::get_if<ReceiveAction>(&p->action)) {
            os << "R(";
            key_name(os, r->chan);
            os << ";";
            key_names(os, r->binders);
        } else if (const auto* br = std::get_if<BroadcastAction>(&p->action)) {
            os << "B(";
            key_name(os, br->payload);
        } else if (const auto* brr = std::get_if<BroadcastReceiveAction>(&p->action)) {
            os << "V(";
            key_name(os, brr->binder);
        } else {
            const auto& u = std::get<UnobservableAction>(p->action);
            os << "U(" << u.label << ";";
            key_names(os, u.args);
            os << ";";
            key_names(os, u.binders);
        }
        os << ").";
        key_term(os, p->cont);
        return;
    }
    if (const auto* p = as<ParallelTerm>(t)) {
        os << "P[";
        key_term(os, p->left);
        os << "|";
        key_term(os, p->right);
        os << "]";
        return;
    }
    if (const auto* p = as<ChoiceTerm>(t)) {
        os << "C[";
        key_term(os, p->left);
        os << "+";
        key_term(os, p->right);
        os << "]";
        return;
    }
    if (const auto* p = as<ReplicateTerm>(t)) {
        os << "!";
        key_term(os, p->body);
        return;
    }
    if (const auto* p = as<RestrictTerm>(t)) {
        os << "N(";
        key_name(os, p->binder);
        os << ")";
        key_term(os, p->body);
        return;
    }
    if (const auto* p = as<MatchTerm>(t)) {
        os << "M(";
        key_name(os, p->subject);
        os << ")[";
        for (const auto& b : p->branches) {
            key_name(os, b.label);
            os << "=>";
            key_term(os, b.body);
            os << ",";
        }
        os << "]";
        return;
    }
    const auto& c = std::get<CallTerm>(t->v);
    os << "D(" << c.def_name << ";";
    key_names(os, c.args);
    os << ")";
}

// Binding context for ordering keys. Enclosing binders are mapped to fixed
// context names by binding order, so that keys of sibling components do not
// depend on the raw ids a particular execution happened to mint.
constexpr std::uint64_t kContextBase = kCanonicalBase + (1ULL << 61);

struct NfCtx {
    NameMap env;
    std::uint64_t depth = 0;

    Name context_name(const Name& b) {
        return Name{kContextBase + depth++, b.kind, "@" + std::to_string(depth - 1)};
    }
};

std::string component_key(const Term& t, const NfCtx& ctx) {
    std::ostringstream os;
    key_term(os, alpha_normalize_seeded(t, ctx.env));
    return os.str();
}

void flatten_parallel(const Term& t, std::vector<Term>& out) {
    if (const auto* p = as<ParallelTerm>(t)) {
        flatten_parallel(p->left, out);
        flatten_parallel(p->right, out);
        return;
    }
    out.push_back(t);
}

void flatten_choice(const Term& t, std::vector<Term>& out) {
    if (const auto* p = as<ChoiceTerm>(t)) {
        flatten_choice(p->left, out);
        flatten_choice(p->right, out);
        return;
    }
    out.push_back(t);
}

struct Keyed {
    Term term;
    std::string key;
};

std::vector<Keyed> keyed_sorted(std::vector<Term> comps, const NfCtx& ctx) {
    std::vector<Keyed> ks;
    ks.reserve(comps.size());
    for (auto& c : comps) ks.push_back({c, component_key(c, ctx)});
    std::stable_sort(ks.begin(), ks.end(),
                     [](const Keyed& a, const Keyed& b) { return a.key < b.key; });
    return ks;
}

// Normalized parallel composition of already-normalized components: drops
// nils, folds unfolded replicate copies back (P | !P == !P, with the copy's
// components possibly flattened into the surrounding multiset), sorts,
// rebuilds. Larger replicate bodies fold first so overlapping replicates
// resolve the same way regardless of derivation order.
Term normalize_components(std::vector<Term> comps, const NfCtx& ctx) {
    struct KC {
        Term term;
        std::string key;
        bool removed = false;
    };
    std::vector<KC> live;
    for (auto& c : comps)
        if (!is_nil(c)) live.push_back({c, component_key(c, ctx), false});

    struct Rep {
        std::size_t index;
        std::vector<std::string> body_keys;  // sorted multiset of the body's components
    };
    std::vector<Rep> reps;
    for (std::size_t i = 0; i < live.size(); ++i) {
        const auto* r = as<ReplicateTerm>(live[i].term);
        if (!r) continue;
        std::vector<Term> body_comps;
        flatten_parallel(r->body, body_comps);
        std::vector<std::string> keys;
        for (const auto& bc : body_comps)
            if (!is_nil(bc)) keys.push_back(component_key(bc, ctx));
        if (keys.empty()) continue;
        std::sort(keys.begin(), keys.end());
        reps.push_back({i, std::move(keys)});
    }
    // Fold a copy of `rep`'s body out of the live components, optionally
    // refusing to remove replicate components (they may be folders others
    // still need).
    auto try_fold = [&](const Rep& rep, bool allow_replicates) {
        std::vector<std::size_t> picks;
        std::vector<bool> used(live.size(), false);
        for (const auto& want : rep.body_keys) {
            bool found = false;
            for (std::size_t i = 0; i < live.size(); ++i) {
                if (i == rep.index || live[i].removed || used[i]) continue;
                if (!allow_replicates && as<ReplicateTerm>(live[i].term)) continue;
                if (live[i].key == want) {
                    used[i] = true;
                    picks.push_back(i);
                    found = true;
                    break;
                }
            }
            if (!found) return false;
        }
        for (auto i : picks) live[i].removed = true;
        return true;
    };

    auto run_phase = [&](bool allow_replicates, bool big_first) {
        std::stable_sort(reps.begin(), reps.end(), [&](const Rep& a, const Rep& b) {
            if (a.body_keys.size() != b.body_keys.size())
                return big_first ? a.body_keys.size() > b.body_keys.size()
                                 : a.body_keys.size() < b.body_keys.size();
            return live[a.index].key < live[b.index].key;
        });
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& rep : reps) {
                if (live[rep.index].removed) continue;
                while (try_fold(rep, allow_replicates)) changed = true;
            }
        }
    };
    // Plain copies first (largest bodies claim their components before
    // smaller overlapping folders), then chains of replicate copies.
    run_phase(false, true);
    run_phase(true, false);

    std::vector<Term> kept;
    for (auto& kc : live)
        if (!kc.removed) kept.push_back(kc.term);

    if (kept.empty()) return nil();
    if (kept.size() == 1) return kept[0];
    auto ks = keyed_sorted(std::move(kept), ctx);
    Term acc = ks.front().term;
    for (std::size_t i = 1; i < ks.size(); ++i) acc = parallel(acc, ks[i].term);
    return acc;
}

Term nf(const Term& t, NfCtx& ctx);

template <typename RebuildFn>
Term nf_under(const std::vector<Name>& binders, const Term& inner, NfCtx& ctx, RebuildFn rebuild) {
    std::vector<std::pair<Name, bool>> saved;
    for (const auto& b : binders) {
        Name c = ctx.context_name(b);
        auto it = ctx.env.find(b);
        if (it != ctx.env.end()) {
            saved.emplace_back(it->second, true);
            it->second = c;
        } else {
            saved.emplace_back(Name{}, false);
            ctx.env.emplace(b, c);
        }
    }
    // Rebuild while the binders are still in scope: restriction rebuilding
    // computes component keys that must see the binder as context-bound.
    Term result = rebuild(nf(inner, ctx));
    for (std::size_t i = binders.size(); i-- > 0;) {
        if (saved[i].second)
            ctx.env[binders[i]] = saved[i].first;
        else
            ctx.env.erase(binders[i]);
    }
    return result;
}

Term nf(const Term& t, NfCtx& ctx) {
    if (as<NilTerm>(t)) return t;
    if (const auto* p = as<PrefixTerm>(t)) {
        std::vector<Name> binders;
        if (const auto* r = std::get_if<ReceiveAction>(&p->action))
            binders = r->binders;
        else if (const auto* brr = std::get_if<BroadcastReceiveAction>(&p->action))
            binders.push_back(brr->binder);
        else if (const auto* u = std::get_if<UnobservableAction>(&p->action))
            binders = u->binders;
        Action a = p->action;
        return nf_under(binders, p->cont, ctx,
                        [&](Term body) { return prefix(std::move(a), std::move(body)); });
    }
    if (as<ParallelTerm>(t)) {
        std::vector<Term> comps;
        flatten_parallel(t, comps);
        std::vector<Term> flat;
        for (auto& c : comps) flatten_parallel(nf(c, ctx), flat);
        return normalize_components(std::move(flat), ctx);
    }
    if (as<ChoiceTerm>(t)) {
        std::vector<Term> comps;
        flatten_choice(t, comps);
        std::vector<Term> flat;
        for (auto& c : comps) flatten_choice(nf(c, ctx), flat);
        auto ks = keyed_sorted(std::move(flat), ctx);
        Term acc = ks.front().term;
        for (std::size_t i = 1; i < ks.size(); ++i) acc = choice(acc, ks[i].term);
        return acc;
    }
    if (const auto* p = as<ReplicateTerm>(t)) return replicate(nf(p->body, ctx));
    if (const auto* p = as<RestrictTerm>(t)) {
        Name binder = p->binder;
        return nf_under({binder}, p->body, ctx, [&](Term body) -> Term {
            // scope extrusion: the restriction clings to the components that
            // mention the binder; everything else floats out. A binder used
            // nowhere ends up restricting 0.
            std::vector<Term> comps;
            flatten_parallel(body, comps);
            std::vector<Term> with, without;
            for (auto& c : comps) (occurs_free(c, binder) ? with : without).push_back(c);
            if (without.empty()) return restrict_name(binder, std::move(body));
            Term inner = restrict_name(binder, normalize_components(std::move(with), ctx));
            without.push_back(inner);
            return normalize_components(std::move(without), ctx);
        });
    }
    if (const auto* p = as<MatchTerm>(t)) {
        std::vector<MatchBranch> branches;
        branches.reserve(p->branches.size());
        for (const auto& b : p->branches) branches.push_back({b.label, nf(b.body, ctx)});
        return match(p->subject, std::move(branches));
    }
    return t;  // Call
}

}  // namespace

Term canonical_term(const Term& t) {
    NfCtx ctx;
    return alpha_normalize(nf(t, ctx));
}

Term congruence_nf(const Term& t) {
    NfCtx ctx;
    return nf(t, ctx);
}

bool structurally_congruent(const Term& p, const Term& q) {
    return term_equal(canonical_term(p), canonical_term(q));
}

std::string canonical_key(const Term& t) {
    std::ostringstream os;
    key_term(os, t);
    return os.str();
}

}  // namespace platoon::calc
