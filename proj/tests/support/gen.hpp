#ifndef PLATOON_TESTS_GEN_HPP
#define PLATOON_TESTS_GEN_HPP

// Hand-rolled generators for property-style tests. Everything is driven by a
// SplitMix64 seed so failures reproduce exactly.

#include <string>
#include <vector>

#include "platoon/rng.hpp"
#include "platoon/term.hpp"
#include "platoon/term_ops.hpp"

namespace platoon::testgen {

using namespace platoon::calc;

struct TermGen {
    SplitMix64 rng;
    NameTable table;
    std::vector<Name> globals;
    std::uint64_t binder_serial = 0;

    explicit TermGen(std::uint64_t seed) : rng(seed) {
        for (const char* g : {"a", "b", "c", "d", "e", "f"})
            globals.push_back(table.global(g, NameKind::Channel));
    }

    Name pick_name(const std::vector<Name>& scope) {
        std::uint64_t total = globals.size() + scope.size() + 2;
        std::uint64_t k = rng.below(total);
        if (k < globals.size()) return globals[k];
        k -= globals.size();
        if (k < scope.size()) return scope[k];
        return (k - scope.size()) == 0 ? true_constant() : false_constant();
    }

    Name pick_channel(const std::vector<Name>& scope) {
        // channels only: no constants
        std::uint64_t total = globals.size() + scope.size();
        std::uint64_t k = rng.below(total);
        if (k < globals.size()) return globals[k];
        return scope[k - globals.size()];
    }

    Name fresh_binder(const char* base) {
        return table.binder(std::string(base) + std::to_string(binder_serial++), NameKind::Value);
    }

    std::vector<Name> pick_names(const std::vector<Name>& scope, std::size_t max) {
        std::vector<Name> out;
        std::size_t n = rng.below(max + 1);
        for (std::size_t i = 0; i < n; ++i) out.push_back(pick_name(scope));
        return out;
    }

    Term gen(int depth) {
        std::vector<Name> scope;
        return gen(depth, scope);
    }

    Term gen(int depth, std::vector<Name>& scope) {
        if (depth <= 0) return rng.below(3) == 0 ? nil() : gen_prefix(0, scope);
        switch (rng.below(8)) {
            case 0: return nil();
            case 1:
            case 2: return gen_prefix(depth - 1, scope);
            case 3: return parallel(gen(depth - 1, scope), gen(depth - 1, scope));
            case 4: return choice(gen_prefix(depth - 1, scope), gen_prefix(depth - 1, scope));
            case 5: return replicate(gen(depth - 1, scope));
            case 6: {
                Name b = table.binder("nu" + std::to_string(binder_serial++), NameKind::Channel);
                scope.push_back(b);
                Term body = gen(depth - 1, scope);
                scope.pop_back();
                return restrict_name(b, body);
            }
            default: {
                Name subject = pick_name(scope);
                std::vector<MatchBranch> branches;
                std::size_t n = 1 + rng.below(2);
                for (std::size_t i = 0; i < n; ++i)
                    branches.push_back({i == 0 ? true_constant() : false_constant(),
                                        gen(depth - 1, scope)});
                return match(subject, std::move(branches));
            }
        }
    }

    Term gen_prefix(int depth, std::vector<Name>& scope) {
        switch (rng.below(5)) {
            case 0:
                return prefix(SendAction{pick_channel(scope), pick_names(scope, 2)},
                              gen(depth, scope));
            case 1: {
                Name chan = pick_channel(scope);
                std::size_t n = rng.below(3);
                std::vector<Name> binders;
                for (std::size_t i = 0; i < n; ++i) binders.push_back(fresh_binder("rb"));
                for (const auto& b : binders) scope.push_back(b);
                Term cont = gen(depth, scope);
                for (std::size_t i = 0; i < n; ++i) scope.pop_back();
                return prefix(ReceiveAction{chan, std::move(binders)}, cont);
            }
            case 2:
                return prefix(BroadcastAction{pick_channel(scope)}, gen(depth, scope));
            case 3: {
                Name b = fresh_binder("wb");
                scope.push_back(b);
                Term cont = gen(depth, scope);
                scope.pop_back();
                return prefix(BroadcastReceiveAction{b}, cont);
            }
            default: {
                static const char* labels[] = {"drive", "keep_dist", "ping"};
                std::vector<Name> args = pick_names(scope, 2);
                std::size_t n = rng.below(2);
                std::vector<Name> binders;
                for (std::size_t i = 0; i < n; ++i) binders.push_back(fresh_binder("tb"));
                for (const auto& b : binders) scope.push_back(b);
                Term cont = gen(depth, scope);
                for (std::size_t i = 0; i < n; ++i) scope.pop_back();
                return prefix(UnobservableAction{labels[rng.below(3)], std::move(args),
                                                 std::move(binders)},
                              cont);
            }
        }
    }
};

// ── Structural helpers for law-rewriting oracles ────────────────────────────

// Pure structural replacement (no reaction semantics): rebuilds the spine.
inline Term replace_at(const Term& t, const TermPath& path, std::size_t depth, Term repl) {
    if (depth == path.size()) return repl;
    std::uint32_t i = path[depth];
    if (const auto* p = as<PrefixTerm>(t))
        return prefix(p->action, replace_at(p->cont, path, depth + 1, std::move(repl)));
    if (const auto* p = as<ParallelTerm>(t))
        return i == 0 ? parallel(replace_at(p->left, path, depth + 1, std::move(repl)), p->right)
                      : parallel(p->left, replace_at(p->right, path, depth + 1, std::move(repl)));
    if (const auto* p = as<ChoiceTerm>(t))
        return i == 0 ? choice(replace_at(p->left, path, depth + 1, std::move(repl)), p->right)
                      : choice(p->left, replace_at(p->right, path, depth + 1, std::move(repl)));
    if (const auto* p = as<ReplicateTerm>(t))
        return replicate(replace_at(p->body, path, depth + 1, std::move(repl)));
    if (const auto* p = as<RestrictTerm>(t))
        return restrict_name(p->binder, replace_at(p->body, path, depth + 1, std::move(repl)));
    if (const auto* p = as<MatchTerm>(t)) {
        std::vector<MatchBranch> branches = p->branches;
        branches[i].body = replace_at(branches[i].body, path, depth + 1, std::move(repl));
        return match(p->subject, std::move(branches));
    }
    throw CalcError("replace_at: bad path");
}

inline void all_paths(const Term& t, TermPath& cur, std::vector<TermPath>& out) {
    out.push_back(cur);
    if (const auto* p = as<PrefixTerm>(t)) {
        cur.push_back(0);
        all_paths(p->cont, cur, out);
        cur.pop_back();
        return;
    }
    if (const auto* p = as<ParallelTerm>(t)) {
        cur.push_back(0);
        all_paths(p->left, cur, out);
        cur.back() = 1;
        all_paths(p->right, cur, out);
        cur.pop_back();
        return;
    }
    if (const auto* p = as<ChoiceTerm>(t)) {
        cur.push_back(0);
        all_paths(p->left, cur, out);
        cur.back() = 1;
        all_paths(p->right, cur, out);
        cur.pop_back();
        return;
    }
    if (const auto* p = as<ReplicateTerm>(t)) {
        cur.push_back(0);
        all_paths(p->body, cur, out);
        cur.pop_back();
        return;
    }
    if (const auto* p = as<RestrictTerm>(t)) {
        cur.push_back(0);
        all_paths(p->body, cur, out);
        cur.pop_back();
        return;
    }
    if (const auto* p = as<MatchTerm>(t)) {
        for (std::uint32_t i = 0; i < p->branches.size(); ++i) {
            cur.push_back(i);
            all_paths(p->branches[i].body, cur, out);
            cur.pop_back();
        }
    }
}

// One random rewrite with a structural-congruence law; the result is
// congruent to the input by construction.
inline Term law_rewrite(const Term& t, SplitMix64& rng) {
    TermPath cur;
    std::vector<TermPath> paths;
    all_paths(t, cur, paths);
    const TermPath& at = paths[rng.below(paths.size())];
    Term node = at_path(t, at);

    switch (rng.below(5)) {
        case 0:  // commutativity
            if (const auto* p = as<ParallelTerm>(node))
                return replace_at(t, at, 0, parallel(p->right, p->left));
            if (const auto* c = as<ChoiceTerm>(node))
                return replace_at(t, at, 0, choice(c->right, c->left));
            break;
        case 1:  // associativity rotation
            if (const auto* p = as<ParallelTerm>(node)) {
                if (const auto* l = as<ParallelTerm>(p->left))
                    return replace_at(t, at, 0,
                                      parallel(l->left, parallel(l->right, p->right)));
                if (const auto* r = as<ParallelTerm>(p->right))
                    return replace_at(t, at, 0,
                                      parallel(parallel(p->left, r->left), r->right));
            }
            if (const auto* c = as<ChoiceTerm>(node)) {
                if (const auto* l = as<ChoiceTerm>(c->left))
                    return replace_at(t, at, 0, choice(l->left, choice(l->right, c->right)));
                if (const auto* r = as<ChoiceTerm>(c->right))
                    return replace_at(t, at, 0, choice(choice(c->left, r->left), r->right));
            }
            break;
        case 2:  // unit: insert or remove a 0 in parallel
            if (const auto* p = as<ParallelTerm>(node)) {
                if (is_nil(p->left)) return replace_at(t, at, 0, p->right);
                if (is_nil(p->right)) return replace_at(t, at, 0, p->left);
            }
            return replace_at(t, at, 0,
                              rng.below(2) ? parallel(node, nil()) : parallel(nil(), node));
        case 3:  // replication unfold: !P -> P | !P
            if (const auto* r = as<ReplicateTerm>(node))
                return replace_at(t, at, 0, parallel(r->body, node));
            break;
        case 4:  // scope extrusion when the side condition holds
            if (const auto* rs = as<RestrictTerm>(node)) {
                if (const auto* p = as<ParallelTerm>(rs->body)) {
                    if (!occurs_free(p->right, rs->binder))
                        return replace_at(
                            t, at, 0, parallel(restrict_name(rs->binder, p->left), p->right));
                    if (!occurs_free(p->left, rs->binder))
                        return replace_at(
                            t, at, 0, parallel(p->left, restrict_name(rs->binder, p->right)));
                }
            }
            break;
    }
    return t;
}

inline Term law_rewrite_n(Term t, SplitMix64& rng, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) t = law_rewrite(t, rng);
    return t;
}

}  // namespace platoon::testgen

#endif
