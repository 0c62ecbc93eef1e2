#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "platoon/term_ops.hpp"
#include "support/gen.hpp"

using namespace platoon::calc;

namespace {

Term send(const Name& chan, std::vector<Name> payload, Term cont = nil()) {
    return prefix(SendAction{chan, std::move(payload)}, std::move(cont));
}

Term receive(const Name& chan, std::vector<Name> binders, Term cont = nil()) {
    return prefix(ReceiveAction{chan, std::move(binders)}, std::move(cont));
}

}  // namespace

TEST_CASE("free_names on basic shapes") {
    NameTable tbl;
    Name x = tbl.global("x"), y = tbl.global("y");

    CHECK(free_names(nil()).empty());

    Term t = send(x, {y});
    auto fn = free_names(t);
    CHECK(fn.size() == 2);
    CHECK(fn.count(x) == 1);
    CHECK(fn.count(y) == 1);

    Name bx = tbl.binder("x");
    Term restricted = restrict_name(bx, send(bx, {y}));
    auto fn2 = free_names(restricted);
    CHECK(fn2.size() == 1);
    CHECK(fn2.count(y) == 1);
}

TEST_CASE("free_names: receive binders bind in the continuation") {
    NameTable tbl;
    Name x = tbl.global("x"), a = tbl.global("a");
    Name z = tbl.binder("z");
    Term t = receive(x, {z}, send(z, {a}));
    auto fn = free_names(t);
    CHECK(fn.count(x) == 1);
    CHECK(fn.count(a) == 1);
    CHECK(fn.count(z) == 0);
}

TEST_CASE("substitute leaves binders alone") {
    NameTable tbl;
    Name x = tbl.global("x"), w = tbl.global("w"), a = tbl.global("a");
    Name z = tbl.binder("z");
    FreshNames fresh;

    // x(z).z<a> with {x -> w}  =>  w(z).z<a>
    Term t = receive(x, {z}, send(z, {a}));
    Term got = substitute(t, {{x, w}}, fresh);
    Term want = receive(w, {z}, send(z, {a}));
    CHECK(term_equal(got, want));
}

TEST_CASE("substitute renames free names") {
    NameTable tbl;
    Name z = tbl.global("z"), a = tbl.global("a"), y = tbl.global("y");
    FreshNames fresh;
    Term got = substitute(send(z, {a}), {{z, y}}, fresh);
    CHECK(term_equal(got, send(y, {a})));
}

TEST_CASE("substitute avoids capture under a restriction") {
    // (new y) x<y> where the mapping target is that same y: the bound y must
    // be renamed fresh so the substituted channel is not captured. Checked
    // independently through free names and binder freshness.
    NameTable tbl;
    Name x = tbl.global("x"), y = tbl.global("y");
    FreshNames fresh;

    Term t = restrict_name(y, send(x, {y}));
    Term got = substitute(t, {{x, y}}, fresh);

    auto fn = free_names(got);
    CHECK(fn.size() == 1);
    CHECK(fn.count(y) == 1);

    const auto* r = as<RestrictTerm>(got);
    REQUIRE(r != nullptr);
    CHECK(r->binder != y);  // renamed fresh, not the mapping target
    const auto* p = as<PrefixTerm>(r->body);
    REQUIRE(p != nullptr);
    const auto& sa = std::get<SendAction>(p->action);
    CHECK(sa.chan == y);
    CHECK(sa.payload[0] == r->binder);
}

TEST_CASE("substitution free-name property for injective mappings") {
    // free_names(substitute(t, m)) == m(free_names(t)) for injective m over
    // free names, with fresh targets.
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        platoon::testgen::TermGen gen(seed);
        Term t = gen.gen(4);
        auto fn = free_names(t);

        NameMap m;
        std::uint64_t k = 0;
        for (const auto& n : fn) {
            if (n.is_constant()) continue;
            m[n] = gen.table.binder("tgt" + std::to_string(k++), NameKind::Channel);
        }
        FreshNames fresh;
        Term got = substitute(t, m, fresh);

        NameSet expect;
        for (const auto& n : fn) {
            auto it = m.find(n);
            expect.insert(it == m.end() ? n : it->second);
        }
        auto actual = free_names(got);
        CHECK(actual == expect);
    }
}

TEST_CASE("alpha_normalize gives canonical binder names") {
    NameTable tbl;
    Name a = tbl.binder("a");
    Term t = restrict_name(a, send(a, {}));
    Term n = alpha_normalize(t);
    const auto* r = as<RestrictTerm>(n);
    REQUIRE(r != nullptr);
    CHECK(r->binder.id == kCanonicalBase);
    const auto* p = as<PrefixTerm>(r->body);
    REQUIRE(p != nullptr);
    CHECK(std::get<SendAction>(p->action).chan == r->binder);
}

TEST_CASE("alpha_normalize is idempotent") {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        platoon::testgen::TermGen gen(seed);
        Term t = gen.gen(5);
        Term once = alpha_normalize(t);
        Term twice = alpha_normalize(once);
        CHECK(term_equal(once, twice));
    }
}

namespace {

// Test-local alpha renamer, independent of alpha_normalize: every binder is
// (randomly) replaced by a fresh name, occurrences follow the usual scoping.
Term rename_binders(const Term& t, platoon::SplitMix64& rng, NameTable& tbl, NameMap& env) {
    auto ren = [&](const Name& n) {
        auto it = env.find(n);
        return it == env.end() ? n : it->second;
    };
    auto rens = [&](const std::vector<Name>& ns) {
        std::vector<Name> out;
        for (const auto& n : ns) out.push_back(ren(n));
        return out;
    };
    auto enter = [&](const std::vector<Name>& binders, std::vector<std::pair<Name, bool>>& saved,
                     std::vector<Name>& fresh_binders) {
        for (const auto& b : binders) {
            Name nb = rng.below(2) ? tbl.binder(b.display + "_r", b.kind) : b;
            fresh_binders.push_back(nb);
            auto it = env.find(b);
            if (it != env.end()) {
                saved.emplace_back(it->second, true);
                it->second = nb;
            } else {
                saved.emplace_back(Name{}, false);
                env.emplace(b, nb);
            }
        }
    };
    auto leave = [&](const std::vector<Name>& binders,
                     const std::vector<std::pair<Name, bool>>& saved) {
        for (std::size_t i = binders.size(); i-- > 0;) {
            if (saved[i].second)
                env[binders[i]] = saved[i].first;
            else
                env.erase(binders[i]);
        }
    };

    if (as<NilTerm>(t)) return t;
    if (const auto* p = as<PrefixTerm>(t)) {
        if (const auto* s = std::get_if<SendAction>(&p->action))
            return prefix(SendAction{ren(s->chan), rens(s->payload)},
                          rename_binders(p->cont, rng, tbl, env));
        if (const auto* r = std::get_if<ReceiveAction>(&p->action)) {
            std::vector<std::pair<Name, bool>> saved;
            std::vector<Name> nb;
            enter(r->binders, saved, nb);
            Term cont = rename_binders(p->cont, rng, tbl, env);
            leave(r->binders, saved);
            return prefix(ReceiveAction{ren(r->chan), nb}, cont);
        }
        if (const auto* br = std::get_if<BroadcastAction>(&p->action))
            return prefix(BroadcastAction{ren(br->payload)},
                          rename_binders(p->cont, rng, tbl, env));
        if (const auto* brr = std::get_if<BroadcastReceiveAction>(&p->action)) {
            std::vector<std::pair<Name, bool>> saved;
            std::vector<Name> nb;
            enter({brr->binder}, saved, nb);
            Term cont = rename_binders(p->cont, rng, tbl, env);
            leave({brr->binder}, saved);
            return prefix(BroadcastReceiveAction{nb[0]}, cont);
        }
        const auto& u = std::get<UnobservableAction>(p->action);
        std::vector<std::pair<Name, bool>> saved;
        std::vector<Name> nb;
        enter(u.binders, saved, nb);
        Term cont = rename_binders(p->cont, rng, tbl, env);
        leave(u.binders, saved);
        return prefix(UnobservableAction{u.label, rens(u.args), nb}, cont);
    }
    if (const auto* p = as<ParallelTerm>(t))
        return parallel(rename_binders(p->left, rng, tbl, env),
                        rename_binders(p->right, rng, tbl, env));
    if (const auto* p = as<ChoiceTerm>(t))
        return choice(rename_binders(p->left, rng, tbl, env),
                      rename_binders(p->right, rng, tbl, env));
    if (const auto* p = as<ReplicateTerm>(t))
        return replicate(rename_binders(p->body, rng, tbl, env));
    if (const auto* p = as<RestrictTerm>(t)) {
        std::vector<std::pair<Name, bool>> saved;
        std::vector<Name> nb;
        enter({p->binder}, saved, nb);
        Term body = rename_binders(p->body, rng, tbl, env);
        leave({p->binder}, saved);
        return restrict_name(nb[0], body);
    }
    if (const auto* p = as<MatchTerm>(t)) {
        std::vector<MatchBranch> branches;
        for (const auto& b : p->branches)
            branches.push_back({ren(b.label), rename_binders(b.body, rng, tbl, env)});
        return match(ren(p->subject), std::move(branches));
    }
    const auto& c = std::get<CallTerm>(t->v);
    return call(c.def_name, rens(c.args));
}

}  // namespace

TEST_CASE("alpha_normalize maps alpha-equivalent terms to one form") {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        platoon::testgen::TermGen gen(seed);
        Term t = gen.gen(4);
        platoon::SplitMix64 rng(seed * 7919);
        NameMap env;
        Term renamed = rename_binders(t, rng, gen.table, env);
        CHECK(term_equal(alpha_normalize(t), alpha_normalize(renamed)));
    }
}

TEST_CASE("instantiate checks arity") {
    NameTable tbl;
    Name p0 = tbl.binder("p0");
    Definition def{"D", {p0}, send(p0, {})};
    FreshNames fresh;
    CHECK_THROWS_AS(instantiate(def, {}, fresh), ArityError);
    Name x = tbl.global("x");
    Term got = instantiate(def, {x}, fresh);
    CHECK(term_equal(got, send(x, {})));
}
