#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "platoon/congruence.hpp"
#include "platoon/dsl.hpp"
#include "support/gen.hpp"

using namespace platoon;
using namespace platoon::calc;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// File content with comments and blank lines stripped: the definition lines.
std::string definition_lines(const std::string& text) {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        out += line;
        out += "\n";
    }
    return out;
}

}  // namespace

TEST_CASE("parse the leader program") {
    auto res = dsl::parse("Leader() = tau drive . Leader()");
    REQUIRE(res.ok());
    REQUIRE(res.env.size() == 1);
    const Definition& def = res.env.at("Leader");
    const auto* p = as<PrefixTerm>(def.body);
    REQUIRE(p != nullptr);
    const auto& u = std::get<UnobservableAction>(p->action);
    CHECK(u.label == "drive");
    CHECK(u.args.empty());
    CHECK(u.binders.empty());
    const auto* c = as<CallTerm>(p->cont);
    REQUIRE(c != nullptr);
    CHECK(c->def_name == "Leader");
}

TEST_CASE("parse restriction, broadcast and replication") {
    auto res = dsl::parse(
        "Listen(x) = x(y) . y(id) . 0\n"
        "Joiner() = new x in (bcast<x> | !Listen(x))");
    REQUIRE(res.ok());
    const Definition& def = res.env.at("Joiner");
    const auto* r = as<RestrictTerm>(def.body);
    REQUIRE(r != nullptr);
    const auto* par = as<ParallelTerm>(r->body);
    REQUIRE(par != nullptr);
    const auto* b = as<PrefixTerm>(par->left);
    REQUIRE(b != nullptr);
    CHECK(std::get<BroadcastAction>(b->action).payload == r->binder);
    const auto* rep = as<ReplicateTerm>(par->right);
    REQUIRE(rep != nullptr);
    const auto* call_node = as<CallTerm>(rep->body);
    REQUIRE(call_node != nullptr);
    CHECK(call_node->def_name == "Listen");
    CHECK(call_node->args == std::vector<Name>{r->binder});
}

TEST_CASE("empty program parses to an empty environment") {
    auto res = dsl::parse("");
    CHECK(res.ok());
    CHECK(res.env.size() == 0);
    CHECK(res.diagnostics.empty());
}

TEST_CASE("undefined call yields a positioned diagnostic") {
    auto res = dsl::parse("A() = tau t . B()");
    REQUIRE_FALSE(res.ok());
    REQUIRE(res.diagnostics.size() == 1);
    CHECK(res.diagnostics[0].message == "call to undefined process: B");
    CHECK(res.diagnostics[0].line == 1);
    CHECK(res.diagnostics[0].column == 15);
}

TEST_CASE("arity mismatch is diagnosed") {
    auto res = dsl::parse("A(x) = x<>\nB() = A()");
    REQUIRE_FALSE(res.ok());
    REQUIRE(res.diagnostics.size() == 1);
    CHECK(res.diagnostics[0].message.find("arguments") != std::string::npos);
}

TEST_CASE("diagnostics are deterministic") {
    const std::string bad = "A() = tau t . B()\nC() = D(x, y)";
    auto r1 = dsl::parse(bad);
    auto r2 = dsl::parse(bad);
    REQUIRE(r1.diagnostics.size() == r2.diagnostics.size());
    for (std::size_t i = 0; i < r1.diagnostics.size(); ++i) {
        CHECK(r1.diagnostics[i].message == r2.diagnostics[i].message);
        CHECK(r1.diagnostics[i].line == r2.diagnostics[i].line);
        CHECK(r1.diagnostics[i].column == r2.diagnostics[i].column);
    }
}

TEST_CASE("syntax errors carry positions") {
    auto res = dsl::parse("A() = tau t . )");
    REQUIRE_FALSE(res.ok());
    CHECK(res.diagnostics[0].line == 1);
    CHECK(res.diagnostics[0].column == 15);
}

TEST_CASE("match parses with reserved constants and other labels") {
    auto res = dsl::parse("A(flag, v) = flag:[True => tau go, False => 0, 3 => v<>]");
    REQUIRE(res.ok());
    const auto* m = as<MatchTerm>(res.env.at("A").body);
    REQUIRE(m != nullptr);
    CHECK(m->branches.size() == 3);
    CHECK(m->branches[0].label == true_constant());
    CHECK(m->branches[1].label == false_constant());
    CHECK(m->branches[2].label == constant("3"));
}

TEST_CASE("precedence: prefix over bang over plus over pipe") {
    auto res = dsl::parse(
        "P() = tau a . 0\n"
        "Q() = !tau a . P() | tau b . P() + tau c . P()");
    REQUIRE(res.ok());
    const Definition& q = res.env.at("Q");
    // top is |, right side is +, prefixes bind under !
    const auto* par = as<ParallelTerm>(q.body);
    REQUIRE(par != nullptr);
    CHECK(as<ReplicateTerm>(par->left) != nullptr);
    CHECK(as<ChoiceTerm>(par->right) != nullptr);
}

TEST_CASE("pretty_print round-trips the shipped corpus files byte-for-byte") {
    for (const char* path : {"protocols/leader.pic", "protocols/follower.pic",
                             "protocols/joiner.pic"}) {
        std::string text = slurp(path);
        dsl::ParseOptions opts;
        opts.allow_unresolved = true;  // joiner references the follower program
        auto res = dsl::parse(text, opts);
        REQUIRE_MESSAGE(res.ok(), path);
        CHECK(dsl::pretty_print(res.env) == definition_lines(text));
    }
}

TEST_CASE("round-trip: parse(pretty_print(env)) is congruent, on random envs") {
    for (std::uint64_t seed = 1; seed <= 120; ++seed) {
        // build random well-formed envs out of generated bodies plus calls
        platoon::testgen::TermGen gen(seed);
        DefinitionEnv env;
        std::size_t ndefs = 1 + gen.rng.below(3);
        std::vector<std::string> names;
        for (std::size_t i = 0; i < ndefs; ++i) names.push_back("D" + std::to_string(i));
        for (std::size_t i = 0; i < ndefs; ++i) {
            Definition d;
            d.name = names[i];
            Name param = gen.table.binder("p", NameKind::Channel);
            d.params = {param};
            std::vector<Name> scope{param};
            Term body = gen.gen(3, scope);
            // splice in a call to another definition to exercise resolution
            if (gen.rng.below(2))
                body = parallel(body, call(names[gen.rng.below(ndefs)], {param}));
            d.body = body;
            env.add(std::move(d));
        }
        std::string printed = dsl::pretty_print(env);
        auto res = dsl::parse(printed);
        REQUIRE_MESSAGE(res.ok(), printed);
        REQUIRE(res.env.size() == env.size());
        for (const auto& key : env.order()) {
            const Definition& orig = env.at(key);
            const Definition& back = res.env.at(key);
            REQUIRE(back.params.size() == orig.params.size());
            // compare bodies with params aligned: substitute reparsed params
            // by the original ones, then check congruence
            NameMap m;
            for (std::size_t i = 0; i < orig.params.size(); ++i)
                m[back.params[i]] = orig.params[i];
            // globals re-interned by the fresh parse table carry new ids;
            // align them with the original table's ids by display text
            for (const auto& n : free_names(back.body)) {
                if (n.is_constant() || m.count(n)) continue;
                bool is_param = false;
                for (const auto& p : back.params) is_param |= (p == n);
                if (!is_param) m[n] = gen.table.global(n.display, n.kind);
            }
            FreshNames fresh;
            Term aligned = substitute(back.body, m, fresh);
            CHECK_MESSAGE(structurally_congruent(aligned, orig.body),
                          (printed + "\n!= reparse of " + key));
        }
    }
}

TEST_CASE("nil continuations print without a trailing .0 and reparse") {
    NameTable tbl;
    Name x = tbl.global("x");
    DefinitionEnv env;
    env.add({"A", {}, prefix(SendAction{x, {}}, nil())});
    std::string printed = dsl::pretty_print(env);
    CHECK(printed == "A() = x<>\n");
    auto res = dsl::parse(printed);
    REQUIRE(res.ok());
    CHECK(structurally_congruent(res.env.at("A").body, env.at("A").body));
}

TEST_CASE("nil body prints as 0") {
    DefinitionEnv env;
    env.add({"Stop", {}, nil()});
    CHECK(dsl::pretty_print(env) == "Stop() = 0\n");
}

TEST_CASE("scoped parsing qualifies definitions and locals") {
    dsl::ParseOptions opts;
    opts.scope = "joiner";
    opts.allow_unresolved = true;
    auto res = dsl::parse("Merge(y) = y<> . Follower()\nGo(y) = Merge(y)", opts);
    REQUIRE(res.ok());
    CHECK(res.env.contains("joiner::Merge"));
    const auto* p = as<PrefixTerm>(res.env.at("joiner::Merge").body);
    REQUIRE(p != nullptr);
    const auto* c = as<CallTerm>(p->cont);
    REQUIRE(c != nullptr);
    CHECK(c->def_name == "Follower");  // unresolved, loader will fix
    const auto* g = as<CallTerm>(res.env.at("joiner::Go").body);
    REQUIRE(g != nullptr);
    CHECK(g->def_name == "joiner::Merge");  // local call qualified
}
