#include "platoon/term.hpp"

#include <algorithm>
#include <sstream>

#include "platoon/rng.hpp"

namespace platoon::calc {

namespace {

Term make(TermNode node) { return std::make_shared<const TermNode>(std::move(node)); }

const Term& shared_nil() {
    static const Term n = make(TermNode{NilTerm{}});
    return n;
}

}  // namespace

Term nil() { return shared_nil(); }

Term prefix(Action a, Term cont) { return make(TermNode{PrefixTerm{std::move(a), std::move(cont)}}); }

Term parallel(Term l, Term r) { return make(TermNode{ParallelTerm{std::move(l), std::move(r)}}); }

Term choice(Term l, Term r) { return make(TermNode{ChoiceTerm{std::move(l), std::move(r)}}); }

Term replicate(Term body) { return make(TermNode{ReplicateTerm{std::move(body)}}); }

Term restrict_name(Name binder, Term body) {
    return make(TermNode{RestrictTerm{std::move(binder), std::move(body)}});
}

Term match(Name subject, std::vector<MatchBranch> branches) {
    if (subject.is_constant()) {
        bool any = false;
        for (const auto& b : branches) {
            if (b.label == subject) { any = true; break; }
        }
        if (!any) return nil();  // stuck on a ground subject: terminated
    }
    return make(TermNode{MatchTerm{std::move(subject), std::move(branches)}});
}

Term call(std::string def_name, std::vector<Name> args) {
    return make(TermNode{CallTerm{std::move(def_name), std::move(args)}});
}

Term parallel_pruned(Term l, Term r) {
    if (is_nil(l)) return r;
    if (is_nil(r)) return l;
    return parallel(std::move(l), std::move(r));
}

const Term& child(const Term& t, std::uint32_t index) {
    if (const auto* p = as<PrefixTerm>(t)) return p->cont;
    if (const auto* p = as<ParallelTerm>(t)) return index == 0 ? p->left : p->right;
    if (const auto* p = as<ChoiceTerm>(t)) return index == 0 ? p->left : p->right;
    if (const auto* p = as<ReplicateTerm>(t)) return p->body;
    if (const auto* p = as<RestrictTerm>(t)) return p->body;
    if (const auto* p = as<MatchTerm>(t)) return p->branches.at(index).body;
    throw CalcError("child(): node has no children");
}

Term at_path(const Term& t, const TermPath& path) {
    Term cur = t;
    for (auto idx : path) cur = child(cur, idx);
    return cur;
}

// ── Equality / hashing ──────────────────────────────────────────────────────

namespace {

bool action_equal(const Action& a, const Action& b) {
    if (a.index() != b.index()) return false;
    if (const auto* s = std::get_if<SendAction>(&a)) {
        const auto& o = std::get<SendAction>(b);
        return s->chan == o.chan && s->payload == o.payload;
    }
    if (const auto* r = std::get_if<ReceiveAction>(&a)) {
        const auto& o = std::get<ReceiveAction>(b);
        return r->chan == o.chan && r->binders == o.binders;
    }
    if (const auto* br = std::get_if<BroadcastAction>(&a)) {
        return br->payload == std::get<BroadcastAction>(b).payload;
    }
    if (const auto* brr = std::get_if<BroadcastReceiveAction>(&a)) {
        return brr->binder == std::get<BroadcastReceiveAction>(b).binder;
    }
    const auto& u = std::get<UnobservableAction>(a);
    const auto& o = std::get<UnobservableAction>(b);
    return u.label == o.label && u.args == o.args && u.binders == o.binders;
}

std::uint64_t name_hash64(const Name& n) {
    if (n.is_constant()) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : n.display) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
        return h ^ 0x5851f42d4c957f2dULL;
    }
    return n.id * 0x9e3779b97f4a7c15ULL + 1;
}

std::uint64_t action_hash(const Action& a) {
    std::uint64_t h = hash_combine(0x517cc1b727220a95ULL, a.index());
    if (const auto* s = std::get_if<SendAction>(&a)) {
        h = hash_combine(h, name_hash64(s->chan));
        for (const auto& n : s->payload) h = hash_combine(h, name_hash64(n));
    } else if (const auto* r = std::get_if<ReceiveAction>(&a)) {
        h = hash_combine(h, name_hash64(r->chan));
        for (const auto& n : r->binders) h = hash_combine(h, name_hash64(n));
    } else if (const auto* br = std::get_if<BroadcastAction>(&a)) {
        h = hash_combine(h, name_hash64(br->payload));
    } else if (const auto* brr = std::get_if<BroadcastReceiveAction>(&a)) {
        h = hash_combine(h, name_hash64(brr->binder));
    } else {
        const auto& u = std::get<UnobservableAction>(a);
        for (char c : u.label) h = hash_combine(h, static_cast<unsigned char>(c));
        for (const auto& n : u.args) h = hash_combine(h, name_hash64(n));
        h = hash_combine(h, 0xabcd);
        for (const auto& n : u.binders) h = hash_combine(h, name_hash64(n));
    }
    return h;
}

}  // namespace

bool term_equal(const Term& a, const Term& b) {
    if (a.get() == b.get()) return true;
    if (a->v.index() != b->v.index()) return false;
    if (as<NilTerm>(a)) return true;
    if (const auto* p = as<PrefixTerm>(a)) {
        const auto& o = std::get<PrefixTerm>(b->v);
        return action_equal(p->action, o.action) && term_equal(p->cont, o.cont);
    }
    if (const auto* p = as<ParallelTerm>(a)) {
        const auto& o = std::get<ParallelTerm>(b->v);
        return term_equal(p->left, o.left) && term_equal(p->right, o.right);
    }
    if (const auto* p = as<ChoiceTerm>(a)) {
        const auto& o = std::get<ChoiceTerm>(b->v);
        return term_equal(p->left, o.left) && term_equal(p->right, o.right);
    }
    if (const auto* p = as<ReplicateTerm>(a)) {
        return term_equal(p->body, std::get<ReplicateTerm>(b->v).body);
    }
    if (const auto* p = as<RestrictTerm>(a)) {
        const auto& o = std::get<RestrictTerm>(b->v);
        return p->binder == o.binder && term_equal(p->body, o.body);
    }
    if (const auto* p = as<MatchTerm>(a)) {
        const auto& o = std::get<MatchTerm>(b->v);
        if (!(p->subject == o.subject) || p->branches.size() != o.branches.size()) return false;
        for (std::size_t i = 0; i < p->branches.size(); ++i) {
            if (!(p->branches[i].label == o.branches[i].label)) return false;
            if (!term_equal(p->branches[i].body, o.branches[i].body)) return false;
        }
        return true;
    }
    const auto& c = std::get<CallTerm>(a->v);
    const auto& o = std::get<CallTerm>(b->v);
    return c.def_name == o.def_name && c.args == o.args;
}

std::uint64_t term_hash(const Term& t) {
    std::uint64_t h = hash_combine(0x2545f4914f6cdd1dULL, t->v.index());
    if (as<NilTerm>(t)) return h;
    if (const auto* p = as<PrefixTerm>(t)) {
        h = hash_combine(h, action_hash(p->action));
        return hash_combine(h, term_hash(p->cont));
    }
    if (const auto* p = as<ParallelTerm>(t)) {
        h = hash_combine(h, term_hash(p->left));
        return hash_combine(h, term_hash(p->right));
    }
    if (const auto* p = as<ChoiceTerm>(t)) {
        h = hash_combine(h, term_hash(p->left));
        return hash_combine(h, term_hash(p->right));
    }
    if (const auto* p = as<ReplicateTerm>(t)) return hash_combine(h, term_hash(p->body));
    if (const auto* p = as<RestrictTerm>(t)) {
        h = hash_combine(h, name_hash64(p->binder));
        return hash_combine(h, term_hash(p->body));
    }
    if (const auto* p = as<MatchTerm>(t)) {
        h = hash_combine(h, name_hash64(p->subject));
        for (const auto& b : p->branches) {
            h = hash_combine(h, name_hash64(b.label));
            h = hash_combine(h, term_hash(b.body));
        }
        return h;
    }
    const auto& c = std::get<CallTerm>(t->v);
    for (char ch : c.def_name) h = hash_combine(h, static_cast<unsigned char>(ch));
    for (const auto& n : c.args) h = hash_combine(h, name_hash64(n));
    return h;
}

// ── Debug dump ──────────────────────────────────────────────────────────────

namespace {

void dump_names(std::ostringstream& os, const std::vector<Name>& ns) {
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (i) os << ",";
        os << ns[i].display;
    }
}

}  // namespace

std::string action_dump(const Action& a) {
    std::ostringstream os;
    if (const auto* s = std::get_if<SendAction>(&a)) {
        os << s->chan.display << "<";
        dump_names(os, s->payload);
        os << ">";
    } else if (const auto* r = std::get_if<ReceiveAction>(&a)) {
        os << r->chan.display << "(";
        dump_names(os, r->binders);
        os << ")";
    } else if (const auto* br = std::get_if<BroadcastAction>(&a)) {
        os << "bcast<" << br->payload.display << ">";
    } else if (const auto* brr = std::get_if<BroadcastReceiveAction>(&a)) {
        os << "recv(" << brr->binder.display << ")";
    } else {
        const auto& u = std::get<UnobservableAction>(a);
        os << "tau " << u.label;
        if (!u.args.empty()) {
            os << "(";
            dump_names(os, u.args);
            os << ")";
        }
        if (!u.binders.empty()) {
            os << "->(";
            dump_names(os, u.binders);
            os << ")";
        }
    }
    return os.str();
}

std::string term_dump(const Term& t) {
    if (as<NilTerm>(t)) return "0";
    if (const auto* p = as<PrefixTerm>(t)) return action_dump(p->action) + "." + term_dump(p->cont);
    if (const auto* p = as<ParallelTerm>(t))
        return "(" + term_dump(p->left) + " | " + term_dump(p->right) + ")";
    if (const auto* p = as<ChoiceTerm>(t))
        return "(" + term_dump(p->left) + " + " + term_dump(p->right) + ")";
    if (const auto* p = as<ReplicateTerm>(t)) return "!" + term_dump(p->body);
    if (const auto* p = as<RestrictTerm>(t))
        return "(new " + p->binder.display + ")(" + term_dump(p->body) + ")";
    if (const auto* p = as<MatchTerm>(t)) {
        std::string s = p->subject.display + ":[";
        for (std::size_t i = 0; i < p->branches.size(); ++i) {
            if (i) s += ", ";
            s += p->branches[i].label.display + " => " + term_dump(p->branches[i].body);
        }
        return s + "]";
    }
    const auto& c = std::get<CallTerm>(t->v);
    std::ostringstream os;
    os << c.def_name << "(";
    dump_names(os, c.args);
    os << ")";
    return os.str();
}

// ── DefinitionEnv ───────────────────────────────────────────────────────────

void DefinitionEnv::add(Definition def) {
    if (defs_.count(def.name)) throw CalcError("duplicate definition: " + def.name);
    order_.push_back(def.name);
    defs_.emplace(def.name, std::move(def));
}

bool DefinitionEnv::contains(const std::string& name) const { return defs_.count(name) != 0; }

const Definition* DefinitionEnv::find(const std::string& name) const {
    auto it = defs_.find(name);
    return it == defs_.end() ? nullptr : &it->second;
}

const Definition& DefinitionEnv::at(const std::string& name) const {
    const Definition* d = find(name);
    if (!d) throw UnresolvedCallError(name);
    return *d;
}

void DefinitionEnv::merge(const DefinitionEnv& other) {
    for (const auto& name : other.order_) add(other.at(name));
}

}  // namespace platoon::calc
