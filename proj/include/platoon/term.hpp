#ifndef PLATOON_TERM_HPP
#define PLATOON_TERM_HPP

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "platoon/name.hpp"

namespace platoon::calc {

// ── Actions ─────────────────────────────────────────────────────────────────
// Send/Receive carry polyadic payloads (empty list = pure synchronization).
// Broadcast/BroadcastReceive are the wireless primitives (single name).
// Unobservable is an interface-layer action: label, argument names handed to
// the interface, binder names bound from its reply.

struct SendAction {
    Name chan;
    std::vector<Name> payload;
};

struct ReceiveAction {
    Name chan;
    std::vector<Name> binders;
};

struct BroadcastAction {
    Name payload;
};

struct BroadcastReceiveAction {
    Name binder;
};

struct UnobservableAction {
    std::string label;
    std::vector<Name> args;
    std::vector<Name> binders;
};

using Action = std::variant<SendAction, ReceiveAction, BroadcastAction,
                            BroadcastReceiveAction, UnobservableAction>;

// ── Terms ───────────────────────────────────────────────────────────────────
// Immutable shared tree. Child index convention (used by TermPath):
//   Prefix: cont = 0; Parallel/Choice: left = 0, right = 1;
//   Replicate/Restrict: body = 0; Match: branch i body = i.

struct TermNode;
using Term = std::shared_ptr<const TermNode>;

struct NilTerm {};

struct PrefixTerm {
    Action action;
    Term cont;
};

struct ParallelTerm {
    Term left, right;
};

struct ChoiceTerm {
    Term left, right;
};

struct ReplicateTerm {
    Term body;
};

struct RestrictTerm {
    Name binder;
    Term body;
};

struct MatchBranch {
    Name label;
    Term body;
};

struct MatchTerm {
    Name subject;
    std::vector<MatchBranch> branches;
};

struct CallTerm {
    std::string def_name;  // resolved definitions use "scope::Name" keys
    std::vector<Name> args;
};

struct TermNode {
    std::variant<NilTerm, PrefixTerm, ParallelTerm, ChoiceTerm, ReplicateTerm,
                 RestrictTerm, MatchTerm, CallTerm>
        v;
};

using TermPath = std::vector<std::uint32_t>;

// ── Constructors ────────────────────────────────────────────────────────────

Term nil();
Term prefix(Action a, Term cont);
Term parallel(Term l, Term r);
Term choice(Term l, Term r);
Term replicate(Term body);
Term restrict_name(Name binder, Term body);
// A match whose subject is a constant with no matching branch is a terminated
// term; the constructor collapses it to nil so dead sessions read as 0.
Term match(Name subject, std::vector<MatchBranch> branches);
Term call(std::string def_name, std::vector<Name> args);

// Parallel composition that drops nil operands (used when rebuilding terms
// after a reaction; congruence treats the two forms as equal anyway).
Term parallel_pruned(Term l, Term r);

// ── Inspectors ──────────────────────────────────────────────────────────────

inline bool is_nil(const Term& t) { return std::holds_alternative<NilTerm>(t->v); }

template <typename T>
const T* as(const Term& t) {
    return std::get_if<T>(&t->v);
}

const Term& child(const Term& t, std::uint32_t index);
Term at_path(const Term& t, const TermPath& path);

bool term_equal(const Term& a, const Term& b);
std::uint64_t term_hash(const Term& t);

// Compact single-line rendering for debugging and deterministic sort keys.
// This is not the DSL surface syntax (see platoon/dsl.hpp for that).
std::string term_dump(const Term& t);
std::string action_dump(const Action& a);

// ── Definitions ─────────────────────────────────────────────────────────────

struct Definition {
    std::string name;  // qualified key, e.g. "follower::Ident"
    std::vector<Name> params;
    Term body;
};

class DefinitionEnv {
public:
    void add(Definition def);
    bool contains(const std::string& name) const;
    const Definition* find(const std::string& name) const;
    const Definition& at(const std::string& name) const;
    const std::vector<std::string>& order() const { return order_; }
    std::size_t size() const { return defs_.size(); }

    // Merge another env in; duplicate names throw.
    void merge(const DefinitionEnv& other);

private:
    std::unordered_map<std::string, Definition> defs_;
    std::vector<std::string> order_;
};

struct CalcError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnresolvedCallError : CalcError {
    explicit UnresolvedCallError(const std::string& name)
        : CalcError("unresolved call: " + name) {}
};

struct ArityError : CalcError {
    using CalcError::CalcError;
};

}  // namespace platoon::calc

#endif
