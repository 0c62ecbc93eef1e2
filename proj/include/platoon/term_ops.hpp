#ifndef PLATOON_TERM_OPS_HPP
#define PLATOON_TERM_OPS_HPP

#include <unordered_map>
#include <unordered_set>

#include "platoon/term.hpp"

namespace platoon::calc {

using NameSet = std::unordered_set<Name, NameHash>;
using NameMap = std::unordered_map<Name, Name, NameHash>;

// Names not bound by any enclosing restriction or receive/tau binder.
NameSet free_names(const Term& t);
bool occurs_free(const Term& t, const Name& n);

// Capture-avoiding substitution. Bound names colliding with mapping targets
// are alpha-renamed via `fresh`.
Term substitute(const Term& t, const NameMap& mapping, FreshNames& fresh);

// Canonical renaming of all bound names by traversal order; idempotent and
// alpha-invariant (two alpha-equivalent terms yield identical results).
Term alpha_normalize(const Term& t);

// As above, but free occurrences listed in `seed` are rewritten first.
// Used to make ordering keys insensitive to enclosing binder identities.
Term alpha_normalize_seeded(const Term& t, const NameMap& seed);

// Instantiate a definition body with actual arguments.
Term instantiate(const Definition& def, const std::vector<Name>& args, FreshNames& fresh);

}  // namespace platoon::calc

#endif
