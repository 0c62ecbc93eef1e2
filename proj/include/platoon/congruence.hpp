#ifndef PLATOON_CONGRUENCE_HPP
#define PLATOON_CONGRUENCE_HPP

#include "platoon/term.hpp"

namespace platoon::calc {

// Canonical representative under the structural-congruence laws:
// alpha-equivalence, commutativity/associativity of | and +, P|0 = P,
// !P = P|!P (replication fold), and scope extrusion over parallel components
// not mentioning the binder. Two terms are congruent iff their canonical
// forms are identical.
Term canonical_term(const Term& t);

// The restructuring half of canonical_term (no alpha renaming): flattening,
// sorting, unit/replication folding, extrusion normalization.
Term congruence_nf(const Term& t);

bool structurally_congruent(const Term& p, const Term& q);

// Exact serialization (ids included) of a term; equal strings iff equal
// terms. Used as a deterministic ordering key and for state hashing.
std::string canonical_key(const Term& t);

}  // namespace platoon::calc

#endif
