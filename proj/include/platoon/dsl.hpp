#ifndef PLATOON_DSL_HPP
#define PLATOON_DSL_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "platoon/term.hpp"

namespace platoon::dsl {

// ── Diagnostics ─────────────────────────────────────────────────────────────

enum class Severity { Error, Warning };

struct ParseDiagnostic {
    Severity severity = Severity::Error;
    std::string message;
    int line = 0;    // 1-based
    int column = 0;  // 1-based
};

std::string format_diagnostic(const ParseDiagnostic& d);

// ── Parsing ─────────────────────────────────────────────────────────────────
// Process definition files:
//
//   def    := NAME "(" params? ")" "=" proc          (NAME is capitalized)
//   proc   := "0" | prefix ("." proc)? | proc "|" proc | proc "+" proc
//           | "!" proc | "new" ident "in" proc
//           | ident ":" "[" branch ("," branch)* "]"
//           | NAME "(" args? ")" | "(" proc ")"
//   prefix := "tau" ident ("(" args ")")? ("->" "(" binders ")")?
//           | ident "<" args? ">" | ident "(" binders? ")"
//           | "bcast" "<" ident ">" | "recv" "(" ident ")"
//   branch := (ident | "True" | "False" | number) "=>" proc
//
// Precedence: prefix sequencing > "!" > "+" > "|"; "." associates right.
// A prefix without a continuation terminates (the ". 0" is implicit).
// Lowercase identifiers are channel/value names, capitalized identifiers are
// process definitions, True/False are reserved constants, and integers are
// value constants. "#" starts a line comment.

struct EntryPoint {
    std::uint32_t owner = 0;
    calc::Term call;
};

struct ParseResult {
    calc::DefinitionEnv env;
    std::vector<EntryPoint> entries;
    std::vector<ParseDiagnostic> diagnostics;
    std::shared_ptr<calc::NameTable> names;

    bool ok() const {
        for (const auto& d : diagnostics)
            if (d.severity == Severity::Error) return false;
        return true;
    }
};

struct ParseOptions {
    // Definitions are stored under "scope::Name" keys when scope is nonempty.
    std::string scope;
    // Leave calls to unknown definitions unresolved (for multi-file loading)
    // instead of reporting them.
    bool allow_unresolved = false;
    // Share one name table across files of a corpus.
    std::shared_ptr<calc::NameTable> names;
};

ParseResult parse(const std::string& text);
ParseResult parse(const std::string& text, const ParseOptions& options);

// ── Printing ────────────────────────────────────────────────────────────────
// Canonical surface form; parse(pretty_print(env)) yields definitions
// structurally congruent to the originals (single-scope envs).

std::string pretty_print(const calc::DefinitionEnv& env);
std::string pretty_print(const calc::Definition& def);
std::string print_term(const calc::Term& t, const std::string& current_scope = "");

// Definition key helpers ("scope::Name").
std::string qualified_name(const std::string& scope, const std::string& name);
std::string scope_of(const std::string& qualified);
std::string base_name(const std::string& qualified);

// Rebuilds a term with every call target renamed through `rename`
// (identity when the function returns the input). Used by corpus loaders to
// resolve cross-file references.
calc::Term rewrite_calls(const calc::Term& t,
                         const std::function<std::string(const std::string&)>& rename);

}  // namespace platoon::dsl

#endif
