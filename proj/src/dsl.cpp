#include "platoon/dsl.hpp"

#include <cctype>
#include <functional>
#include <map>
#include <sstream>

namespace platoon::dsl {

using namespace platoon::calc;

std::string format_diagnostic(const ParseDiagnostic& d) {
    std::ostringstream os;
    os << (d.severity == Severity::Error ? "error" : "warning") << " at " << d.line << ":"
       << d.column << ": " << d.message;
    return os.str();
}

std::string qualified_name(const std::string& scope, const std::string& name) {
    return scope.empty() ? name : scope + "::" + name;
}

std::string scope_of(const std::string& qualified) {
    auto pos = qualified.rfind("::");
    return pos == std::string::npos ? "" : qualified.substr(0, pos);
}

std::string base_name(const std::string& qualified) {
    auto pos = qualified.rfind("::");
    return pos == std::string::npos ? qualified : qualified.substr(pos + 2);
}

// ── Lexer ───────────────────────────────────────────────────────────────────

namespace {

enum class Tok {
    LIdent,
    UIdent,
    Number,
    KwNew,
    KwIn,
    KwBcast,
    KwRecv,
    KwTau,
    KwTrue,
    KwFalse,
    LPar,
    RPar,
    LAngle,
    RAngle,
    LBrack,
    RBrack,
    Colon,
    Comma,
    Dot,
    Pipe,
    Plus,
    Bang,
    Eq,
    FatArrow,  // =>
    ThinArrow, // ->
    End,
};

struct Token {
    Tok type = Tok::End;
    std::string text;
    int line = 1, col = 1;
};

struct ParseAbort {
    ParseDiagnostic diag;
};

[[noreturn]] void abort_at(const Token& t, const std::string& msg) {
    throw ParseAbort{{Severity::Error, msg, t.line, t.col}};
}

std::vector<Token> lex(const std::string& text) {
    std::vector<Token> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto push = [&](Tok t, std::string s, int l, int c) { out.push_back({t, std::move(s), l, c}); };
    while (i < text.size()) {
        char c = text[i];
        if (c == '\n') {
            ++line;
            col = 1;
            ++i;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r') {
            ++col;
            ++i;
            continue;
        }
        if (c == '#') {
            while (i < text.size() && text[i] != '\n') ++i;
            continue;
        }
        int tl = line, tc = col;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string s;
            while (i < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_')) {
                s += text[i++];
                ++col;
            }
            // qualified reference: Scope::Name
            while (i + 1 < text.size() && text[i] == ':' && text[i + 1] == ':') {
                s += "::";
                i += 2;
                col += 2;
                while (i < text.size() &&
                       (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_')) {
                    s += text[i++];
                    ++col;
                }
            }
            if (s == "new")
                push(Tok::KwNew, s, tl, tc);
            else if (s == "in")
                push(Tok::KwIn, s, tl, tc);
            else if (s == "bcast")
                push(Tok::KwBcast, s, tl, tc);
            else if (s == "recv")
                push(Tok::KwRecv, s, tl, tc);
            else if (s == "tau")
                push(Tok::KwTau, s, tl, tc);
            else if (s == "True")
                push(Tok::KwTrue, s, tl, tc);
            else if (s == "False")
                push(Tok::KwFalse, s, tl, tc);
            else if (std::isupper(static_cast<unsigned char>(s[0])))
                push(Tok::UIdent, s, tl, tc);
            else
                push(Tok::LIdent, s, tl, tc);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::string s;
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
                s += text[i++];
                ++col;
            }
            push(Tok::Number, s, tl, tc);
            continue;
        }
        auto two = [&](char a, char b) {
            return c == a && i + 1 < text.size() && text[i + 1] == b;
        };
        if (two('=', '>')) {
            push(Tok::FatArrow, "=>", tl, tc);
            i += 2;
            col += 2;
            continue;
        }
        if (two('-', '>')) {
            push(Tok::ThinArrow, "->", tl, tc);
            i += 2;
            col += 2;
            continue;
        }
        Tok t;
        switch (c) {
            case '(': t = Tok::LPar; break;
            case ')': t = Tok::RPar; break;
            case '<': t = Tok::LAngle; break;
            case '>': t = Tok::RAngle; break;
            case '[': t = Tok::LBrack; break;
            case ']': t = Tok::RBrack; break;
            case ':': t = Tok::Colon; break;
            case ',': t = Tok::Comma; break;
            case '.': t = Tok::Dot; break;
            case '|': t = Tok::Pipe; break;
            case '+': t = Tok::Plus; break;
            case '!': t = Tok::Bang; break;
            case '=': t = Tok::Eq; break;
            default:
                throw ParseAbort{{Severity::Error,
                                  std::string("unexpected character '") + c + "'", tl, tc}};
        }
        push(t, std::string(1, c), tl, tc);
        ++i;
        ++col;
    }
    out.push_back({Tok::End, "", line, col});
    return out;
}

// ── Parser ──────────────────────────────────────────────────────────────────

struct CallSite {
    std::string written;
    std::size_t arity;
    int line, col;
};

struct Parser {
    const std::vector<Token>& toks;
    std::size_t pos = 0;
    NameTable& names;
    std::vector<std::unordered_map<std::string, Name>> scopes;
    std::vector<CallSite>* call_sites = nullptr;

    const Token& peek(std::size_t ahead = 0) const {
        return toks[std::min(pos + ahead, toks.size() - 1)];
    }
    const Token& next() { return toks[std::min(pos++, toks.size() - 1)]; }
    bool accept(Tok t) {
        if (peek().type == t) {
            ++pos;
            return true;
        }
        return false;
    }
    Token expect(Tok t, const std::string& what) {
        if (peek().type != t) abort_at(peek(), "expected " + what);
        return next();
    }

    Name resolve(const Token& tok) {
        if (tok.type == Tok::KwTrue) return true_constant();
        if (tok.type == Tok::KwFalse) return false_constant();
        if (tok.type == Tok::Number) return constant(tok.text);
        for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
            auto found = it->find(tok.text);
            if (found != it->end()) return found->second;
        }
        return names.global(tok.text, NameKind::Channel);
    }

    Name bind(const Token& tok, NameKind kind) {
        Name n = names.binder(tok.text, kind);
        scopes.back()[tok.text] = n;
        return n;
    }

    std::vector<Name> parse_arg_list(Tok closer) {
        std::vector<Name> args;
        if (peek().type != closer) {
            for (;;) {
                const Token& t = peek();
                if (t.type != Tok::LIdent && t.type != Tok::Number && t.type != Tok::KwTrue &&
                    t.type != Tok::KwFalse)
                    abort_at(t, "expected a name argument");
                args.push_back(resolve(next()));
                if (!accept(Tok::Comma)) break;
            }
        }
        expect(closer, closer == Tok::RPar ? "')'" : "'>'");
        return args;
    }

    std::vector<Token> parse_binder_tokens(Tok closer) {
        std::vector<Token> binders;
        if (peek().type != closer) {
            for (;;) {
                binders.push_back(expect(Tok::LIdent, "a binder name"));
                if (!accept(Tok::Comma)) break;
            }
        }
        expect(closer, closer == Tok::RPar ? "')'" : "'>'");
        return binders;
    }

    bool starts_prefix() const {
        Tok t = peek().type;
        if (t == Tok::KwTau || t == Tok::KwBcast || t == Tok::KwRecv) return true;
        if (t == Tok::LIdent) {
            Tok n = peek(1).type;
            return n == Tok::LAngle || n == Tok::LPar;
        }
        return false;
    }

    Term parse_par() {
        Term t = parse_choice();
        while (accept(Tok::Pipe)) t = parallel(t, parse_choice());
        return t;
    }

    Term parse_choice() {
        Term t = parse_seq();
        while (accept(Tok::Plus)) t = choice(t, parse_seq());
        return t;
    }

    Term parse_seq() {
        if (accept(Tok::Bang)) return replicate(parse_seq());
        if (peek().type == Tok::KwNew) return parse_new();
        if (starts_prefix()) return parse_prefixed();
        return parse_primary();
    }

    Term parse_new() {
        expect(Tok::KwNew, "'new'");
        Token id = expect(Tok::LIdent, "a channel name after 'new'");
        expect(Tok::KwIn, "'in'");
        scopes.emplace_back();
        Name binder = bind(id, NameKind::Channel);
        Term body = parse_seq();
        scopes.pop_back();
        return restrict_name(binder, body);
    }

    Term parse_prefixed() {
        const Token& t = peek();
        if (t.type == Tok::KwTau) {
            next();
            Token label = expect(Tok::LIdent, "an action label after 'tau'");
            std::vector<Name> args;
            if (accept(Tok::LPar)) args = parse_arg_list(Tok::RPar);
            std::vector<Token> binder_toks;
            if (accept(Tok::ThinArrow)) {
                expect(Tok::LPar, "'(' after '->'");
                binder_toks = parse_binder_tokens(Tok::RPar);
            }
            scopes.emplace_back();
            std::vector<Name> binders;
            for (const auto& b : binder_toks) binders.push_back(bind(b, NameKind::Value));
            Term cont = parse_cont();
            scopes.pop_back();
            return prefix(UnobservableAction{label.text, std::move(args), std::move(binders)},
                          cont);
        }
        if (t.type == Tok::KwBcast) {
            next();
            expect(Tok::LAngle, "'<'");
            Token id = expect(Tok::LIdent, "a name to broadcast");
            Name payload = resolve(id);
            expect(Tok::RAngle, "'>'");
            return prefix(BroadcastAction{payload}, parse_cont());
        }
        if (t.type == Tok::KwRecv) {
            next();
            expect(Tok::LPar, "'('");
            Token id = expect(Tok::LIdent, "a binder");
            expect(Tok::RPar, "')'");
            scopes.emplace_back();
            Name binder = bind(id, NameKind::Value);
            Term cont = parse_cont();
            scopes.pop_back();
            return prefix(BroadcastReceiveAction{binder}, cont);
        }
        // send or receive on a channel
        Token chan_tok = expect(Tok::LIdent, "a channel name");
        Name chan = resolve(chan_tok);
        if (accept(Tok::LAngle)) {
            std::vector<Name> payload = parse_arg_list(Tok::RAngle);
            return prefix(SendAction{chan, std::move(payload)}, parse_cont());
        }
        expect(Tok::LPar, "'<' or '('");
        std::vector<Token> binder_toks = parse_binder_tokens(Tok::RPar);
        scopes.emplace_back();
        std::vector<Name> binders;
        for (const auto& b : binder_toks) binders.push_back(bind(b, NameKind::Value));
        Term cont = parse_cont();
        scopes.pop_back();
        return prefix(ReceiveAction{chan, std::move(binders)}, cont);
    }

    Term parse_cont() {
        if (accept(Tok::Dot)) return parse_seq();
        return nil();  // terminating prefix: the ".0" is implicit
    }

    Term parse_primary() {
        const Token& t = peek();
        bool match_head = (t.type == Tok::LIdent || t.type == Tok::Number ||
                           t.type == Tok::KwTrue || t.type == Tok::KwFalse) &&
                          peek(1).type == Tok::Colon;
        if (t.type == Tok::Number && t.text == "0" && !match_head) {
            next();
            return nil();
        }
        if (t.type == Tok::LPar) {
            next();
            Term inner = parse_par();
            expect(Tok::RPar, "')'");
            return inner;
        }
        if (t.type == Tok::UIdent) {
            Token name = next();
            expect(Tok::LPar, "'(' after process name");
            std::vector<Name> args = parse_arg_list(Tok::RPar);
            if (call_sites)
                call_sites->push_back({name.text, args.size(), name.line, name.col});
            return call(name.text, std::move(args));
        }
        if (match_head) {
            Token subj = next();
            Name subject = resolve(subj);
            expect(Tok::Colon, "':'");
            expect(Tok::LBrack, "'['");
            std::vector<MatchBranch> branches;
            for (;;) {
                const Token& lt = peek();
                if (lt.type != Tok::LIdent && lt.type != Tok::KwTrue && lt.type != Tok::KwFalse &&
                    lt.type != Tok::Number)
                    abort_at(lt, "expected a branch label");
                Name label = resolve(next());
                expect(Tok::FatArrow, "'=>'");
                Term body = parse_par();
                branches.push_back({label, body});
                if (!accept(Tok::Comma)) break;
            }
            expect(Tok::RBrack, "']'");
            return match(subject, std::move(branches));
        }
        abort_at(t, "expected a process");
    }
};

}  // namespace

// ── parse ───────────────────────────────────────────────────────────────────

namespace {

struct RawDef {
    std::string name;
    std::vector<Name> params;
    Term body;
    std::vector<CallSite> calls;
    int line, col;
};

Term rewrite_call_names(const Term& t, const std::unordered_map<std::string, std::string>& m) {
    if (as<NilTerm>(t)) return t;
    if (const auto* p = as<PrefixTerm>(t))
        return prefix(p->action, rewrite_call_names(p->cont, m));
    if (const auto* p = as<ParallelTerm>(t))
        return parallel(rewrite_call_names(p->left, m), rewrite_call_names(p->right, m));
    if (const auto* p = as<ChoiceTerm>(t))
        return choice(rewrite_call_names(p->left, m), rewrite_call_names(p->right, m));
    if (const auto* p = as<ReplicateTerm>(t)) return replicate(rewrite_call_names(p->body, m));
    if (const auto* p = as<RestrictTerm>(t))
        return restrict_name(p->binder, rewrite_call_names(p->body, m));
    if (const auto* p = as<MatchTerm>(t)) {
        std::vector<MatchBranch> branches;
        for (const auto& b : p->branches)
            branches.push_back({b.label, rewrite_call_names(b.body, m)});
        return match(p->subject, std::move(branches));
    }
    const auto& c = std::get<CallTerm>(t->v);
    auto it = m.find(c.def_name);
    return it == m.end() ? t : call(it->second, c.args);
}

}  // namespace

Term rewrite_calls(const Term& t, const std::function<std::string(const std::string&)>& rename) {
    if (as<NilTerm>(t)) return t;
    if (const auto* p = as<PrefixTerm>(t)) return prefix(p->action, rewrite_calls(p->cont, rename));
    if (const auto* p = as<ParallelTerm>(t))
        return parallel(rewrite_calls(p->left, rename), rewrite_calls(p->right, rename));
    if (const auto* p = as<ChoiceTerm>(t))
        return choice(rewrite_calls(p->left, rename), rewrite_calls(p->right, rename));
    if (const auto* p = as<ReplicateTerm>(t)) return replicate(rewrite_calls(p->body, rename));
    if (const auto* p = as<RestrictTerm>(t))
        return restrict_name(p->binder, rewrite_calls(p->body, rename));
    if (const auto* p = as<MatchTerm>(t)) {
        std::vector<MatchBranch> branches;
        for (const auto& b : p->branches) branches.push_back({b.label, rewrite_calls(b.body, rename)});
        return match(p->subject, std::move(branches));
    }
    const auto& c = std::get<CallTerm>(t->v);
    return call(rename(c.def_name), c.args);
}

ParseResult parse(const std::string& text) { return parse(text, ParseOptions{}); }

ParseResult parse(const std::string& text, const ParseOptions& options) {
    ParseResult result;
    result.names = options.names ? options.names : std::make_shared<NameTable>();

    std::vector<RawDef> raw;
    try {
        auto toks = lex(text);
        Parser p{toks, 0, *result.names, {}, nullptr};
        while (p.peek().type != Tok::End) {
            Token name = p.expect(Tok::UIdent, "a definition name");
            if (name.text.find("::") != std::string::npos)
                abort_at(name, "definition names cannot be qualified");
            p.expect(Tok::LPar, "'('");
            p.scopes.emplace_back();
            std::vector<Name> params;
            if (p.peek().type != Tok::RPar) {
                for (;;) {
                    Token pt = p.expect(Tok::LIdent, "a parameter name");
                    params.push_back(p.bind(pt, NameKind::Channel));
                    if (!p.accept(Tok::Comma)) break;
                }
            }
            p.expect(Tok::RPar, "')'");
            p.expect(Tok::Eq, "'='");
            RawDef def;
            def.name = name.text;
            def.line = name.line;
            def.col = name.col;
            def.params = std::move(params);
            p.call_sites = &def.calls;
            def.body = p.parse_par();
            p.call_sites = nullptr;
            p.scopes.pop_back();
            raw.push_back(std::move(def));
        }
    } catch (const ParseAbort& a) {
        result.diagnostics.push_back(a.diag);
        return result;
    }

    // Duplicate names, then qualification of call targets.
    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        auto [it, inserted] = by_name.emplace(raw[i].name, i);
        (void)it;
        if (!inserted)
            result.diagnostics.push_back({Severity::Error,
                                          "duplicate definition: " + raw[i].name, raw[i].line,
                                          raw[i].col});
    }
    if (!result.ok()) return result;

    std::unordered_map<std::string, std::string> rename;
    for (const auto& def : raw) {
        for (const auto& site : def.calls) {
            std::string target;
            if (site.written.find("::") != std::string::npos) {
                target = site.written;  // explicit qualification, resolved by the loader
            } else if (by_name.count(site.written)) {
                target = qualified_name(options.scope, site.written);
            } else if (!options.allow_unresolved) {
                result.diagnostics.push_back({Severity::Error,
                                              "call to undefined process: " + site.written,
                                              site.line, site.col});
                continue;
            } else {
                continue;  // loader resolves later
            }
            rename[site.written] = target;
            if (by_name.count(site.written)) {
                const RawDef& t = raw[by_name[site.written]];
                if (t.params.size() != site.arity)
                    result.diagnostics.push_back(
                        {Severity::Error,
                         site.written + " takes " + std::to_string(t.params.size()) +
                             " arguments, called with " + std::to_string(site.arity),
                         site.line, site.col});
            }
        }
    }
    if (!result.ok()) return result;

    for (auto& def : raw) {
        Definition d;
        d.name = qualified_name(options.scope, def.name);
        d.params = std::move(def.params);
        d.body = rewrite_call_names(def.body, rename);
        result.env.add(std::move(d));
    }
    return result;
}

// ── Pretty printer ──────────────────────────────────────────────────────────

namespace {

enum Level { LvlPar = 0, LvlChoice = 1, LvlSeq = 2 };

std::string print_name(const Name& n) { return n.display; }

std::string print_name_list(const std::vector<Name>& ns) {
    std::string s;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (i) s += ", ";
        s += print_name(ns[i]);
    }
    return s;
}

std::string print_action(const Action& a) {
    if (const auto* s = std::get_if<SendAction>(&a))
        return print_name(s->chan) + "<" + print_name_list(s->payload) + ">";
    if (const auto* r = std::get_if<ReceiveAction>(&a))
        return print_name(r->chan) + "(" + print_name_list(r->binders) + ")";
    if (const auto* br = std::get_if<BroadcastAction>(&a))
        return "bcast<" + print_name(br->payload) + ">";
    if (const auto* brr = std::get_if<BroadcastReceiveAction>(&a))
        return "recv(" + print_name(brr->binder) + ")";
    const auto& u = std::get<UnobservableAction>(a);
    std::string s = "tau " + u.label;
    if (!u.args.empty()) s += "(" + print_name_list(u.args) + ")";
    if (!u.binders.empty()) s += " -> (" + print_name_list(u.binders) + ")";
    return s;
}

std::string print_call_name(const std::string& def_name, const std::string& current_scope) {
    return scope_of(def_name) == current_scope ? base_name(def_name) : def_name;
}

std::string print_proc(const Term& t, int level, const std::string& scope);

std::string print_components(const Term& t, bool is_par, const std::string& scope) {
    std::vector<Term> comps;
    std::string out;
    std::function<void(const Term&)> flat = [&](const Term& u) {
        if (is_par) {
            if (const auto* p = as<ParallelTerm>(u)) {
                flat(p->left);
                flat(p->right);
                return;
            }
        } else if (const auto* c = as<ChoiceTerm>(u)) {
            flat(c->left);
            flat(c->right);
            return;
        }
        comps.push_back(u);
    };
    flat(t);
    for (std::size_t i = 0; i < comps.size(); ++i) {
        if (i) out += is_par ? " | " : " + ";
        out += print_proc(comps[i], is_par ? LvlChoice : LvlSeq, scope);
    }
    return out;
}

std::string print_proc(const Term& t, int level, const std::string& scope) {
    if (as<NilTerm>(t)) return "0";
    if (const auto* p = as<PrefixTerm>(t)) {
        std::string s = print_action(p->action);
        if (!is_nil(p->cont)) s += " . " + print_proc(p->cont, LvlSeq, scope);
        return s;
    }
    if (as<ParallelTerm>(t)) {
        std::string s = print_components(t, true, scope);
        return level > LvlPar ? "(" + s + ")" : s;
    }
    if (as<ChoiceTerm>(t)) {
        std::string s = print_components(t, false, scope);
        return level > LvlChoice ? "(" + s + ")" : s;
    }
    if (const auto* p = as<ReplicateTerm>(t)) return "!" + print_proc(p->body, LvlSeq, scope);
    if (const auto* p = as<RestrictTerm>(t))
        return "new " + print_name(p->binder) + " in (" + print_proc(p->body, LvlPar, scope) + ")";
    if (const auto* p = as<MatchTerm>(t)) {
        std::string s = print_name(p->subject) + ":[";
        for (std::size_t i = 0; i < p->branches.size(); ++i) {
            if (i) s += ", ";
            s += print_name(p->branches[i].label) + " => " +
                 print_proc(p->branches[i].body, LvlPar, scope);
        }
        return s + "]";
    }
    const auto& c = std::get<CallTerm>(t->v);
    return print_call_name(c.def_name, scope) + "(" + print_name_list(c.args) + ")";
}

}  // namespace

std::string print_term(const Term& t, const std::string& current_scope) {
    return print_proc(t, LvlPar, current_scope);
}

std::string pretty_print(const Definition& def) {
    std::string scope = scope_of(def.name);
    std::string s = base_name(def.name) + "(" + print_name_list(def.params) + ") = ";
    s += print_proc(def.body, LvlPar, scope);
    return s;
}

std::string pretty_print(const DefinitionEnv& env) {
    std::string out;
    for (const auto& key : env.order()) {
        out += pretty_print(*env.find(key));
        out += "\n";
    }
    return out;
}

}  // namespace platoon::dsl
