#ifndef PLATOON_NAME_HPP
#define PLATOON_NAME_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "platoon/rng.hpp"

namespace platoon::calc {

// ── Name ────────────────────────────────────────────────────────────────────
// The atomic calculus primitive: channel, value variable, or constant.
// Channels and value variables compare by id (each binder and each interned
// global gets a unique id); constants compare by their text so that True,
// False and vehicle-id literals built anywhere are interchangeable.

enum class NameKind : std::uint8_t { Channel, Value, Constant };

// Id ranges. Parse-time ids start low; names minted during execution start
// at kFirstRuntimeId (the SystemTerm fresh counter); canonical names assigned
// by alpha_normalize live above kCanonicalBase. The ranges never overlap.
inline constexpr std::uint64_t kFirstTableId = 16;
inline constexpr std::uint64_t kFirstRuntimeId = 1ULL << 32;
inline constexpr std::uint64_t kCanonicalBase = 1ULL << 62;

struct Name {
    std::uint64_t id = 0;
    NameKind kind = NameKind::Value;
    std::string display;

    bool is_constant() const { return kind == NameKind::Constant; }

    bool operator==(const Name& o) const {
        if (is_constant() != o.is_constant()) return false;
        if (is_constant()) return display == o.display;
        return id == o.id;
    }
    bool operator!=(const Name& o) const { return !(*this == o); }
};

struct NameHash {
    std::size_t operator()(const Name& n) const {
        if (n.is_constant()) return std::hash<std::string>{}(n.display) ^ 0x5851f42d4c957f2dULL;
        return std::hash<std::uint64_t>{}(n.id);
    }
};

// Strict ordering usable for deterministic sorts (constants before ids).
struct NameLess {
    bool operator()(const Name& a, const Name& b) const {
        if (a.is_constant() != b.is_constant()) return a.is_constant();
        if (a.is_constant()) return a.display < b.display;
        return a.id < b.id;
    }
};

inline Name constant(std::string text) {
    return Name{0, NameKind::Constant, std::move(text)};
}

inline Name true_constant() { return constant("True"); }
inline Name false_constant() { return constant("False"); }

// ── NameTable ───────────────────────────────────────────────────────────────
// Per-program interning of global names plus minting of binder ids. One table
// per loaded program/run; terms from different tables must not be mixed.

class NameTable {
public:
    NameTable() = default;

    // Same display text always yields the same global name.
    Name global(const std::string& display, NameKind kind = NameKind::Channel) {
        auto it = globals_.find(display);
        if (it != globals_.end()) return it->second;
        Name n{next_id_++, kind, display};
        globals_.emplace(display, n);
        return n;
    }

    // Every call yields a distinct name (binders, params).
    Name binder(const std::string& display, NameKind kind = NameKind::Channel) {
        return Name{next_id_++, kind, display};
    }

    std::uint64_t next_id() const { return next_id_; }

private:
    std::unordered_map<std::string, Name> globals_;
    std::uint64_t next_id_ = kFirstTableId;
};

// ── FreshNames ──────────────────────────────────────────────────────────────
// Monotone counter for names minted during execution (scope extrusion,
// capture-avoiding renames, symbolic interface results). SystemTerm embeds
// the counter value so runs replay deterministically.

class FreshNames {
public:
    explicit FreshNames(std::uint64_t start = kFirstRuntimeId) : next_(start) {}

    Name fresh(const Name& like) {
        std::uint64_t id = next_++;
        return Name{id, like.kind == NameKind::Constant ? NameKind::Value : like.kind,
                    base_display(like.display) + "#" + std::to_string(id - kFirstRuntimeId)};
    }

    Name fresh(const std::string& display, NameKind kind = NameKind::Value) {
        std::uint64_t id = next_++;
        return Name{id, kind, base_display(display) + "#" + std::to_string(id - kFirstRuntimeId)};
    }

    std::uint64_t counter() const { return next_; }

private:
    static std::string base_display(const std::string& d) {
        auto pos = d.find('#');
        return pos == std::string::npos ? d : d.substr(0, pos);
    }

    std::uint64_t next_;
};

}  // namespace platoon::calc

#endif
