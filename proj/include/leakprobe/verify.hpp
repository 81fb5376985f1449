#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leakprobe/expr.hpp"
#include "leakprobe/netlist.hpp"
#include "leakprobe/sim.hpp"

namespace leakprobe {

enum class SymbolKind { Secret, Mask, Share, Public };

std::string_view symbol_kind_name(SymbolKind k);

struct SymbolInfo {
    std::string name;
    uint32_t width = 1;
    SymbolKind kind = SymbolKind::Public;
    std::string secret;  // shares only
    uint32_t index = 0;  // shares only
};

class SymbolTable {
  public:
    void add(SymbolInfo info);
    const SymbolInfo* find(std::string_view name) const;
    const SymbolInfo& at(std::string_view name) const;  // throws UnboundSymbol
    const std::map<std::string, SymbolInfo, std::less<>>& symbols() const { return symbols_; }
    // Share symbol names of `secret`, ordered by share index.
    std::vector<std::string> shares_of(const std::string& secret) const;
    // Secrets that have declared shares, whether or not declared themselves.
    std::vector<std::string> shared_secrets() const;
    uint32_t secret_width(const std::string& secret) const;
    SymbolWidthFn width_fn() const;

  private:
    std::map<std::string, SymbolInfo, std::less<>> symbols_;
};

SymbolTable parse_labels(std::string_view text);
std::string serialize_labels(const SymbolTable& t);
SymbolTable load_labels(const std::string& path);

// Canonical set of terms: sorted, duplicate-free, constants dropped.
class ExprSet {
  public:
    ExprSet() = default;
    explicit ExprSet(std::vector<Expr> members);

    void insert(Expr e);
    void insert(const ExprSet& other);
    const std::vector<Expr>& members() const { return members_; }
    bool empty() const { return members_.empty(); }
    size_t size() const { return members_.size(); }
    std::vector<std::string> rendered() const;
    std::string key() const;

    friend bool operator==(const ExprSet& a, const ExprSet& b) { return a.members_ == b.members_; }

  private:
    std::vector<Expr> members_;
};

enum class VerdictKind { Secure, Leaks, Inconclusive };

std::string_view verdict_name(VerdictKind k);

struct Witness {
    Assignment first;     // secret (or input share) values
    Assignment second;    // differing values giving another distribution
    Assignment publics;
    std::string evidence;
};

struct Verdict {
    VerdictKind kind = VerdictKind::Secure;
    std::optional<Witness> witness;
    std::string reason;

    bool secure() const { return kind == VerdictKind::Secure; }
    static Verdict make_secure() { return Verdict{}; }
    static Verdict inconclusive(std::string why) {
        return Verdict{VerdictKind::Inconclusive, std::nullopt, std::move(why)};
    }
};

inline constexpr uint32_t kDefaultEnumLimit = 20;

Verdict check_substitution(const ExprSet& set, const SymbolTable& labels);
// Throws TooLarge when the set needs more than `limit` symbolic bits.
Verdict check_enumeration(const ExprSet& set, const SymbolTable& labels,
                          uint32_t limit = kDefaultEnumLimit);
// Substitution first, enumeration on Inconclusive when within `limit`.
Verdict check(const ExprSet& set, const SymbolTable& labels, uint32_t limit = kDefaultEnumLimit);

// Number of symbolic bits enumeration would need for `set`.
uint32_t enumeration_bits(const ExprSet& set, const SymbolTable& labels);

struct GadgetSpec {
    std::string name;
    Circuit circuit;
    SymbolTable labels;
    Stimuli stimuli;
    std::vector<std::pair<std::string, std::vector<std::string>>> inputs;  // secret -> share symbols
    std::vector<std::string> outputs;  // output share wires
    std::vector<std::string> randomness;
    uint32_t order = 1;
};

std::string serialize_gadget(const GadgetSpec& g);
// Reads the gadget description; circuit, labels and stimuli are supplied.
GadgetSpec parse_gadget(std::string_view text, Circuit circuit, SymbolTable labels, Stimuli stimuli);

struct ProbeOptions {
    bool glitches = true;
    uint32_t enum_limit = 24;
};

Verdict check_ni(const GadgetSpec& g, uint32_t d, const ProbeOptions& opts);
Verdict check_sni(const GadgetSpec& g, uint32_t d, const ProbeOptions& opts);

} // namespace leakprobe
