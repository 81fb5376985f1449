#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "leakprobe/netlist.hpp"
#include "leakprobe/sim.hpp"
#include "leakprobe/verify.hpp"

namespace leakprobe {

enum class Granularity { Bit, SupportWise };

struct LeakageModel {
    bool glitches = true;
    bool transitions = false;
    bool use_stability = true;
    Granularity granularity = Granularity::Bit;
    uint32_t order = 1;
    bool overapprox = false;

    // (1,1) with stability, support-wise probes and over-approximation.
    static LeakageModel rr1sw();
    // "value", "transition", "glitch" or "transition+glitch".
    std::string facet() const;
    bool uses_overapprox() const { return overapprox && glitches && transitions; }
    // Throws MalformedDocument on inconsistent combinations.
    void validate() const;
};

// Probe set for one valuation pair; `rank` selects a single bit.
ExprSet expr_set_for(const Valuation& cur, const Valuation& prev, const LeakageModel& model,
                     std::optional<uint32_t> rank = std::nullopt);

// Valuation of a split parent rebuilt from its 1-bit members.
Valuation recombine_split_wires(const Split& s, const std::vector<Valuation>& vals);

// A verification target: a wire, or a split parent (SupportWise only).
struct Target {
    enum class Kind { Wire, Split };
    Kind kind = Kind::Wire;
    uint32_t id = 0;  // wire id or index into Circuit::splits

    friend auto operator<=>(const Target&, const Target&) = default;
};

struct SelectionOptions {
    bool reduce = true;               // apply the stability-aware reduction when sound
    bool past_stability_rule = true;  // over-approximation: also consider cycle t-1
};

std::vector<Target> wires_to_verify(const Circuit& c, const StructuralIndex& index, const LeakageModel& model,
                                    const SimState& state, const SelectionOptions& opts = {});

// One named set per target: one per bit at Bit granularity.
struct NamedSet {
    std::string label;
    std::optional<SrcLoc> src;
    ExprSet set;
};

std::vector<NamedSet> target_sets(const Circuit& c, const Target& t, const LeakageModel& model,
                                  const SimState& state);

std::string cache_key(const ExprSet& set);

class VerdictCache {
  public:
    std::optional<Verdict> get(const std::string& key) const;
    // Inserts unless present; returns the stored verdict.
    Verdict put(const std::string& key, Verdict v);
    size_t size() const;

  private:
    mutable std::mutex mu_;
    std::unordered_map<std::string, Verdict> map_;
};

struct ReportEntry {
    uint32_t cycle = 0;
    std::string wire;
    std::optional<SrcLoc> src;
    std::string facet;
    VerdictKind verdict = VerdictKind::Secure;
    std::vector<std::string> exprs;
    std::optional<Witness> witness;
    std::string reason;
};

struct ReportSummary {
    uint32_t cycles = 0;
    uint32_t leaking_cycles = 0;
    uint64_t expr_to_verify = 0;
    uint64_t verified_expr = 0;
    uint64_t cache_hits = 0;
    uint64_t trivial_skipped = 0;
};

struct LeakReport {
    std::vector<ReportEntry> entries;
    std::vector<std::pair<uint32_t, std::string>> warnings;  // (cycle, message)
    ReportSummary summary;

    bool leaks() const;
    std::string to_jsonl() const;
};

struct RunOptions {
    uint32_t enum_limit = kDefaultEnumLimit;
    bool stop_on_first_leak = false;
    bool use_cache = true;
    uint32_t jobs = 1;
    bool reset_unstable = false;
    bool keep_going = false;
    bool record_secure = true;  // keep Secure entries in the report
    SelectionOptions selection;
    MemoryHook hook;
    // Called after each simulated cycle, before verification.
    std::function<void(const SimState&)> on_cycle;
};

LeakReport run(const Circuit& c, const Stimuli& stimuli, const SymbolTable& labels, const LeakageModel& model,
               const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// higher order

enum class DupletMode { Spatial, Temporal, Mixed };

std::string_view duplet_mode_name(DupletMode m);

uint64_t binomial(uint64_t n, uint64_t k);  // saturates at UINT64_MAX

// Calls fn with each size-d index combination of [0, p) in lexicographic
// order; fn returns false to stop. Throws TooMany when C(p, d) > cap.
// Returns the number of combinations produced.
uint64_t enumerate_duplets(uint32_t p, uint32_t d, uint64_t cap,
                           const std::function<bool(const std::vector<uint32_t>&)>& fn);

struct Position {
    uint32_t cycle = 0;
    std::string label;
    ExprSet set;
};

struct HigherOrderOptions {
    DupletMode mode = DupletMode::Mixed;
    uint64_t max_duplets = 50'000'000;
    bool stop_on_first_leak = false;
    RunOptions run;
};

struct HigherOrderReport {
    uint32_t order = 2;
    DupletMode mode = DupletMode::Mixed;
    uint64_t positions = 0;
    uint64_t duplets = 0;  // combinations enumerated
    uint64_t expected_duplets = 0;  // sum of C(p, d) over groups
    uint64_t leaking = 0;
    uint64_t inconclusive = 0;
    uint64_t cache_hits = 0;
    std::vector<std::string> first_leak;  // labels of the first non-secure d-uplet
    std::optional<Verdict> first_verdict;

    bool secure() const { return leaking == 0 && inconclusive == 0; }
    std::string to_json() const;
};

// Non-trivial probe positions of every wire at every cycle (no reduction).
std::vector<Position> collect_positions(const Circuit& c, const Stimuli& stimuli, const LeakageModel& model,
                                        const RunOptions& opts = {});

HigherOrderReport run_higher_order(const Circuit& c, const Stimuli& stimuli, const SymbolTable& labels,
                                   const LeakageModel& model, uint32_t d, const HigherOrderOptions& opts = {});

} // namespace leakprobe
