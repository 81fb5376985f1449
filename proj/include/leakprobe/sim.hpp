#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leakprobe/bitvec.hpp"
#include "leakprobe/expr.hpp"
#include "leakprobe/netlist.hpp"

namespace leakprobe {

// Sorted (ExprLess), duplicate-free set of 1-bit terms. Never holds only
// constants: such sets are normalised to empty.
using LeakSet = std::vector<Expr>;

LeakSet make_leakset(std::vector<Expr> members);
void leakset_insert(LeakSet& into, const LeakSet& from);

struct Valuation {
    BitVec conc;
    Expr symb;
    std::vector<LeakSet> lset;  // one per bit
    BitVec stab;                // 1 = stable

    uint32_t width() const { return conc.width(); }
    bool stable(uint32_t i) const { return stab.bit(i); }
};

struct MemoryState {
    std::vector<Expr> cells;
    std::vector<uint64_t> conc;
    std::vector<Expr> prev_cells;  // contents before the last clock edge
    std::vector<char> changed;     // written at the last clock edge
};

struct SimState {
    uint32_t cycle = 0;  // cycle held in `current`; meaningless before the first step
    bool started = false;
    Assignment witness;
    std::vector<Valuation> current;
    std::vector<Valuation> previous;
    std::vector<Valuation> register_state;  // captured input valuation per register
    std::map<std::string, MemoryState> memories;
    std::vector<std::string> warnings;                       // current cycle only
    std::vector<std::pair<std::string, std::string>> violations;  // (wire, detail), current cycle
};

struct InputValue {
    enum class Kind { Const, Symbol, Term };
    Kind kind = Kind::Const;
    BitVec value;
    std::string symbol;
    Expr term;
};

struct StimulusFrame {
    uint32_t cycle = 0;
    std::map<std::string, InputValue> inputs;
};

// Memory whose concrete contents are T[i ^ m] ^ m' for a public table T and
// masks m, m' taken from the witness.
struct MaskedTable {
    std::string memory;
    std::string table;
    std::string in_mask;
    std::string out_mask;
    uint32_t width = 0;  // element width, taken from the memory
    std::vector<uint64_t> values;
};

struct Stimuli {
    Assignment witness;
    std::vector<StimulusFrame> frames;
    std::vector<MaskedTable> masked_tables;
};

// JSONL: header {"witness":{...}, "masked_tables":[...]?}, then one frame per
// line. Input values are {"const":"0b.."}, {"symbol":name} or
// {"expr":"<prefix term>"}; symbol widths come from the witness.
Stimuli parse_stimuli(std::string_view text, const Circuit& c);
std::string serialize_stimuli(const Stimuli& s, const Circuit& c);
Stimuli load_stimuli(const std::string& path, const Circuit& c);

using MemoryHook =
    std::function<std::optional<Expr>(const std::string& memory, Expr index, const SimState& state)>;

MemoryHook masked_table_hook(std::vector<MaskedTable> tables);

struct SimOptions {
    bool reset_unstable = false;
    bool stability = true;    // false: no bit is ever considered stable
    bool keep_going = false;  // record consistency violations instead of throwing
    MemoryHook hook;
};

// Fresh state with memories loaded; masked tables registered and their
// concrete contents derived from the witness.
SimState init_state(const Circuit& c, const Assignment& witness,
                    const std::vector<MaskedTable>& masked_tables = {});

// Simulates one cycle. After the call `state.current` holds the new cycle and
// `state.previous` the one before (a copy of current at cycle 0).
void step_cycle(const Circuit& c, const Schedule& sched, SimState& state,
                const StimulusFrame& frame, const SimOptions& opts = {});

// Throws ConsistencyViolation naming the first wire whose symbolic value does
// not evaluate to its concrete value under the witness.
void consistency_check(const Circuit& c, const SimState& state);

// Per-gate domain functions; exposed for tests.
BitVec conc_eval(const Circuit& c, const Gate& g, const std::vector<BitVec>& ins);
Expr symb_eval(const Circuit& c, const Gate& g, const std::vector<Expr>& ins);

class Simulator {
  public:
    Simulator(const Circuit& c, const Stimuli& stimuli, SimOptions opts = {});

    bool done() const { return next_ >= stimuli_.frames.size(); }
    void step();
    const SimState& state() const { return state_; }
    SimState& state() { return state_; }
    const Circuit& circuit() const { return circuit_; }
    const Schedule& schedule() const { return sched_; }

  private:
    const Circuit& circuit_;
    Schedule sched_;
    Stimuli stimuli_;
    SimOptions opts_;
    SimState state_;
    size_t next_ = 0;
};

std::string render_leakset(const LeakSet& s);

} // namespace leakprobe
