#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "leakprobe/bitvec.hpp"

namespace leakprobe {

using WireId = uint32_t;

enum class GateKind : uint8_t {
    BitNot,
    BitAnd,
    BitOr,
    BitXor,
    Ucmp,
    Scmp,
    Equal,
    NotEqual,
    Add,
    Sub,
    Neg,
    Mul,
    Shl,
    Shr,
    Sshr,
    Trunc,
    Zext,
    Sext,
    Blit,
    Repeat,
    IsZero,
    IsNeg,
    MemRead,
    MemWrite,
    Mux,
};

std::string_view gate_kind_name(GateKind k);
std::optional<GateKind> gate_kind_from_name(std::string_view name);

struct SrcLoc {
    std::string file;
    int line = 0;
    friend bool operator==(const SrcLoc&, const SrcLoc&) = default;
};

struct Wire {
    WireId id = 0;
    std::string name;
    uint32_t width = 1;
    std::optional<SrcLoc> src;
    friend bool operator==(const Wire&, const Wire&) = default;
};

// Only the fields meaningful for the gate kind are set:
//   shl/shr/sshr  amount (when the shift has a single input)
//   blit          offset (bit position of the source inside the target)
//   repeat        count
//   mem_*         memory
struct GateParams {
    std::optional<uint32_t> amount;
    uint32_t offset = 0;
    uint32_t count = 0;
    std::string memory;
    friend bool operator==(const GateParams&, const GateParams&) = default;
};

// Input orders: mux [selector, in0, in1]; blit [target, source];
// mem_read [index]; mem_write [index, value, enable].
struct Gate {
    GateKind kind;
    std::vector<WireId> inputs;
    WireId output = 0;
    GateParams params;
    friend bool operator==(const Gate&, const Gate&) = default;
};

struct Register {
    WireId input = 0;
    WireId output = 0;
    BitVec init;
    friend bool operator==(const Register&, const Register&) = default;
};

struct SplitBit {
    WireId wire = 0;
    uint32_t index = 0;
    friend bool operator==(const SplitBit&, const SplitBit&) = default;
};

struct Split {
    std::string parent;
    uint32_t width = 0;
    std::vector<SplitBit> bits;
    friend bool operator==(const Split&, const Split&) = default;
};

struct Memory {
    std::string id;
    uint32_t depth = 0;
    uint32_t width = 0;
    std::vector<BitVec> init;  // empty means all zero
    friend bool operator==(const Memory&, const Memory&) = default;
};

class Circuit {
  public:
    WireId add_wire(const std::string& name, uint32_t width, std::optional<SrcLoc> src = {});
    void add_input(WireId w) { inputs.push_back(w); }
    void add_output(WireId w) { outputs.push_back(w); }
    uint32_t add_gate(GateKind kind, std::vector<WireId> ins, WireId out, GateParams params = {});
    void add_register(WireId in, WireId out, BitVec init);
    void add_split(Split s) { splits.push_back(std::move(s)); }
    void add_memory(Memory m) { memories.push_back(std::move(m)); }

    // Checks arities, widths, driver uniqueness and split coverage, and fills
    // the driver tables. Throws the netlist errors.
    void validate();

    std::optional<WireId> find(std::string_view name) const;
    WireId wire_id(std::string_view name) const;  // throws DanglingReference
    const Wire& wire(WireId id) const { return wires[id]; }
    const Memory* memory(std::string_view id) const;

    bool is_input(WireId w) const;
    // Gate index driving `w`, or -1.
    int32_t driver_gate(WireId w) const { return driver_gate_[w]; }
    // Register index driving `w`, or -1.
    int32_t driver_register(WireId w) const { return driver_reg_[w]; }

    std::vector<Wire> wires;
    std::vector<Gate> gates;
    std::vector<Register> registers;
    std::vector<WireId> inputs;
    std::vector<WireId> outputs;
    std::vector<Split> splits;
    std::vector<Memory> memories;

    friend bool operator==(const Circuit& a, const Circuit& b) {
        return a.wires == b.wires && a.gates == b.gates && a.registers == b.registers &&
               a.inputs == b.inputs && a.outputs == b.outputs && a.splits == b.splits &&
               a.memories == b.memories;
    }

  private:
    std::unordered_map<std::string, WireId> by_name_;
    std::vector<int32_t> driver_gate_;
    std::vector<int32_t> driver_reg_;
    std::vector<char> is_input_;
};

Circuit parse_netlist(std::string_view text);
std::string serialize_netlist(const Circuit& c);
Circuit load_netlist(const std::string& path);

struct Schedule {
    std::vector<uint32_t> order;  // gate indices
};

Schedule validate_and_schedule(const Circuit& c);

struct MuxRole {
    WireId selector;
    WireId in0;
    WireId in1;
};

struct StructuralIndex {
    std::set<WireId> register_input_wires;
    std::set<WireId> primary_output_wires;
    std::set<WireId> split_wires;
    std::map<uint32_t, MuxRole> mux_roles;
    std::vector<std::vector<uint32_t>> fanout;  // per wire, gate indices reading it
    std::vector<std::vector<uint32_t>> register_fanout;  // per wire, registers reading it
};

StructuralIndex structural_index(const Circuit& c);

std::string read_file(const std::string& path);

} // namespace leakprobe
