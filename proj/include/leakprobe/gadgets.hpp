#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leakprobe/netlist.hpp"
#include "leakprobe/sim.hpp"
#include "leakprobe/verify.hpp"

namespace leakprobe {

struct Fixture {
    std::string name;
    Circuit circuit;
    SymbolTable labels;
    Stimuli stimuli;
    std::optional<GadgetSpec> gadget;
};

enum class GadgetScheme { Dom, Isw };

struct GadgetConfig {
    GadgetScheme scheme = GadgetScheme::Dom;
    uint32_t order = 1;
    bool register_cross_terms = true;  // DOM only
    std::string mask_prefix = "r";     // masks are named <prefix><i><j>
};

// Masked AND of two Boolean-shared secrets a and b (shares a0..ad, b0..bd).
// Output shares are c0..cd; two frames with the inputs held.
Fixture gen_gadget(const GadgetConfig& cfg);
Fixture gen_dom_and(uint32_t d);
Fixture gen_isw_and(uint32_t d);

Fixture gen_fig5();
Fixture gen_fig6();
Fixture gen_fig7();
std::vector<Fixture> gen_counterexamples();

struct RandomCircuitParams {
    uint32_t max_gates = 30;
    uint32_t max_width = 4;
    uint32_t max_symbols = 6;  // 1-bit symbols
    uint32_t max_inputs = 4;
    uint32_t max_input_bits = 10;
    uint32_t max_registers = 3;
    uint32_t cycles = 4;
    bool splits = true;
    bool arithmetic = true;
};

// Deterministic per (seed, params).
Fixture gen_random_circuit(uint64_t seed, const RandomCircuitParams& p = {});

// Writes <dir>/<name>.json, .labels.json, .stim.jsonl and, for gadgets,
// .gadget.json. Returns the written paths.
std::vector<std::string> write_fixture(const Fixture& f, const std::string& dir);
// Reads a fixture back; the gadget description is optional.
Fixture load_fixture(const std::string& dir, const std::string& name);

} // namespace leakprobe
