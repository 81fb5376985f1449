// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failing criteria.
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "leakprobe/gadgets.hpp"
#include "leakprobe/manager.hpp"

using namespace leakprobe;

namespace {

// Pinned limits.
constexpr double kFigureSeconds = 1.0;
constexpr double kGadgetSeconds = 300.0;
constexpr double kHigherOrderSeconds = 600.0;
constexpr int kRandomSets = 1000;
constexpr uint32_t kMaxSymbolicBits = 16;
constexpr int kReductionCircuits = 200;
constexpr uint32_t kReductionCycles = 4;
constexpr int kGlitchCircuits = 100;
constexpr uint32_t kMaxToggledBits = 10;
constexpr int kCoherenceCircuits = 200;

struct Outcome {
    bool pass = true;
    std::string detail;
};

struct Check {
    Outcome& out;
    void operator()(bool ok, const std::string& what) {
        if (ok) return;
        if (out.pass) out.detail = what;
        out.pass = false;
    }
};

LeakageModel model(bool g, bool t, Granularity gr = Granularity::Bit, bool over = false) {
    LeakageModel m;
    m.glitches = g;
    m.transitions = t;
    m.granularity = gr;
    m.overapprox = over;
    return m;
}

std::vector<SimState> simulate(const Fixture& f, SimOptions o = {}) {
    Simulator sim(f.circuit, f.stimuli, std::move(o));
    std::vector<SimState> out;
    while (!sim.done()) {
        sim.step();
        out.push_back(sim.state());
    }
    return out;
}

std::set<std::string> flagged(const LeakReport& r, uint32_t cycle) {
    std::set<std::string> out;
    for (auto& e : r.entries)
        if (e.cycle == cycle && e.verdict != VerdictKind::Secure) out.insert(e.wire);
    return out;
}

std::set<uint32_t> leaking_cycles(const LeakReport& r) {
    std::set<uint32_t> out;
    for (auto& e : r.entries)
        if (e.verdict != VerdictKind::Secure) out.insert(e.cycle);
    return out;
}

// ---------------------------------------------------------------------------
// 1-3: counterexample fixtures

struct Row {
    const char* wire;
    const char* symb;
    const char* lset;
    int stab;
};

void expect_rows(Check& check, const Fixture& f, const std::vector<SimState>& st, uint32_t cycle,
                 const std::vector<Row>& rows) {
    for (const Row& r : rows) {
        const Valuation& v = st.at(cycle).current[f.circuit.wire_id(r.wire)];
        std::string got = render(v.symb) + " " + render_leakset(v.lset[0]) + " " + std::to_string(v.stab.bits());
        std::string want = std::string(r.symb) + " " + r.lset + " " + std::to_string(r.stab);
        check(got == want, f.name + " cycle " + std::to_string(cycle) + " " + r.wire + ": " + got + " != " + want);
    }
}

const char* kKm = "OP_XOR(SYMB(k), SYMB(m))";

Outcome crit_fig5() {
    Outcome o;
    Check check{o};
    Fixture f = gen_fig5();
    auto st = simulate(f);
    check(st.size() == 2, "two cycles");
    expect_rows(check, f, st, 0,
                {{"i0", "CST(0b0)", "{}", 0}, {"i1", kKm, "{OP_XOR(SYMB(k), SYMB(m))}", 0},
                 {"o0", "CST(0b0)", "{OP_XOR(SYMB(k), SYMB(m))}", 0}});
    expect_rows(check, f, st, 1,
                {{"i0", "CST(0b1)", "{}", 0}, {"i1", "SYMB(m)", "{SYMB(m)}", 0}, {"o0", "SYMB(m)", "{SYMB(m)}", 0}});
    for (bool g : {false, true}) {
        LeakReport r = run(f.circuit, f.stimuli, f.labels, model(g, true));
        check(flagged(r, 1).count("i1") == 1, "i1 not flagged at t");
        check(flagged(r, 1).count("o0") == 0, "o0 flagged at t");
        check(r.summary.leaking_cycles == 1, "leaking cycle count");
    }
    o.detail = o.pass ? "table exact; i1 flagged at t under (0,1) and (1,1), o0 not" : o.detail;
    return o;
}

Outcome crit_fig6() {
    Outcome o;
    Check check{o};
    Fixture f = gen_fig6();
    LeakReport sw = run(f.circuit, f.stimuli, f.labels, model(true, false, Granularity::SupportWise));
    LeakReport bit = run(f.circuit, f.stimuli, f.labels, model(true, false, Granularity::Bit));
    bool parent = false;
    for (auto& e : sw.entries)
        if (e.wire == "i" && e.verdict == VerdictKind::Leaks && e.witness) parent = true;
    check(parent, "recombined parent 'i' not flagged support-wise");
    for (auto& e : sw.entries)
        check(e.wire == "i" || e.verdict == VerdictKind::Secure, "unexpected sw leak on " + e.wire);
    check(!bit.leaks(), "bit granularity flagged a wire");
    check(bit.entries.size() > 0, "bit granularity verified nothing");
    o.detail = o.pass ? "sw flags parent i; bit flags none of " + std::to_string(bit.entries.size()) + " entries"
                      : o.detail;
    return o;
}

Outcome crit_fig7() {
    Outcome o;
    Check check{o};
    Fixture f = gen_fig7();
    auto st = simulate(f);
    expect_rows(check, f, st, 0,
                {{"i0", "CST(0b0)", "{}", 1}, {"i1", kKm, "{OP_XOR(SYMB(k), SYMB(m))}", 0}, {"o0", "CST(0b0)", "{}", 1}});
    expect_rows(check, f, st, 1,
                {{"i0", "CST(0b1)", "{}", 0}, {"i1", "SYMB(m)", "{SYMB(m)}", 0}, {"o0", "SYMB(m)", "{SYMB(m)}", 0}});
    LeakageModel m = model(true, true, Granularity::Bit, true);
    LeakReport with = run(f.circuit, f.stimuli, f.labels, m);
    RunOptions off;
    off.selection.past_stability_rule = false;
    LeakReport without = run(f.circuit, f.stimuli, f.labels, m, off);
    check(flagged(with, 1).count("i1") == 1, "i1 not flagged with the t-1 rule");
    check(flagged(without, 1).count("i1") == 0, "negative control flagged i1");
    o.detail = o.pass ? "i1 flagged at t; negative control (rule disabled) misses it" : o.detail;
    return o;
}

// ---------------------------------------------------------------------------
// 4: NI / SNI gadget verdicts

Outcome crit_gadgets() {
    Outcome o;
    Check check{o};
    struct Case {
        const char* name;
        bool dom, sni, glitches, secure;
    };
    const Case cases[] = {
        {"DOM NI", true, false, false, true},   {"DOM NI glitch", true, false, true, true},
        {"DOM SNI", true, true, false, true},   {"DOM SNI glitch", true, true, true, false},
        {"ISW NI", false, false, false, true},  {"ISW NI glitch", false, false, true, false},
        {"ISW SNI", false, true, false, true},  {"ISW SNI glitch", false, true, true, false},
    };
    GadgetSpec dom = *gen_dom_and(2).gadget, isw = *gen_isw_and(2).gadget;
    std::string summary;
    for (const Case& c : cases) {
        ProbeOptions po{c.glitches, 24};
        const GadgetSpec& g = c.dom ? dom : isw;
        Verdict v = c.sni ? check_sni(g, 2, po) : check_ni(g, 2, po);
        check(v.secure() == c.secure, std::string(c.name) + " gave " + std::string(verdict_name(v.kind)));
        if (!c.secure) {
            check(v.kind == VerdictKind::Leaks && v.witness && !v.witness->evidence.empty() &&
                      v.witness->first != v.witness->second,
                  std::string(c.name) + " has no enumeration witness");
        }
        summary += std::string(summary.empty() ? "" : ", ") + c.name + (v.secure() ? " ok" : " x");
    }
    o.detail = o.pass ? summary : o.detail;
    return o;
}

// ---------------------------------------------------------------------------
// 5: higher order

uint64_t pascal(uint64_t n, uint64_t k) {
    std::vector<std::vector<uint64_t>> t(n + 1, std::vector<uint64_t>(k + 1, 0));
    for (uint64_t i = 0; i <= n; ++i) {
        t[i][0] = 1;
        for (uint64_t j = 1; j <= std::min(i, k); ++j) t[i][j] = t[i - 1][j - 1] + (j <= i - 1 ? t[i - 1][j] : 0);
    }
    return t[n][k];
}

// Non-trivial probe positions counted straight from the simulator.
uint64_t count_positions(const Fixture& f, const LeakageModel& m) {
    uint64_t n = 0;
    for (const SimState& st : simulate(f))
        for (WireId w = 0; w < f.circuit.wires.size(); ++w)
            for (uint32_t i = 0; i < f.circuit.wire(w).width; ++i) {
                bool any = false;
                for (Expr e : st.current[w].lset[i]) any = any || !e.is_const();
                n += any;
            }
    return n;
}

Outcome crit_higher_order() {
    Outcome o;
    Check check{o};
    LeakageModel m = model(true, false);
    Fixture d1 = gen_dom_and(1), d2 = gen_dom_and(2);
    auto ho = [&](const Fixture& f, uint32_t d) { return run_higher_order(f.circuit, f.stimuli, f.labels, m, d); };
    HigherOrderReport a = ho(d1, 2), b = ho(d2, 2), c = ho(d2, 3);
    check(a.leaking > 0, "order-1 DOM secure at d=2");
    check(b.secure(), "order-2 DOM not secure at d=2");
    check(c.leaking > 0, "order-2 DOM secure at d=3");
    uint64_t p1 = count_positions(d1, m), p2 = count_positions(d2, m);
    check(a.positions == p1 && b.positions == p2 && c.positions == p2, "position count mismatch");
    check(a.duplets == pascal(p1, 2) && a.expected_duplets == pascal(p1, 2), "d-uplet count (order 1, d=2)");
    check(b.duplets == pascal(p2, 2) && b.expected_duplets == pascal(p2, 2), "d-uplet count (order 2, d=2)");
    check(c.duplets == pascal(p2, 3) && c.expected_duplets == pascal(p2, 3), "d-uplet count (order 2, d=3)");
    std::ostringstream s;
    s << "p=" << p1 << "/" << p2 << "; C(p,d) = " << a.duplets << ", " << b.duplets << ", " << c.duplets
      << "; leaking " << a.leaking << ", " << b.leaking << ", " << c.leaking;
    o.detail = o.pass ? s.str() : o.detail;
    return o;
}

// ---------------------------------------------------------------------------
// 6: substitution soundness

struct RandomSets {
    std::mt19937_64 rng{20240601};
    SymbolTable labels;
    std::vector<Expr> syms;
    std::vector<Expr> masks;

    RandomSets() {
        auto add = [&](const char* n, uint32_t w, SymbolKind k) {
            labels.add(SymbolInfo{n, w, k, "", 0});
            syms.push_back(symb(n, w));
            if (k == SymbolKind::Mask) masks.push_back(syms.back());
        };
        add("k", 2, SymbolKind::Secret);
        add("s", 1, SymbolKind::Secret);
        add("p", 1, SymbolKind::Public);
        const uint32_t widths[] = {1, 2, 1, 2, 1, 1};
        for (int i = 0; i < 6; ++i) add(("m" + std::to_string(i)).c_str(), widths[i], SymbolKind::Mask);
    }

    uint64_t pick(uint64_t n) { return rng() % n; }

    Expr fit(Expr e, uint32_t w) {
        if (e.width() == w) return e;
        if (e.width() > w) return extract(e, w - 1, 0);
        return concat({cst(BitVec(w - e.width(), pick(2))), e});
    }

    Expr term(uint32_t w, int depth) {
        if (depth == 0 || pick(4) == 0) {
            if (pick(10) == 0) return cst(BitVec(w, pick(1u << w)));
            return fit(syms[pick(syms.size())], w);
        }
        switch (pick(6)) {
        case 0: return bxor(term(w, depth - 1), term(w, depth - 1));
        case 1: return band(term(w, depth - 1), term(w, depth - 1));
        case 2: return bor(term(w, depth - 1), term(w, depth - 1));
        case 3: return bnot(term(w, depth - 1));
        case 4: return bxor(term(w, depth - 1), fit(masks[pick(masks.size())], w));
        default:
            if (w == 2) return concat({term(1, depth - 1), term(1, depth - 1)});
            return bit(term(2, depth - 1), static_cast<uint32_t>(pick(2)));
        }
    }

    ExprSet next() {
        ExprSet s;
        size_t n = 1 + pick(3);
        for (size_t i = 0; i < n; ++i) s.insert(term(1 + static_cast<uint32_t>(pick(2)), 3));
        return s;
    }
};

// Exhaustive independence test straight from eval_concrete.
bool brute_force_secure(const ExprSet& set, const SymbolTable& labels) {
    std::vector<std::string> pub, sec, rnd;
    std::set<std::string> names;
    for (Expr e : set.members())
        for (auto& n : symbols_of(e)) names.insert(n);
    for (auto& n : names) {
        SymbolKind k = labels.at(n).kind;
        (k == SymbolKind::Public ? pub : k == SymbolKind::Secret ? sec : rnd).push_back(n);
    }
    auto bits = [&](const std::vector<std::string>& v) {
        uint32_t b = 0;
        for (auto& n : v) b += labels.at(n).width;
        return b;
    };
    auto assign = [&](Assignment& a, const std::vector<std::string>& v, uint64_t x) {
        for (auto& n : v) {
            uint32_t w = labels.at(n).width;
            a[n] = BitVec(w, x & ((1u << w) - 1));
            x >>= w;
        }
    };
    for (uint64_t pv = 0; pv < (uint64_t{1} << bits(pub)); ++pv) {
        std::map<std::vector<uint64_t>, uint64_t> reference;
        for (uint64_t sv = 0; sv < (uint64_t{1} << bits(sec)); ++sv) {
            std::map<std::vector<uint64_t>, uint64_t> hist;
            for (uint64_t rv = 0; rv < (uint64_t{1} << bits(rnd)); ++rv) {
                Assignment a;
                assign(a, pub, pv);
                assign(a, sec, sv);
                assign(a, rnd, rv);
                std::vector<uint64_t> tuple;
                for (Expr e : set.members()) tuple.push_back(eval_concrete(e, a).bits());
                ++hist[tuple];
            }
            if (sv == 0) reference = std::move(hist);
            else if (hist != reference) return false;
        }
    }
    return true;
}

Outcome crit_substitution() {
    Outcome o;
    Check check{o};
    RandomSets gen;
    int subst_secure = 0, leaking = 0;
    for (int i = 0; i < kRandomSets; ++i) {
        ExprSet s = gen.next();
        check(enumeration_bits(s, gen.labels) <= kMaxSymbolicBits, "set exceeds the symbolic bit budget");
        Verdict sub = check_substitution(s, gen.labels);
        Verdict en = check_enumeration(s, gen.labels, kMaxSymbolicBits);
        bool truth = brute_force_secure(s, gen.labels);
        check(en.secure() == truth, "enumeration disagrees with the brute-force oracle");
        if (sub.secure()) {
            ++subst_secure;
            check(en.secure() && truth, "substitution Secure but enumeration Leaks");
        }
        leaking += !truth;
    }
    std::ostringstream d;
    d << kRandomSets << " sets, " << subst_secure << " substitution-secure, " << leaking << " leaking, 0 violations";
    if (o.pass) o.detail = d.str();
    check(subst_secure >= kRandomSets / 10 && leaking >= kRandomSets / 10, "degenerate random sets");
    return o;
}

// ---------------------------------------------------------------------------
// 7: wire reduction

Outcome crit_reduction() {
    Outcome o;
    Check check{o};
    LeakageModel m = model(true, false);
    RandomCircuitParams p;
    p.cycles = kReductionCycles;
    int mismatches = 0, leaky = 0;
    uint64_t reduced = 0, all_sets = 0;
    for (int seed = 0; seed < kReductionCircuits; ++seed) {
        Fixture f = gen_random_circuit(1000 + seed, p);
        check(f.stimuli.frames.size() == kReductionCycles, "cycle count");
        RunOptions all;
        all.selection.reduce = false;
        LeakReport a = run(f.circuit, f.stimuli, f.labels, m);
        LeakReport b = run(f.circuit, f.stimuli, f.labels, m, all);
        mismatches += leaking_cycles(a) != leaking_cycles(b);
        leaky += !leaking_cycles(b).empty();
        reduced += a.entries.size();
        all_sets += b.entries.size();
    }
    check(mismatches == 0, std::to_string(mismatches) + " circuits with differing per-cycle verdicts");
    check(reduced < all_sets, "reduction never removed a wire");
    std::ostringstream d;
    d << kReductionCircuits << " circuits x " << kReductionCycles << " cycles, " << leaky
      << " with leaks, 0 mismatches; " << reduced << " vs " << all_sets << " probe sets";
    if (o.pass) o.detail = d.str();
    return o;
}

// ---------------------------------------------------------------------------
// 8: glitch over-approximation against a toggle oracle
//
// Within a cycle, every unstable source bit (any primary input bit, and any
// register bit whose symbolic value changed) may glitch: it is seen either at
// its settled value or flipped, independently per bit. The combinational
// logic is replayed concretely over every such mixture. For each wire bit the
// observed value must be a function of the values of its LeakSet members, for
// every witness assignment.

struct GlitchStats {
    uint64_t cycles = 0, skipped = 0, bit_checks = 0, misses = 0;
    std::string first_miss;
};

std::vector<Assignment> all_assignments(const SymbolTable& labels) {
    std::vector<std::pair<std::string, uint32_t>> vars;
    uint32_t total = 0;
    for (auto& [n, info] : labels.symbols()) {
        vars.emplace_back(n, info.width);
        total += info.width;
    }
    std::vector<Assignment> out;
    for (uint64_t x = 0; x < (uint64_t{1} << total); ++x) {
        Assignment a;
        uint64_t y = x;
        for (auto& [n, w] : vars) {
            a[n] = BitVec(w, y & ((uint64_t{1} << w) - 1));
            y >>= w;
        }
        out.push_back(std::move(a));
    }
    return out;
}

// `value_only` keys on the settled value instead of the LeakSet (negative control).
void glitch_cycle(const Fixture& f, const Schedule& sched, const SimState& st,
                  const std::vector<Assignment>& witnesses, GlitchStats& stats, bool value_only = false) {
    const Circuit& c = f.circuit;
    struct Source {
        WireId wire;
        uint32_t bit;
    };
    std::vector<Source> toggled;
    std::vector<char> is_source(c.wires.size(), 0);
    for (WireId w : c.inputs) {
        is_source[w] = 1;
        for (uint32_t i = 0; i < c.wire(w).width; ++i) toggled.push_back({w, i});
    }
    for (const Register& r : c.registers) {
        is_source[r.output] = 1;
        for (uint32_t i = 0; i < c.wire(r.output).width; ++i)
            if (bit(st.current[r.output].symb, i) != bit(st.previous[r.output].symb, i)) toggled.push_back({r.output, i});
    }
    if (toggled.size() > kMaxToggledBits) {
        ++stats.skipped;
        return;
    }
    ++stats.cycles;
    // Settled source values and LeakSet keys per witness.
    size_t nw = witnesses.size();
    std::vector<std::vector<BitVec>> settled(nw, std::vector<BitVec>(c.wires.size()));
    struct BitRef {
        WireId wire;
        uint32_t bit;
    };
    std::vector<BitRef> bits;
    for (WireId w = 0; w < c.wires.size(); ++w)
        for (uint32_t i = 0; i < c.wire(w).width; ++i) bits.push_back({w, i});
    std::vector<std::vector<std::vector<uint64_t>>> keys(bits.size(), std::vector<std::vector<uint64_t>>(nw));
    for (size_t x = 0; x < nw; ++x) {
        for (WireId w = 0; w < c.wires.size(); ++w)
            if (is_source[w]) settled[x][w] = eval_concrete(st.current[w].symb, witnesses[x]);
        for (size_t b = 0; b < bits.size(); ++b) {
            const Valuation& v = st.current[bits[b].wire];
            if (value_only) {
                keys[b][x].push_back(eval_concrete(bit(v.symb, bits[b].bit), witnesses[x]).bits());
                continue;
            }
            for (Expr e : v.lset[bits[b].bit]) keys[b][x].push_back(eval_concrete(e, witnesses[x]).bits());
        }
    }
    std::vector<BitVec> vals(c.wires.size());
    for (uint64_t mix = 0; mix < (uint64_t{1} << toggled.size()); ++mix) {
        std::vector<std::map<std::vector<uint64_t>, bool>> seen(bits.size());
        for (size_t x = 0; x < nw; ++x) {
            vals = settled[x];
            for (size_t t = 0; t < toggled.size(); ++t)
                if ((mix >> t) & 1) {
                    const Source& s = toggled[t];
                    vals[s.wire] = BitVec(vals[s.wire].width(), vals[s.wire].bits() ^ (uint64_t{1} << s.bit));
                }
            for (uint32_t gi : sched.order) {
                const Gate& g = c.gates[gi];
                std::vector<BitVec> ins;
                for (WireId w : g.inputs) ins.push_back(vals[w]);
                vals[g.output] = conc_eval(c, g, ins);
            }
            for (size_t b = 0; b < bits.size(); ++b) {
                bool v = vals[bits[b].wire].bit(bits[b].bit);
                auto [it, fresh] = seen[b].emplace(keys[b][x], v);
                ++stats.bit_checks;
                if (!fresh && it->second != v) {
                    if (!stats.misses)
                        stats.first_miss = f.name + " cycle " + std::to_string(st.cycle) + " wire " +
                                           c.wire(bits[b].wire).name + "[" + std::to_string(bits[b].bit) + "]";
                    ++stats.misses;
                    it->second = v;
                }
            }
        }
    }
}

Outcome crit_glitch() {
    Outcome o;
    Check check{o};
    GlitchStats stats;
    RandomCircuitParams p;
    p.max_input_bits = 6;
    int circuits = 0;
    for (uint64_t seed = 0; circuits < kGlitchCircuits && seed < 10 * kGlitchCircuits; ++seed) {
        Fixture f = gen_random_circuit(5000 + seed, p);
        f.name = "random_" + std::to_string(5000 + seed);
        Schedule sched = validate_and_schedule(f.circuit);
        std::vector<Assignment> witnesses = all_assignments(f.labels);
        uint64_t before = stats.cycles;
        for (const SimState& st : simulate(f)) glitch_cycle(f, sched, st, witnesses, stats);
        circuits += stats.cycles > before;
    }
    check(circuits >= kGlitchCircuits, "too few circuits within the toggle budget");
    GlitchStats control;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Fixture f = gen_random_circuit(5000 + seed, p);
        Schedule sched = validate_and_schedule(f.circuit);
        std::vector<Assignment> witnesses = all_assignments(f.labels);
        for (const SimState& st : simulate(f)) glitch_cycle(f, sched, st, witnesses, control, true);
    }
    check(control.misses > 0, "negative control found no glitch beyond the settled value");
    check(stats.misses == 0, std::to_string(stats.misses) + " uncovered glitch values, first at " + stats.first_miss);
    std::ostringstream d;
    d << circuits << " circuits, " << stats.cycles << " cycles (" << stats.skipped << " over budget), "
      << stats.bit_checks << " bit observations, 0 misses; value-only control misses " << control.misses;
    if (o.pass) o.detail = d.str();
    return o;
}

// ---------------------------------------------------------------------------
// 9: domain coherence

Outcome crit_coherence() {
    Outcome o;
    Check check{o};
    std::vector<Fixture> fx = gen_counterexamples();
    for (uint32_t d = 1; d <= 3; ++d) {
        fx.push_back(gen_dom_and(d));
        fx.push_back(gen_isw_and(d));
    }
    for (int i = 0; i < kCoherenceCircuits; ++i) fx.push_back(gen_random_circuit(9000 + i));
    uint64_t cycles = 0, wires = 0;
    for (const Fixture& f : fx) {
        for (const SimState& st : simulate(f)) {
            try {
                consistency_check(f.circuit, st);
            } catch (const std::exception& e) {
                check(false, f.name + ": " + e.what());
            }
            // Independent restatement of the check.
            for (WireId w = 0; w < f.circuit.wires.size(); ++w) {
                check(eval_concrete(st.current[w].symb, f.stimuli.witness) == st.current[w].conc,
                      f.name + " wire " + f.circuit.wire(w).name);
                ++wires;
            }
            ++cycles;
        }
    }
    std::ostringstream d;
    d << fx.size() << " fixtures, " << cycles << " cycles, " << wires << " wire valuations";
    if (o.pass) o.detail = d.str();
    return o;
}

// ---------------------------------------------------------------------------
// 10: cache transparency and determinism

Outcome crit_cache() {
    Outcome o;
    Check check{o};
    std::vector<Fixture> fx = gen_counterexamples();
    fx.push_back(gen_dom_and(2));
    fx.push_back(gen_isw_and(2));
    for (int i = 0; i < 30; ++i) fx.push_back(gen_random_circuit(7000 + i));
    uint64_t hits = 0, runs = 0;
    for (const Fixture& f : fx) {
        for (const LeakageModel& m : {model(true, false), model(false, true), model(true, true),
                                      model(true, false, Granularity::SupportWise), LeakageModel::rr1sw()}) {
            RunOptions on, off;
            off.use_cache = false;
            LeakReport a = run(f.circuit, f.stimuli, f.labels, m, on);
            LeakReport b = run(f.circuit, f.stimuli, f.labels, m, off);
            std::multiset<std::tuple<uint32_t, std::string, VerdictKind>> ma, mb;
            for (auto& e : a.entries) ma.emplace(e.cycle, e.wire, e.verdict);
            for (auto& e : b.entries) mb.emplace(e.cycle, e.wire, e.verdict);
            check(ma == mb, f.name + " (" + m.facet() + "): cache changes verdicts");
            check(a.to_jsonl() == run(f.circuit, f.stimuli, f.labels, m, on).to_jsonl(),
                  f.name + ": rerun not byte-identical");
            RunOptions par;
            par.jobs = 4;
            check(a.to_jsonl() == run(f.circuit, f.stimuli, f.labels, m, par).to_jsonl(),
                  f.name + ": parallel run differs");
            hits += a.summary.cache_hits;
            ++runs;
        }
    }
    check(hits > 0, "cache never hit");
    std::ostringstream d;
    d << runs << " runs, " << hits << " cache hits, identical multisets and bytes";
    if (o.pass) o.detail = d.str();
    return o;
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double max_seconds;
        std::function<Outcome()> fn;
    };
    const Criterion criteria[] = {
        {1, "fig5 reproduction", kFigureSeconds, crit_fig5},
        {2, "fig6 reproduction", kFigureSeconds, crit_fig6},
        {3, "fig7 reproduction", kFigureSeconds, crit_fig7},
        {4, "gadget NI/SNI verdicts", kGadgetSeconds, crit_gadgets},
        {5, "higher-order verdicts", kHigherOrderSeconds, crit_higher_order},
        {6, "substitution soundness", 0, crit_substitution},
        {7, "wire-reduction equivalence", 0, crit_reduction},
        {8, "glitch over-approximation soundness", 0, crit_glitch},
        {9, "domain coherence", 0, crit_coherence},
        {10, "cache transparency and determinism", 0, crit_cache},
    };
    int failed = 0;
    for (const Criterion& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.max_seconds > 0 && s > c.max_seconds) {
            o.pass = false;
            o.detail = "took " + std::to_string(s) + " s, limit " + std::to_string(c.max_seconds) + " s; " + o.detail;
        }
        failed += !o.pass;
        std::printf("%s %2d %-38s %8.3f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, s, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed;
}
