#include <doctest.h>

#include <random>

#include "leakprobe/errors.hpp"
#include "leakprobe/gadgets.hpp"
#include "leakprobe/sim.hpp"

using namespace leakprobe;

namespace {

struct Row {
    std::string symb;
    std::string lset;  // rendered flattened set
    uint64_t stab;
};

Row row(const Circuit& c, const SimState& st, const std::string& wire) {
    const Valuation& v = st.current[c.wire_id(wire)];
    LeakSet all;
    for (auto& l : v.lset) leakset_insert(all, l);
    return Row{render(v.symb), render_leakset(all), v.stab.bits()};
}

void expect_row(const Circuit& c, const SimState& st, const std::string& wire, const Row& want) {
    Row got = row(c, st, wire);
    INFO("wire " << wire << " cycle " << st.cycle);
    CHECK(got.symb == want.symb);
    CHECK(got.lset == want.lset);
    CHECK(got.stab == want.stab);
}

std::vector<SimState> run_all(const Fixture& f, SimOptions opts = {}) {
    Simulator sim(f.circuit, f.stimuli, std::move(opts));
    std::vector<SimState> out;
    while (!sim.done()) {
        sim.step();
        out.push_back(sim.state());
    }
    return out;
}

InputValue cval(uint32_t w, uint64_t v) {
    InputValue i;
    i.value = BitVec(w, v);
    return i;
}

InputValue tval(Expr e) {
    InputValue i;
    i.kind = InputValue::Kind::Term;
    i.term = e;
    return i;
}

} // namespace

TEST_CASE("fig5 valuation table") {
    Fixture f = gen_fig5();
    auto states = run_all(f);
    REQUIRE(states.size() == 2);
    std::string km = render(bxor(symb("k", 1), symb("m", 1)));
    expect_row(f.circuit, states[0], "i0", {"CST(0b0)", "{}", 0});
    expect_row(f.circuit, states[0], "i1", {km, "{" + km + "}", 0});
    expect_row(f.circuit, states[0], "o0", {"CST(0b0)", "{" + km + "}", 0});
    expect_row(f.circuit, states[1], "i0", {"CST(0b1)", "{}", 0});
    expect_row(f.circuit, states[1], "i1", {"SYMB(m)", "{SYMB(m)}", 0});
    expect_row(f.circuit, states[1], "o0", {"SYMB(m)", "{SYMB(m)}", 0});
}

TEST_CASE("fig7 valuation table") {
    Fixture f = gen_fig7();
    auto states = run_all(f);
    REQUIRE(states.size() == 2);
    std::string km = render(bxor(symb("k", 1), symb("m", 1)));
    expect_row(f.circuit, states[0], "i0", {"CST(0b0)", "{}", 1});
    expect_row(f.circuit, states[0], "i1", {km, "{" + km + "}", 0});
    expect_row(f.circuit, states[0], "o0", {"CST(0b0)", "{}", 1});
    expect_row(f.circuit, states[1], "i0", {"CST(0b1)", "{}", 0});
    expect_row(f.circuit, states[1], "i1", {"SYMB(m)", "{SYMB(m)}", 0});
    expect_row(f.circuit, states[1], "o0", {"SYMB(m)", "{SYMB(m)}", 0});
}

TEST_CASE("first step copies current into previous") {
    Fixture f = gen_fig5();
    Simulator sim(f.circuit, f.stimuli);
    sim.step();
    CHECK(sim.state().cycle == 0);
    for (size_t w = 0; w < f.circuit.wires.size(); ++w)
        CHECK(sim.state().previous[w].symb == sim.state().current[w].symb);
    sim.step();
    CHECK(sim.state().cycle == 1);
    CHECK(render(sim.state().previous[f.circuit.wire_id("i1")].symb) == render(bxor(symb("k", 1), symb("m", 1))));
}

TEST_CASE("concrete gate semantics") {
    Circuit c;
    WireId a = c.add_wire("a", 4), b = c.add_wire("b", 4), s = c.add_wire("s", 1);
    WireId o4 = c.add_wire("o4", 4), o1 = c.add_wire("o1", 1), o8 = c.add_wire("o8", 8);
    auto eval = [&](GateKind k, std::vector<WireId> ins, WireId out, std::vector<BitVec> vals,
                    GateParams p = {}) {
        Gate g{k, std::move(ins), out, p};
        return conc_eval(c, g, vals).bits();
    };
    BitVec x(4, 0b1101), y(4, 0b0110);
    CHECK(eval(GateKind::Add, {a, b}, o4, {x, y}) == ((13 + 6) & 15));
    CHECK(eval(GateKind::Sub, {a, b}, o4, {y, x}) == ((6 - 13) & 15));
    CHECK(eval(GateKind::Mul, {a, b}, o4, {x, y}) == ((13 * 6) & 15));
    CHECK(eval(GateKind::Neg, {a}, o4, {y}) == ((16 - 6) & 15));
    CHECK(eval(GateKind::Ucmp, {a, b}, o1, {y, x}) == 1);
    CHECK(eval(GateKind::Scmp, {a, b}, o1, {y, x}) == 0);  // 6 < -3 is false
    CHECK(eval(GateKind::Equal, {a, b}, o1, {x, x}) == 1);
    CHECK(eval(GateKind::NotEqual, {a, b}, o1, {x, x}) == 0);
    CHECK(eval(GateKind::IsZero, {a}, o1, {BitVec(4, 0)}) == 1);
    CHECK(eval(GateKind::IsNeg, {a}, o1, {x}) == 1);
    CHECK(eval(GateKind::Shl, {a, b}, o4, {x, BitVec(4, 1)}) == 0b1010);
    CHECK(eval(GateKind::Shr, {a, b}, o4, {x, BitVec(4, 9)}) == 0);
    CHECK(eval(GateKind::Sshr, {a, b}, o4, {x, BitVec(4, 9)}) == 0b1111);
    CHECK(eval(GateKind::Sshr, {a}, o4, {x}, GateParams{2, 0, 0, ""}) == 0b1111);
    CHECK(eval(GateKind::Trunc, {a}, o1, {x}) == 1);
    CHECK(eval(GateKind::Zext, {a}, o8, {x}) == 0b1101);
    CHECK(eval(GateKind::Sext, {a}, o8, {x}) == 0b11111101);
    CHECK(eval(GateKind::Repeat, {a}, o8, {y}, GateParams{std::nullopt, 0, 2, ""}) == 0b01100110);
    CHECK(eval(GateKind::Blit, {o8, a}, o8, {BitVec(8, 0), y}, GateParams{std::nullopt, 3, 0, ""}) ==
          (0b0110u << 3));
    CHECK(eval(GateKind::Mux, {s, a, b}, o4, {BitVec(1, 1), x, y}) == 0b0110);
    CHECK(eval(GateKind::BitNot, {a}, o4, {x}) == 0b0010);
}

TEST_CASE("symbolic and concrete gate domains agree") {
    // eval_concrete of the symbolic result must equal the concrete result,
    // for every gate kind and random operand values.
    std::mt19937_64 rng(7);
    Circuit c;
    WireId a = c.add_wire("a", 4), b = c.add_wire("b", 4), s = c.add_wire("s", 1), sh = c.add_wire("sh", 3);
    WireId o4 = c.add_wire("o4", 4), o1 = c.add_wire("o1", 1), o8 = c.add_wire("o8", 8), o2 = c.add_wire("o2", 2);
    struct Case {
        GateKind k;
        std::vector<WireId> ins;
        WireId out;
        GateParams p;
    };
    std::vector<Case> cases{
        {GateKind::BitNot, {a}, o4, {}},       {GateKind::BitAnd, {a, b}, o4, {}},
        {GateKind::BitOr, {a, b}, o4, {}},     {GateKind::BitXor, {a, b}, o4, {}},
        {GateKind::Ucmp, {a, b}, o1, {}},      {GateKind::Scmp, {a, b}, o1, {}},
        {GateKind::Equal, {a, b}, o1, {}},     {GateKind::NotEqual, {a, b}, o1, {}},
        {GateKind::Add, {a, b}, o4, {}},       {GateKind::Sub, {a, b}, o4, {}},
        {GateKind::Neg, {a}, o4, {}},          {GateKind::Mul, {a, b}, o4, {}},
        {GateKind::Shl, {a, sh}, o4, {}},      {GateKind::Shr, {a, sh}, o4, {}},
        {GateKind::Sshr, {a, sh}, o4, {}},     {GateKind::Shl, {a}, o4, {1, 0, 0, ""}},
        {GateKind::Shr, {a}, o4, {3, 0, 0, ""}}, {GateKind::Sshr, {a}, o4, {2, 0, 0, ""}},
        {GateKind::Trunc, {a}, o2, {}},        {GateKind::Zext, {a}, o8, {}},
        {GateKind::Sext, {a}, o8, {}},         {GateKind::Blit, {o8, a}, o8, {std::nullopt, 2, 0, ""}},
        {GateKind::Repeat, {a}, o8, {std::nullopt, 0, 2, ""}}, {GateKind::IsZero, {a}, o1, {}},
        {GateKind::IsNeg, {a}, o1, {}},        {GateKind::Mux, {s, a, b}, o4, {}},
    };
    for (const Case& cs : cases) {
        for (int trial = 0; trial < 40; ++trial) {
            Gate g{cs.k, cs.ins, cs.out, cs.p};
            std::vector<BitVec> vals;
            std::vector<Expr> syms;
            Assignment asg;
            for (size_t i = 0; i < cs.ins.size(); ++i) {
                uint32_t w = c.wire(cs.ins[i]).width;
                BitVec v(w, rng() & width_mask(w));
                std::string name = "x" + std::to_string(i);
                vals.push_back(v);
                syms.push_back(symb(name, w));
                asg[name] = v;
            }
            BitVec conc = conc_eval(c, g, vals);
            Expr e = symb_eval(c, g, syms);
            INFO(gate_kind_name(cs.k) << " " << render(e));
            CHECK(e.width() == c.wire(cs.out).width);
            CHECK(eval_concrete(e, asg) == conc);
        }
    }
}

TEST_CASE("registers hold init at cycle 0 then follow their input") {
    Circuit c;
    WireId x = c.add_wire("x", 2), q = c.add_wire("q", 2);
    c.add_input(x);
    c.add_register(x, q, BitVec(2, 2));
    c.add_output(q);
    c.validate();
    Stimuli s;
    s.witness["m"] = BitVec(2, 1);
    s.frames.push_back({0, {{"x", tval(symb("m", 2))}}});
    s.frames.push_back({1, {{"x", tval(symb("m", 2))}}});
    s.frames.push_back({2, {{"x", cval(2, 3)}}});
    s.frames.push_back({3, {{"x", cval(2, 3)}}});
    Simulator sim(c, s);
    sim.step();
    const Valuation* v = &sim.state().current[q];
    CHECK(render(v->symb) == "CST(0b10)");
    CHECK(v->stab.bits() == 3);
    CHECK(v->conc.bits() == 2);
    sim.step();
    v = &sim.state().current[q];
    CHECK(render(v->symb) == "SYMB(m)");
    CHECK(v->stab.bits() == 0);
    CHECK(v->conc.bits() == 1);
    sim.step();
    v = &sim.state().current[q];
    CHECK(render(v->symb) == "SYMB(m)");
    CHECK(v->stab.bits() == 3);
    sim.step();
    v = &sim.state().current[q];
    CHECK(render(v->symb) == "CST(0b11)");
    CHECK(v->stab.bits() == 0);
    CHECK(render_leakset(v->lset[0]) == "{CST(0b1), " + render(bit(symb("m", 2), 0)) + "}");
}

TEST_CASE("reset_unstable marks registers unstable at cycle 0") {
    Fixture f = gen_fig7();
    SimOptions o;
    o.reset_unstable = true;
    auto states = run_all(f, o);
    CHECK(states[0].current[f.circuit.wire_id("i0")].stab.bits() == 0);
    CHECK(states[0].current[f.circuit.wire_id("o0")].stab.bits() == 0);
}

TEST_CASE("stable controlling input collapses AND/OR outputs") {
    Circuit c;
    WireId z = c.add_wire("z", 1), q = c.add_wire("q", 1), x = c.add_wire("x", 1);
    WireId a = c.add_wire("a", 1), o = c.add_wire("o", 1);
    c.add_input(z);
    c.add_input(x);
    c.add_register(z, q, BitVec(1, 1));
    c.add_gate(GateKind::BitAnd, {q, x}, a);
    c.add_gate(GateKind::BitOr, {q, x}, o);
    c.validate();
    Stimuli s;
    s.witness["k"] = BitVec(1, 0);
    for (uint32_t t = 0; t < 3; ++t) s.frames.push_back({t, {{"z", cval(1, 0)}, {"x", tval(symb("k", 1))}}});
    Simulator sim(c, s);
    sim.step();  // q = 1 stable: OR stable, AND follows x
    CHECK(sim.state().current[o].stab.bits() == 1);
    CHECK(render_leakset(sim.state().current[o].lset[0]) == "{}");
    CHECK(sim.state().current[a].stab.bits() == 0);
    CHECK(render_leakset(sim.state().current[a].lset[0]) == "{SYMB(k)}");
    sim.step();  // q changes 1 -> 0
    CHECK(sim.state().current[a].stab.bits() == 0);
    sim.step();  // q = 0 stable: AND stable
    CHECK(sim.state().current[a].stab.bits() == 1);
    CHECK(render_leakset(sim.state().current[a].lset[0]) == "{}");
    CHECK(sim.state().current[o].stab.bits() == 0);
}

TEST_CASE("memory reads, writes and the masked-table hook") {
    Circuit c;
    c.add_memory(Memory{"mem", 4, 2, {}});
    WireId idx = c.add_wire("idx", 2), val = c.add_wire("val", 2), en = c.add_wire("en", 1);
    WireId rd = c.add_wire("rd", 2), wr = c.add_wire("wr", 2);
    for (WireId w : {idx, val, en}) c.add_input(w);
    GateParams p;
    p.memory = "mem";
    c.add_gate(GateKind::MemRead, {idx}, rd, p);
    c.add_gate(GateKind::MemWrite, {idx, val, en}, wr, p);
    c.validate();

    SUBCASE("constant index") {
        Stimuli s;
        s.witness["v"] = BitVec(2, 3);
        s.frames.push_back({0, {{"idx", cval(2, 1)}, {"val", tval(symb("v", 2))}, {"en", cval(1, 1)}}});
        s.frames.push_back({1, {{"idx", cval(2, 1)}, {"val", cval(2, 0)}, {"en", cval(1, 0)}}});
        s.frames.push_back({2, {{"idx", cval(2, 2)}, {"val", cval(2, 0)}, {"en", cval(1, 0)}}});
        Simulator sim(c, s);
        sim.step();
        CHECK(render(sim.state().current[rd].symb) == "CST(0b00)");
        sim.step();
        CHECK(render(sim.state().current[rd].symb) == "SYMB(v)");
        CHECK(sim.state().current[rd].conc.bits() == 3);
        CHECK(sim.state().current[rd].stab.bits() == 0);
        sim.step();
        CHECK(render(sim.state().current[rd].symb) == "CST(0b00)");
        consistency_check(c, sim.state());
    }
    SUBCASE("symbolic index without a hook") {
        Stimuli s;
        s.witness["v"] = BitVec(2, 2);
        s.witness["w"] = BitVec(2, 1);
        // write w at index v, then read it back through the same index
        s.frames.push_back({0, {{"idx", tval(symb("v", 2))}, {"val", tval(symb("w", 2))}, {"en", cval(1, 1)}}});
        s.frames.push_back({1, {{"idx", tval(symb("v", 2))}, {"val", cval(2, 0)}, {"en", cval(1, 0)}}});
        s.frames.push_back({2, {{"idx", cval(2, 3)}, {"val", cval(2, 0)}, {"en", cval(1, 0)}}});
        Simulator sim(c, s);
        sim.step();
        CHECK(sim.state().warnings.size() == 2);
        CHECK(sim.state().warnings[0].find("symbolic") != std::string::npos);
        consistency_check(c, sim.state());
        sim.step();
        const Valuation& v = sim.state().current[rd];
        CHECK(v.conc.bits() == 1);
        CHECK(v.stab.bits() == 0);
        consistency_check(c, sim.state());
        // the read depends on both symbols for every index and content
        for (uint64_t vi = 0; vi < 4; ++vi)
            for (uint64_t wi = 0; wi < 4; ++wi) {
                Assignment a{{"v", BitVec(2, vi)}, {"w", BitVec(2, wi)}};
                CHECK(eval_concrete(v.symb, a).bits() == wi);
            }
        std::set<std::string> names;
        for (Expr e : v.lset[0])
            for (auto& n : symbols_of(e)) names.insert(n);
        CHECK(names == std::set<std::string>{"v", "w"});
        sim.step();
        Assignment a{{"v", BitVec(2, 1)}, {"w", BitVec(2, 2)}};
        CHECK(eval_concrete(sim.state().current[rd].symb, a).bits() == 0);
        a["v"] = BitVec(2, 3);
        CHECK(eval_concrete(sim.state().current[rd].symb, a).bits() == 2);
        consistency_check(c, sim.state());
    }
    SUBCASE("masked table") {
        Stimuli s;
        s.witness["x"] = BitVec(2, 2);
        s.witness["mi"] = BitVec(2, 1);
        s.witness["mo"] = BitVec(2, 3);
        s.masked_tables.push_back(MaskedTable{"mem", "T_unit", "mi", "mo", 2, {2, 0, 3, 1}});
        Expr index = bxor(symb("x", 2), symb("mi", 2));
        s.frames.push_back({0, {{"idx", tval(index)}, {"val", cval(2, 0)}, {"en", cval(1, 0)}}});
        Simulator sim(c, s);
        sim.step();
        const Valuation& v = sim.state().current[rd];
        CHECK(render(v.symb) == render(bxor(array_lookup("T_unit", 2, symb("x", 2)), symb("mo", 2))));
        CHECK(v.conc.bits() == (3u ^ 3u));  // T[2] ^ mo
        consistency_check(c, sim.state());
    }
}

TEST_CASE("consistency violations are detected") {
    Circuit c;
    c.add_memory(Memory{"mem", 2, 1, {BitVec(1, 1), BitVec(1, 1)}});
    WireId idx = c.add_wire("idx", 1), rd = c.add_wire("rd", 1);
    c.add_input(idx);
    GateParams p;
    p.memory = "mem";
    c.add_gate(GateKind::MemRead, {idx}, rd, p);
    c.validate();
    Stimuli s;
    s.witness["k"] = BitVec(1, 0);
    s.frames.push_back({0, {{"idx", tval(symb("k", 1))}}});
    // A hook that lies: claims the cell reads as constant 0.
    SimOptions o;
    o.hook = [](const std::string&, Expr, const SimState&) -> std::optional<Expr> { return cst(1, 0); };
    {
        Simulator sim(c, s, o);
        CHECK_THROWS_AS(sim.step(), ConsistencyViolation);
    }
    o.keep_going = true;
    Simulator sim(c, s, o);
    sim.step();
    REQUIRE(sim.state().violations.size() == 1);
    CHECK(sim.state().violations[0].first == "rd");

    Fixture f = gen_fig5();
    Simulator ok(f.circuit, f.stimuli);
    ok.step();
    consistency_check(f.circuit, ok.state());
    ok.state().current[f.circuit.wire_id("o0")].symb = symb("k", 1);  // k = 1, conc is 0
    CHECK_THROWS_AS(consistency_check(f.circuit, ok.state()), ConsistencyViolation);
}

TEST_CASE("stimuli round trip and errors") {
    Fixture f = gen_random_circuit(11);
    std::string text = serialize_stimuli(f.stimuli, f.circuit);
    Stimuli back = parse_stimuli(text, f.circuit);
    CHECK(serialize_stimuli(back, f.circuit) == text);
    CHECK(back.witness == f.stimuli.witness);

    Fixture g = gen_fig5();
    CHECK_THROWS_AS(parse_stimuli("{\"cycle\":0,\"inputs\":{}}\n", g.circuit), MalformedDocument);
    CHECK_THROWS_AS(parse_stimuli("{\"witness\":{}}\n{\"cycle\":1,\"inputs\":{}}\n", g.circuit), MalformedDocument);
    CHECK_THROWS_AS(
        parse_stimuli("{\"witness\":{}}\n{\"cycle\":0,\"inputs\":{\"o0\":{\"const\":\"0b1\"}}}\n", g.circuit),
        MalformedDocument);
}

TEST_CASE("random circuits stay coherent across domains") {
    for (uint64_t seed = 0; seed < 200; ++seed) {
        Fixture f = gen_random_circuit(seed);
        Simulator sim(f.circuit, f.stimuli);
        while (!sim.done()) {
            sim.step();
            INFO("seed " << seed << " cycle " << sim.state().cycle);
            CHECK_NOTHROW(consistency_check(f.circuit, sim.state()));
            for (const Valuation& v : sim.state().current) {
                REQUIRE(v.lset.size() == v.width());
                for (uint32_t i = 0; i < v.width(); ++i)
                    if (v.stable(i)) CHECK(v.lset[i].size() <= 1);
            }
        }
    }
}
