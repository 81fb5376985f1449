#include "leakprobe/gadgets.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "leakprobe/errors.hpp"

namespace leakprobe {

namespace {

struct Builder {
    Circuit c;

    WireId input(const std::string& name, uint32_t width = 1) {
        WireId w = c.add_wire(name, width);
        c.add_input(w);
        return w;
    }
    WireId gate(GateKind k, std::vector<WireId> ins, const std::string& name, uint32_t width = 1,
                GateParams params = {}) {
        WireId w = c.add_wire(name, width);
        c.add_gate(k, std::move(ins), w, std::move(params));
        return w;
    }
    WireId reg(WireId in, const std::string& name, uint64_t init = 0) {
        uint32_t width = c.wire(in).width;
        WireId w = c.add_wire(name, width);
        c.add_register(in, w, BitVec(width, init));
        return w;
    }
};

InputValue sym_value(const std::string& name) {
    InputValue v;
    v.kind = InputValue::Kind::Symbol;
    v.symbol = name;
    return v;
}

InputValue const_value(uint32_t width, uint64_t value) {
    InputValue v;
    v.kind = InputValue::Kind::Const;
    v.value = BitVec(width, value);
    return v;
}

InputValue term_value(Expr e) {
    InputValue v;
    v.kind = InputValue::Kind::Term;
    v.term = e;
    return v;
}

void add_symbol(SymbolTable& t, const std::string& name, SymbolKind kind, const std::string& secret = {},
                uint32_t index = 0) {
    SymbolInfo s;
    s.name = name;
    s.width = 1;
    s.kind = kind;
    s.secret = secret;
    s.index = index;
    t.add(std::move(s));
}

std::string pair_name(const std::string& prefix, uint32_t i, uint32_t j, uint32_t d) {
    if (d < 10) return prefix + std::to_string(i) + std::to_string(j);
    return prefix + std::to_string(i) + "_" + std::to_string(j);
}

} // namespace

Fixture gen_gadget(const GadgetConfig& cfg) {
    uint32_t d = cfg.order;
    if (d == 0) throw MalformedDocument("gadget order must be at least 1");
    bool dom = cfg.scheme == GadgetScheme::Dom;
    Builder b;
    Fixture f;
    f.name = std::string(dom ? "dom_and_d" : "isw_and_d") + std::to_string(d);

    std::vector<WireId> a(d + 1), bb(d + 1);
    std::vector<std::string> an, bn, rn;
    for (uint32_t i = 0; i <= d; ++i) {
        an.push_back("a" + std::to_string(i));
        bn.push_back("b" + std::to_string(i));
        a[i] = b.input(an[i]);
        bb[i] = b.input(bn[i]);
    }
    std::vector<std::vector<WireId>> r(d + 1, std::vector<WireId>(d + 1));
    for (uint32_t i = 0; i <= d; ++i)
        for (uint32_t j = i + 1; j <= d; ++j) {
            rn.push_back(pair_name(cfg.mask_prefix, i, j, d));
            r[i][j] = r[j][i] = b.input(rn.back());
        }
    std::vector<std::vector<WireId>> p(d + 1, std::vector<WireId>(d + 1));
    for (uint32_t i = 0; i <= d; ++i)
        for (uint32_t j = 0; j <= d; ++j) p[i][j] = b.gate(GateKind::BitAnd, {a[i], bb[j]}, pair_name("p", i, j, d));

    // z[i][j]: the term share i absorbs from domain j
    std::vector<std::vector<WireId>> z(d + 1, std::vector<WireId>(d + 1));
    for (uint32_t i = 0; i <= d; ++i)
        for (uint32_t j = 0; j <= d; ++j) {
            if (i == j) continue;
            if (dom) {
                WireId t = b.gate(GateKind::BitXor, {p[i][j], r[i][j]}, pair_name("t", i, j, d));
                z[i][j] = cfg.register_cross_terms ? b.reg(t, pair_name("q", i, j, d)) : t;
            } else if (i < j) {
                z[i][j] = r[i][j];
            } else {
                WireId u = b.gate(GateKind::BitXor, {r[j][i], p[j][i]}, pair_name("u", j, i, d));
                z[i][j] = b.gate(GateKind::BitXor, {u, p[i][j]}, pair_name("z", i, j, d));
            }
        }
    std::vector<std::string> outs;
    for (uint32_t i = 0; i <= d; ++i) {
        WireId acc = p[i][i];
        std::vector<uint32_t> js;
        for (uint32_t j = 0; j <= d; ++j)
            if (j != i) js.push_back(j);
        for (size_t k = 0; k < js.size(); ++k) {
            bool last = k + 1 == js.size();
            std::string name = last ? "c" + std::to_string(i) : pair_name("s", i, js[k], d);
            acc = b.gate(GateKind::BitXor, {acc, z[i][js[k]]}, name);
        }
        b.c.add_output(acc);
        outs.push_back(b.c.wire(acc).name);
    }
    b.c.validate();
    f.circuit = std::move(b.c);

    for (uint32_t i = 0; i <= d; ++i) {
        add_symbol(f.labels, an[i], SymbolKind::Share, "a", i);
        add_symbol(f.labels, bn[i], SymbolKind::Share, "b", i);
    }
    for (auto& n : rn) add_symbol(f.labels, n, SymbolKind::Mask);

    std::mt19937_64 rng(0x5eed0000u + d);
    StimulusFrame frame;
    for (WireId w : f.circuit.inputs) {
        const std::string& n = f.circuit.wire(w).name;
        f.stimuli.witness[n] = BitVec(1, rng() & 1);
        frame.inputs[n] = sym_value(n);
    }
    for (uint32_t t = 0; t < 2; ++t) {
        frame.cycle = t;
        f.stimuli.frames.push_back(frame);
    }

    GadgetSpec g;
    g.name = f.name;
    g.circuit = f.circuit;
    g.labels = f.labels;
    g.stimuli = f.stimuli;
    g.inputs = {{"a", an}, {"b", bn}};
    g.outputs = outs;
    g.randomness = rn;
    g.order = d;
    f.gadget = std::move(g);
    return f;
}

Fixture gen_dom_and(uint32_t d) { return gen_gadget(GadgetConfig{GadgetScheme::Dom, d, true, "r"}); }
Fixture gen_isw_and(uint32_t d) { return gen_gadget(GadgetConfig{GadgetScheme::Isw, d, false, "r"}); }

namespace {

void secret_and_mask(Fixture& f) {
    add_symbol(f.labels, "k", SymbolKind::Secret);
    add_symbol(f.labels, "m", SymbolKind::Mask);
    f.stimuli.witness["k"] = BitVec(1, 1);
    f.stimuli.witness["m"] = BitVec(1, 0);
}

Expr k_xor_m() { return bxor(symb("k", 1), symb("m", 1)); }

} // namespace

Fixture gen_fig5() {
    Fixture f;
    f.name = "fig5";
    Builder b;
    WireId i0 = b.input("i0"), i1 = b.input("i1");
    WireId o0 = b.gate(GateKind::BitAnd, {i0, i1}, "o0");
    b.c.add_output(o0);
    b.c.validate();
    f.circuit = std::move(b.c);
    secret_and_mask(f);
    f.stimuli.frames.push_back({0, {{"i0", const_value(1, 0)}, {"i1", term_value(k_xor_m())}}});
    f.stimuli.frames.push_back({1, {{"i0", const_value(1, 1)}, {"i1", sym_value("m")}}});
    return f;
}

Fixture gen_fig6() {
    Fixture f;
    f.name = "fig6";
    Builder b;
    WireId b0 = b.input("b0"), b1 = b.input("b1");
    b.c.add_output(b.reg(b0, "r0"));
    b.c.add_output(b.reg(b1, "r1"));
    b.c.add_split(Split{"i", 2, {SplitBit{b0, 0}, SplitBit{b1, 1}}});
    b.c.validate();
    f.circuit = std::move(b.c);
    secret_and_mask(f);
    StimulusFrame fr{0, {{"b0", term_value(k_xor_m())}, {"b1", sym_value("m")}}};
    f.stimuli.frames.push_back(fr);
    fr.cycle = 1;
    f.stimuli.frames.push_back(fr);
    return f;
}

Fixture gen_fig7() {
    Fixture f;
    f.name = "fig7";
    Builder b;
    WireId x = b.input("x"), i1 = b.input("i1");
    WireId i0 = b.reg(x, "i0", 0);
    WireId o0 = b.gate(GateKind::BitAnd, {i0, i1}, "o0");
    b.c.add_output(o0);
    b.c.validate();
    f.circuit = std::move(b.c);
    secret_and_mask(f);
    f.stimuli.frames.push_back({0, {{"x", const_value(1, 1)}, {"i1", term_value(k_xor_m())}}});
    f.stimuli.frames.push_back({1, {{"x", const_value(1, 1)}, {"i1", sym_value("m")}}});
    return f;
}

std::vector<Fixture> gen_counterexamples() { return {gen_fig5(), gen_fig6(), gen_fig7()}; }

// ---------------------------------------------------------------------------
// random circuits

Fixture gen_random_circuit(uint64_t seed, const RandomCircuitParams& p) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 1);
    auto pick = [&](uint64_t n) { return n == 0 ? 0 : rng() % n; };
    auto chance = [&](uint32_t percent) { return pick(100) < percent; };
    uint32_t maxw = std::clamp<uint32_t>(p.max_width, 1, 8);

    Fixture f;
    f.name = "random_" + std::to_string(seed);

    uint32_t nsym = 2 + pick(std::max<uint32_t>(p.max_symbols, 2) - 1);
    std::vector<std::string> syms;
    for (uint32_t i = 0; i < nsym; ++i) {
        SymbolKind kind = i == 0 ? SymbolKind::Secret : (i == nsym - 1 && nsym > 3 ? SymbolKind::Public
                                                                                  : SymbolKind::Mask);
        std::string name = (kind == SymbolKind::Secret ? "k" : kind == SymbolKind::Mask ? "m" : "p") +
                           std::to_string(i);
        add_symbol(f.labels, name, kind);
        f.stimuli.witness[name] = BitVec(1, rng() & 1);
        syms.push_back(name);
    }

    Builder b;
    std::vector<WireId> pool;
    uint32_t counter = 0;
    auto fresh = [&](const char* stem) { return std::string(stem) + std::to_string(counter++); };

    uint32_t ninputs = 1 + pick(std::max<uint32_t>(p.max_inputs, 1));
    uint32_t budget = std::max<uint32_t>(p.max_input_bits, 1);
    for (uint32_t i = 0; i < ninputs && budget > 0; ++i) {
        uint32_t w = 1 + pick(std::min(maxw, budget));
        budget -= w;
        pool.push_back(b.input(fresh("in"), w));
    }

    // Register outputs exist up front so their inputs may come from anywhere.
    std::vector<WireId> reg_out;
    uint32_t nregs = pick(p.max_registers + 1);
    std::vector<uint64_t> reg_init;
    for (uint32_t i = 0; i < nregs; ++i) {
        uint32_t w = 1 + pick(maxw);
        reg_out.push_back(b.c.add_wire(fresh("q"), w));
        reg_init.push_back(rng() & width_mask(w));
        pool.push_back(reg_out.back());
    }

    auto same_width = [&](uint32_t w) -> WireId {
        std::vector<WireId> c;
        for (WireId x : pool)
            if (b.c.wire(x).width == w) c.push_back(x);
        return c[pick(c.size())];
    };
    auto any = [&]() { return pool[pick(pool.size())]; };
    auto has_width = [&](uint32_t w) {
        return std::any_of(pool.begin(), pool.end(), [&](WireId x) { return b.c.wire(x).width == w; });
    };

    std::vector<GateKind> kinds{GateKind::BitNot, GateKind::BitAnd, GateKind::BitOr, GateKind::BitXor,
                                GateKind::BitAnd, GateKind::BitXor, GateKind::Mux,   GateKind::Trunc,
                                GateKind::Zext,   GateKind::Sext,   GateKind::Blit,  GateKind::Repeat,
                                GateKind::Shl,    GateKind::Shr,    GateKind::Sshr,  GateKind::Equal,
                                GateKind::NotEqual, GateKind::IsZero};
    if (p.arithmetic)
        kinds.insert(kinds.end(), {GateKind::Add, GateKind::Sub, GateKind::Neg, GateKind::Mul, GateKind::Ucmp,
                                   GateKind::Scmp, GateKind::IsNeg});

    uint32_t ngates = 1 + pick(std::max<uint32_t>(p.max_gates, 1));
    for (uint32_t gi = 0; gi < ngates; ++gi) {
        GateKind k = kinds[pick(kinds.size())];
        WireId x = any();
        uint32_t w = b.c.wire(x).width;
        std::string name = fresh("w");
        GateParams params;
        switch (k) {
        case GateKind::BitNot:
        case GateKind::Neg:
            pool.push_back(b.gate(k, {x}, name, w));
            break;
        case GateKind::BitAnd:
        case GateKind::BitOr:
        case GateKind::BitXor:
        case GateKind::Add:
        case GateKind::Sub:
        case GateKind::Mul:
            pool.push_back(b.gate(k, {x, same_width(w)}, name, w));
            break;
        case GateKind::Ucmp:
        case GateKind::Scmp:
        case GateKind::Equal:
        case GateKind::NotEqual:
            pool.push_back(b.gate(k, {x, same_width(w)}, name, 1));
            break;
        case GateKind::IsZero:
        case GateKind::IsNeg:
            pool.push_back(b.gate(k, {x}, name, 1));
            break;
        case GateKind::Shl:
        case GateKind::Shr:
        case GateKind::Sshr:
            if (chance(50)) {
                params.amount = pick(w + 1);
                pool.push_back(b.gate(k, {x}, name, w, params));
            } else {
                pool.push_back(b.gate(k, {x, any()}, name, w));
            }
            break;
        case GateKind::Trunc:
            pool.push_back(b.gate(k, {x}, name, 1 + pick(w)));
            break;
        case GateKind::Zext:
        case GateKind::Sext:
            pool.push_back(b.gate(k, {x}, name, w + pick(maxw - w + 1)));
            break;
        case GateKind::Blit: {
            WireId y = any();
            uint32_t wy = b.c.wire(y).width;
            if (wy > w) std::swap(x, y), std::swap(w, wy);
            params.offset = pick(w - wy + 1);
            pool.push_back(b.gate(k, {x, y}, name, w, params));
            break;
        }
        case GateKind::Repeat:
            params.count = 1 + pick(maxw / w);
            pool.push_back(b.gate(k, {x}, name, w * params.count, params));
            break;
        case GateKind::Mux: {
            if (!has_width(1)) {
                pool.push_back(b.gate(GateKind::IsZero, {x}, name, 1));
                break;
            }
            WireId sel = same_width(1);
            pool.push_back(b.gate(k, {sel, x, same_width(w)}, name, w));
            break;
        }
        default:
            break;
        }
    }
    for (size_t i = 0; i < reg_out.size(); ++i) {
        uint32_t w = b.c.wire(reg_out[i]).width;
        WireId in;
        if (has_width(w)) {
            in = same_width(w);
        } else {
            WireId x = any();
            uint32_t wx = b.c.wire(x).width;
            in = b.gate(wx > w ? GateKind::Trunc : GateKind::Zext, {x}, fresh("w"), w);
        }
        b.c.add_register(in, reg_out[i], BitVec(w, reg_init[i]));
    }

    uint32_t nout = 1 + pick(3);
    std::vector<WireId> outs;
    for (uint32_t i = 0; i < nout; ++i) {
        // later wires are more interesting outputs
        WireId w = pool[pool.size() - 1 - pick(std::min<size_t>(pool.size(), 6))];
        if (std::find(outs.begin(), outs.end(), w) == outs.end()) outs.push_back(w);
    }
    for (WireId w : outs) b.c.add_output(w);

    if (p.splits && chance(40)) {
        std::vector<WireId> bits;
        for (WireId w : pool)
            if (b.c.wire(w).width == 1) bits.push_back(w);
        std::shuffle(bits.begin(), bits.end(), rng);
        uint32_t n = std::min<uint32_t>(bits.size(), 2 + pick(3));
        if (n >= 2) {
            Split s{"split" + std::to_string(counter++), n, {}};
            for (uint32_t i = 0; i < n; ++i) s.bits.push_back(SplitBit{bits[i], i});
            b.c.add_split(std::move(s));
        }
    }
    b.c.validate();
    f.circuit = std::move(b.c);

    auto one_bit_term = [&]() -> Expr {
        Expr s1 = symb(syms[pick(syms.size())], 1), s2 = symb(syms[pick(syms.size())], 1);
        switch (pick(6)) {
        case 0: return cst(1, rng() & 1);
        case 1: return bxor(s1, s2);
        case 2: return band(s1, s2);
        case 3: return bnot(s1);
        default: return s1;
        }
    };
    for (uint32_t t = 0; t < std::max<uint32_t>(p.cycles, 1); ++t) {
        StimulusFrame fr;
        fr.cycle = t;
        for (WireId w : f.circuit.inputs) {
            const Wire& wire = f.circuit.wire(w);
            uint32_t r = pick(10);
            if (r < 3) {
                fr.inputs[wire.name] = const_value(wire.width, rng() & width_mask(wire.width));
            } else if (r < 6 && wire.width == 1) {
                fr.inputs[wire.name] = sym_value(syms[pick(syms.size())]);
            } else {
                std::vector<Expr> parts;
                for (uint32_t i = 0; i < wire.width; ++i) parts.push_back(one_bit_term());
                fr.inputs[wire.name] = term_value(concat(parts));
            }
        }
        f.stimuli.frames.push_back(std::move(fr));
    }
    return f;
}

// ---------------------------------------------------------------------------
// files

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    if (!out) throw IoError("cannot write " + path.string());
}

} // namespace

std::vector<std::string> write_fixture(const Fixture& f, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
    fs::path base = fs::path(dir) / f.name;
    std::vector<std::string> paths{base.string() + ".json", base.string() + ".labels.json",
                                   base.string() + ".stim.jsonl"};
    write_text(paths[0], serialize_netlist(f.circuit));
    write_text(paths[1], serialize_labels(f.labels));
    write_text(paths[2], serialize_stimuli(f.stimuli, f.circuit));
    if (f.gadget) {
        paths.push_back(base.string() + ".gadget.json");
        write_text(paths[3], serialize_gadget(*f.gadget));
    }
    return paths;
}

Fixture load_fixture(const std::string& dir, const std::string& name) {
    namespace fs = std::filesystem;
    std::string base = (fs::path(dir) / name).string();
    Fixture f;
    f.name = name;
    f.circuit = load_netlist(base + ".json");
    f.labels = load_labels(base + ".labels.json");
    f.stimuli = load_stimuli(base + ".stim.jsonl", f.circuit);
    if (fs::exists(base + ".gadget.json"))
        f.gadget = parse_gadget(read_file(base + ".gadget.json"), f.circuit, f.labels, f.stimuli);
    return f;
}

} // namespace leakprobe
