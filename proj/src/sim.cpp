#include "leakprobe/sim.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "leakprobe/errors.hpp"

namespace leakprobe {

using json = nlohmann::json;

LeakSet make_leakset(std::vector<Expr> members) {
    std::sort(members.begin(), members.end(), ExprLess{});
    members.erase(std::unique(members.begin(), members.end()), members.end());
    if (std::all_of(members.begin(), members.end(), [](Expr e) { return e.is_const(); }))
        members.clear();
    return members;
}

void leakset_insert(LeakSet& into, const LeakSet& from) {
    if (from.empty()) return;
    if (into.empty()) {
        into = from;
        return;
    }
    LeakSet out;
    out.reserve(into.size() + from.size());
    std::set_union(into.begin(), into.end(), from.begin(), from.end(), std::back_inserter(out),
                   ExprLess{});
    into = std::move(out);
}

std::string render_leakset(const LeakSet& s) {
    std::string out = "{";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += render(s[i]);
    }
    return out + "}";
}

namespace {

uint64_t sign_ext(uint64_t v, uint32_t from, uint32_t to) {
    if (from < 64 && ((v >> (from - 1)) & 1)) v |= ~width_mask(from);
    return v & width_mask(to);
}

Expr or_reduce(Expr x) {
    if (x.width() == 1) return x;
    std::vector<Expr> bits;
    for (uint32_t i = 0; i < x.width(); ++i) bits.push_back(bit(x, i));
    return build(Op::Or, bits);
}

Expr repeat_expr(Expr x, uint32_t n) {
    if (n == 1) return x;
    return concat(std::vector<Expr>(n, x));
}

// 1-bit term that holds when `index` equals `j`.
Expr index_is(Expr index, uint64_t j) { return bnot(or_reduce(bxor(index, cst(index.width(), j)))); }

// Reachable cell count for an index of the given width.
uint32_t reachable(uint32_t depth, uint32_t index_width) {
    return index_width >= 32 ? depth : std::min<uint64_t>(depth, uint64_t{1} << index_width);
}

// Cell selected by a symbolic index, as an OR of guarded cells.
Expr select_cell(const std::vector<Expr>& cells, Expr index, uint32_t width) {
    Expr acc = cst(width, 0);
    for (uint32_t j = 0; j < reachable(static_cast<uint32_t>(cells.size()), index.width()); ++j)
        acc = bor(acc, band(repeat_expr(index_is(index, j), width), cells[j]));
    return acc;
}

bool is_mixing(const Gate& g) {
    switch (g.kind) {
    case GateKind::Ucmp:
    case GateKind::Scmp:
    case GateKind::Equal:
    case GateKind::NotEqual:
    case GateKind::Add:
    case GateKind::Sub:
    case GateKind::Neg:
    case GateKind::Mul:
    case GateKind::IsZero:
    case GateKind::IsNeg:
        return true;
    case GateKind::Shl:
    case GateKind::Shr:
    case GateKind::Sshr:
        return !g.params.amount;
    default:
        return false;
    }
}

bool is_bitwise(GateKind k) {
    return k == GateKind::BitNot || k == GateKind::BitAnd || k == GateKind::BitOr ||
           k == GateKind::BitXor;
}

// Source of output bit i for rank-remapping gates; false for a constant
// extension bit.
bool remap(const Circuit& c, const Gate& g, uint32_t i, uint32_t& input, uint32_t& b) {
    uint32_t n = c.wire(g.inputs[0]).width;
    input = 0;
    switch (g.kind) {
    case GateKind::Shl: {
        uint32_t k = *g.params.amount;
        if (i < k) return false;
        b = i - k;
        return true;
    }
    case GateKind::Shr: {
        uint64_t k = *g.params.amount;
        if (i + k >= n) return false;
        b = static_cast<uint32_t>(i + k);
        return true;
    }
    case GateKind::Sshr:
        b = static_cast<uint32_t>(std::min<uint64_t>(uint64_t{i} + *g.params.amount, n - 1));
        return true;
    case GateKind::Trunc:
        b = i;
        return true;
    case GateKind::Zext:
        if (i >= n) return false;
        b = i;
        return true;
    case GateKind::Sext:
        b = std::min(i, n - 1);
        return true;
    case GateKind::Blit: {
        uint32_t o = g.params.offset, k = c.wire(g.inputs[1]).width;
        if (i >= o && i < o + k) {
            input = 1;
            b = i - o;
        } else {
            b = i;
        }
        return true;
    }
    case GateKind::Repeat:
        b = i % n;
        return true;
    case GateKind::MemWrite:
        input = 1;
        b = i;
        return true;
    default:
        throw SimulationError("gate kind has no rank mapping");
    }
}

uint64_t full(uint32_t w) { return width_mask(w); }

} // namespace

BitVec conc_eval(const Circuit& c, const Gate& g, const std::vector<BitVec>& ins) {
    uint32_t wo = c.wire(g.output).width;
    uint64_t m = width_mask(wo);
    uint64_t a = ins[0].bits();
    uint32_t n = ins[0].width();
    auto b = [&]() { return ins[1].bits(); };
    uint64_t r = 0;
    switch (g.kind) {
    case GateKind::BitNot: r = ~a; break;
    case GateKind::BitAnd: r = a & b(); break;
    case GateKind::BitOr: r = a | b(); break;
    case GateKind::BitXor: r = a ^ b(); break;
    case GateKind::Ucmp: r = a < b(); break;
    case GateKind::Scmp: r = ins[0].as_signed() < ins[1].as_signed(); break;
    case GateKind::Equal: r = a == b(); break;
    case GateKind::NotEqual: r = a != b(); break;
    case GateKind::Add: r = a + b(); break;
    case GateKind::Sub: r = a - b(); break;
    case GateKind::Neg: r = uint64_t{0} - a; break;
    case GateKind::Mul: r = a * b(); break;
    case GateKind::Shl:
    case GateKind::Shr:
    case GateKind::Sshr: {
        uint64_t k = g.params.amount ? *g.params.amount : b();
        if (g.kind == GateKind::Shl) r = k >= n ? 0 : a << k;
        else if (g.kind == GateKind::Shr) r = k >= n ? 0 : a >> k;
        else r = static_cast<uint64_t>(static_cast<int64_t>(sign_ext(a, n, 64)) >> std::min<uint64_t>(k, 63));
        break;
    }
    case GateKind::Trunc: r = a; break;
    case GateKind::Zext: r = a; break;
    case GateKind::Sext: r = sign_ext(a, n, wo); break;
    case GateKind::Blit: {
        uint32_t k = ins[1].width(), o = g.params.offset;
        uint64_t hole = width_mask(k) << o;
        r = (a & ~hole) | ((b() << o) & hole);
        break;
    }
    case GateKind::Repeat:
        for (uint32_t i = 0; i < g.params.count; ++i) r = (n >= 64 ? 0 : r << n) | a;
        break;
    case GateKind::IsZero: r = a == 0; break;
    case GateKind::IsNeg: r = ins[0].msb(); break;
    case GateKind::Mux: r = a ? ins[2].bits() : b(); break;
    case GateKind::MemWrite: r = b(); break;
    case GateKind::MemRead: throw SimulationError("mem_read is evaluated against memory state");
    }
    return BitVec(wo, r & m);
}

Expr symb_eval(const Circuit& c, const Gate& g, const std::vector<Expr>& ins) {
    uint32_t wo = c.wire(g.output).width;
    Expr a = ins[0];
    uint32_t n = a.width();
    switch (g.kind) {
    case GateKind::BitNot: return bnot(a);
    case GateKind::BitAnd: return band(a, ins[1]);
    case GateKind::BitOr: return bor(a, ins[1]);
    case GateKind::BitXor: return bxor(a, ins[1]);
    case GateKind::Ucmp:
    case GateKind::Scmp: {
        auto ext = g.kind == GateKind::Ucmp ? zext : sext;
        return extract(build(Op::Sub, {ext(a, n + 1), ext(ins[1], n + 1)}), n, n);
    }
    case GateKind::Equal: return bnot(or_reduce(bxor(a, ins[1])));
    case GateKind::NotEqual: return or_reduce(bxor(a, ins[1]));
    case GateKind::Add: return build(Op::Add, {a, ins[1]});
    case GateKind::Sub: return build(Op::Sub, {a, ins[1]});
    case GateKind::Neg: return build(Op::Sub, {cst(n, 0), a});
    case GateKind::Mul: return build(Op::Mul, {a, ins[1]});
    case GateKind::Shl:
    case GateKind::Shr:
    case GateKind::Sshr: {
        Op op = g.kind == GateKind::Shl ? Op::Lsl : g.kind == GateKind::Shr ? Op::Lsr : Op::Asr;
        Expr amt = g.params.amount ? cst(32, *g.params.amount) : ins[1];
        return build(op, {a, amt});
    }
    case GateKind::Trunc: return extract(a, wo - 1, 0);
    case GateKind::Zext: return zext(a, wo);
    case GateKind::Sext: return sext(a, wo);
    case GateKind::Blit: {
        uint32_t k = ins[1].width(), o = g.params.offset;
        std::vector<Expr> parts;
        if (o + k < wo) parts.push_back(extract(a, wo - 1, o + k));
        parts.push_back(ins[1]);
        if (o > 0) parts.push_back(extract(a, o - 1, 0));
        return concat(parts);
    }
    case GateKind::Repeat: return repeat_expr(a, g.params.count);
    case GateKind::IsZero: return bnot(or_reduce(a));
    case GateKind::IsNeg: return bit(a, n - 1);
    case GateKind::Mux: {
        Expr s = a;
        return bor(band(repeat_expr(s, wo), ins[2]), band(repeat_expr(bnot(s), wo), ins[1]));
    }
    case GateKind::MemWrite: return ins[1];
    case GateKind::MemRead: throw SimulationError("mem_read is evaluated against memory state");
    }
    throw SimulationError("unhandled gate kind");
}

// ---------------------------------------------------------------------------
// stimuli

namespace {

InputValue parse_input_value(const json& v, const Wire& w, const Assignment& witness,
                             const std::string& ctx) {
    InputValue iv;
    if (!v.is_object() || v.size() != 1)
        throw MalformedDocument(ctx + ": input value must be an object with one key");
    auto width_of = [&](std::string_view name) -> std::optional<uint32_t> {
        auto it = witness.find(std::string(name));
        if (it == witness.end()) return std::nullopt;
        return it->second.width();
    };
    try {
        if (v.contains("const")) {
            iv.kind = InputValue::Kind::Const;
            iv.value = BitVec::parse(v.at("const").get<std::string>(), w.width);
        } else if (v.contains("symbol")) {
            iv.kind = InputValue::Kind::Symbol;
            iv.symbol = v.at("symbol").get<std::string>();
            auto it = witness.find(iv.symbol);
            if (it == witness.end())
                throw MalformedDocument(ctx + ": witness has no value for symbol '" + iv.symbol + "'");
            if (it->second.width() != w.width)
                throw WidthMismatch(w.name, w.width, it->second.width());
        } else if (v.contains("expr")) {
            iv.kind = InputValue::Kind::Term;
            try {
                iv.term = parse_expr(v.at("expr").get<std::string>(), width_of);
            } catch (const UnboundSymbol& e) {
                throw MalformedDocument(ctx + ": witness has no value for symbol '" + e.name + "'");
            } catch (const ParseError& e) {
                throw MalformedDocument(ctx + ": " + e.what());
            }
            if (iv.term.width() != w.width) throw WidthMismatch(w.name, w.width, iv.term.width());
        } else {
            throw MalformedDocument(ctx + ": input value needs 'const', 'symbol' or 'expr'");
        }
    } catch (const json::exception&) {
        throw MalformedDocument(ctx + ": input value has the wrong type");
    }
    return iv;
}

json input_value_json(const InputValue& iv) {
    switch (iv.kind) {
    case InputValue::Kind::Const: return {{"const", iv.value.to_string()}};
    case InputValue::Kind::Symbol: return {{"symbol", iv.symbol}};
    case InputValue::Kind::Term: return {{"expr", render(iv.term)}};
    }
    return {};
}

} // namespace

Stimuli parse_stimuli(std::string_view text, const Circuit& c) {
    Stimuli s;
    std::istringstream in{std::string(text)};
    std::string line;
    bool header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string ctx = "stimuli line " + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            throw MalformedDocument(ctx + ": not valid JSON");
        }
        if (!j.is_object()) throw MalformedDocument(ctx + ": expected an object");
        if (!header) {
            if (!j.contains("witness") || !j.at("witness").is_object())
                throw MalformedDocument(ctx + ": first line must carry a 'witness' object");
            for (auto& [name, val] : j.at("witness").items()) {
                if (!val.is_string()) throw MalformedDocument(ctx + ": witness values must be strings");
                s.witness[name] = BitVec::parse(val.get<std::string>());
            }
            if (j.contains("masked_tables")) {
                for (const json& t : j.at("masked_tables")) {
                    MaskedTable mt;
                    try {
                        mt.memory = t.at("memory").get<std::string>();
                        mt.table = t.at("table").get<std::string>();
                        mt.in_mask = t.at("in_mask").get<std::string>();
                        mt.out_mask = t.at("out_mask").get<std::string>();
                        const Memory* m = c.memory(mt.memory);
                        if (!m) throw DanglingReference(mt.memory);
                        mt.width = m->width;
                        for (const json& v : t.at("values"))
                            mt.values.push_back(BitVec::parse(v.get<std::string>(), m->width).bits());
                    } catch (const json::exception&) {
                        throw MalformedDocument(ctx + ": malformed masked table");
                    }
                    s.masked_tables.push_back(std::move(mt));
                }
            }
            header = true;
            continue;
        }
        StimulusFrame f;
        if (!j.contains("cycle") || !j.at("cycle").is_number_integer())
            throw MalformedDocument(ctx + ": frame needs an integer 'cycle'");
        int64_t cyc = j.at("cycle").get<int64_t>();
        if (cyc != static_cast<int64_t>(s.frames.size()))
            throw MalformedDocument(ctx + ": frames must be numbered 0, 1, 2, ... in order");
        f.cycle = static_cast<uint32_t>(cyc);
        if (!j.contains("inputs") || !j.at("inputs").is_object())
            throw MalformedDocument(ctx + ": frame needs an 'inputs' object");
        for (auto& [name, val] : j.at("inputs").items()) {
            WireId w = c.wire_id(name);
            if (!c.is_input(w)) throw MalformedDocument(ctx + ": '" + name + "' is not an input");
            f.inputs[name] = parse_input_value(val, c.wire(w), s.witness, ctx);
        }
        for (WireId w : c.inputs) {
            const std::string& name = c.wire(w).name;
            if (f.inputs.count(name)) continue;
            if (s.frames.empty())
                throw MalformedDocument(ctx + ": cycle 0 has no value for input '" + name + "'");
            f.inputs[name] = s.frames.back().inputs.at(name);
        }
        s.frames.push_back(std::move(f));
    }
    if (!header) throw MalformedDocument("stimuli: missing witness header");
    return s;
}

std::string serialize_stimuli(const Stimuli& s, const Circuit&) {
    std::string out;
    json h;
    h["witness"] = json::object();
    for (auto& [k, v] : s.witness) h["witness"][k] = v.to_string();
    if (!s.masked_tables.empty()) {
        h["masked_tables"] = json::array();
        for (auto& t : s.masked_tables) {
            uint32_t w = t.width;
            json vals = json::array();
            for (uint64_t v : t.values) vals.push_back(BitVec(w, v).to_string());
            h["masked_tables"].push_back({{"memory", t.memory}, {"table", t.table},
                                          {"in_mask", t.in_mask}, {"out_mask", t.out_mask},
                                          {"values", vals}});
        }
    }
    out += h.dump() + "\n";
    for (auto& f : s.frames) {
        json j;
        j["cycle"] = f.cycle;
        j["inputs"] = json::object();
        for (auto& [k, v] : f.inputs) j["inputs"][k] = input_value_json(v);
        out += j.dump() + "\n";
    }
    return out;
}

Stimuli load_stimuli(const std::string& path, const Circuit& c) {
    return parse_stimuli(read_file(path), c);
}

// ---------------------------------------------------------------------------
// memory

MemoryHook masked_table_hook(std::vector<MaskedTable> tables) {
    return [tables = std::move(tables)](const std::string& memory, Expr index,
                                        const SimState&) -> std::optional<Expr> {
        for (const MaskedTable& t : tables) {
            if (t.memory != memory) continue;
            std::vector<Expr> terms =
                index.op() == Op::Xor ? index.children() : std::vector<Expr>{index};
            auto it = std::find_if(terms.begin(), terms.end(), [&](Expr e) {
                return e.is_symbol() && e.name() == t.in_mask;
            });
            if (it == terms.end()) return std::nullopt;
            terms.erase(it);
            Expr rest = terms.empty() ? cst(index.width(), 0) : build(Op::Xor, terms);
            return bxor(array_lookup(t.table, t.width, rest), symb(t.out_mask, t.width));
        }
        return std::nullopt;
    };
}

// ---------------------------------------------------------------------------
// state and stepping

SimState init_state(const Circuit& c, const Assignment& witness,
                    const std::vector<MaskedTable>& masked_tables) {
    SimState st;
    st.witness = witness;
    for (const Memory& m : c.memories) {
        MemoryState ms;
        ms.cells.resize(m.depth);
        ms.conc.resize(m.depth);
        for (uint32_t j = 0; j < m.depth; ++j) {
            uint64_t v = m.init.empty() ? 0 : m.init[j].bits();
            ms.cells[j] = cst(m.width, v);
            ms.conc[j] = v;
        }
        ms.prev_cells = ms.cells;
        ms.changed.assign(m.depth, 0);
        st.memories.emplace(m.id, std::move(ms));
    }
    for (const MaskedTable& t : masked_tables) {
        const Memory* m = c.memory(t.memory);
        if (!m) throw DanglingReference(t.memory);
        auto in = witness.find(t.in_mask), out = witness.find(t.out_mask);
        if (in == witness.end()) throw UnboundSymbol(t.in_mask);
        if (out == witness.end()) throw UnboundSymbol(t.out_mask);
        uint32_t iw = in->second.width();
        if (t.values.size() != m->depth || (uint64_t{1} << iw) != m->depth)
            throw MalformedDocument("masked table '" + t.table + "' must have 2^|" + t.in_mask +
                                    "| entries matching the memory depth");
        if (out->second.width() != m->width) throw WidthMismatch(t.memory, m->width, out->second.width());
        register_table(t.table, m->width, t.values);
        MemoryState& ms = st.memories.at(t.memory);
        Expr min = symb(t.in_mask, iw), mout = symb(t.out_mask, m->width);
        for (uint32_t j = 0; j < m->depth; ++j) {
            ms.cells[j] = bxor(array_lookup(t.table, m->width, bxor(cst(iw, j), min)), mout);
            ms.conc[j] = (t.values[j ^ in->second.bits()] ^ out->second.bits()) & width_mask(m->width);
        }
        ms.prev_cells = ms.cells;
    }
    return st;
}

namespace {

Valuation input_valuation(const Wire& w, const InputValue& iv, const Assignment& witness) {
    Valuation v;
    switch (iv.kind) {
    case InputValue::Kind::Const:
        v.conc = iv.value;
        v.symb = cst(iv.value);
        break;
    case InputValue::Kind::Symbol:
        v.symb = symb(iv.symbol, w.width);
        v.conc = witness.at(iv.symbol);
        break;
    case InputValue::Kind::Term:
        v.symb = iv.term;
        v.conc = eval_concrete(iv.term, witness);
        break;
    }
    v.stab = BitVec::zeros(w.width);
    v.lset.resize(w.width);
    if (!v.symb.is_const())
        for (uint32_t j = 0; j < w.width; ++j) v.lset[j] = make_leakset({bit(v.symb, j)});
    return v;
}

class GateEvaluator {
  public:
    GateEvaluator(const Circuit& c, SimState& st, const std::vector<Valuation>& vals,
                  const SimOptions& opts)
        : c_(c), st_(st), vals_(vals), opts_(opts) {}

    Valuation eval(const Gate& g) {
        const Wire& out = c_.wire(g.output);
        uint32_t wo = out.width;
        std::vector<const Valuation*> in;
        for (WireId w : g.inputs) in.push_back(&vals_[w]);

        Valuation v;
        v.lset.resize(wo);
        if (g.kind == GateKind::MemRead) {
            mem_read(g, in, v);
            return v;
        }
        std::vector<BitVec> cin;
        std::vector<Expr> sin;
        for (auto* p : in) {
            cin.push_back(p->conc);
            sin.push_back(p->symb);
        }
        v.conc = conc_eval(c_, g, cin);
        v.symb = symb_eval(c_, g, sin);
        check_const(out, v);
        if (g.kind == GateKind::Mux && !in[0]->symb.is_const())
            st_.warnings.push_back("mux selector of '" + out.name + "' is symbolic: " +
                                   render(in[0]->symb));

        uint64_t stab = 0;
        if (is_mixing(g)) {
            bool all = std::all_of(in.begin(), in.end(), [](const Valuation* p) {
                return p->stab.bits() == width_mask(p->width());
            });
            stab = all ? full(wo) : 0;
            LeakSet merged;
            if (!all)
                for (auto* p : in)
                    for (auto& s : p->lset) leakset_insert(merged, s);
            for (uint32_t i = 0; i < wo; ++i) v.lset[i] = merged;
        } else if (is_bitwise(g.kind)) {
            for (uint32_t i = 0; i < wo; ++i) {
                if (bitwise_stable(g.kind, in, i)) {
                    stab |= uint64_t{1} << i;
                } else {
                    for (auto* p : in) leakset_insert(v.lset[i], p->lset[i]);
                }
            }
        } else if (g.kind == GateKind::Mux) {
            const Valuation& sel = *in[0];
            bool sel_st = sel.stable(0);
            bool sel_const = sel.symb.is_const();
            uint32_t pick = sel_const ? 1 + static_cast<uint32_t>(sel.symb.const_value()) : 0;
            for (uint32_t i = 0; i < wo; ++i) {
                bool st;
                if (!sel_st) st = false;
                else if (sel_const) st = in[pick]->stable(i);
                else st = in[1]->stable(i) && in[2]->stable(i);
                if (st) {
                    stab |= uint64_t{1} << i;
                } else if (sel_st && sel_const) {
                    v.lset[i] = in[pick]->lset[i];
                } else {
                    v.lset[i] = sel.lset[0];
                    leakset_insert(v.lset[i], in[1]->lset[i]);
                    leakset_insert(v.lset[i], in[2]->lset[i]);
                }
            }
        } else {
            for (uint32_t i = 0; i < wo; ++i) {
                uint32_t src, b;
                if (!remap(c_, g, i, src, b) || in[src]->stable(b)) {
                    stab |= uint64_t{1} << i;
                } else {
                    v.lset[i] = in[src]->lset[b];
                }
            }
        }
        finish(v, stab);
        return v;
    }

  private:
    const Circuit& c_;
    SimState& st_;
    const std::vector<Valuation>& vals_;
    const SimOptions& opts_;

    static bool bit_is(Expr e, uint32_t i, uint64_t value) {
        if (e.is_const()) return ((e.const_value() >> i) & 1) == value;
        Expr b = bit(e, i);
        return b.is_const() && b.const_value() == value;
    }

    static bool bitwise_stable(GateKind k, const std::vector<const Valuation*>& in, uint32_t i) {
        if (k == GateKind::BitNot) return in[0]->stable(i);
        bool s1 = in[0]->stable(i), s2 = in[1]->stable(i);
        if (s1 && s2) return true;
        if (k == GateKind::BitXor) return false;
        uint64_t dominant = k == GateKind::BitAnd ? 0 : 1;
        return (s1 && bit_is(in[0]->symb, i, dominant)) || (s2 && bit_is(in[1]->symb, i, dominant));
    }

    void check_const(const Wire& out, const Valuation& v) {
        if (v.symb.is_const() && v.symb.const_value() != v.conc.bits()) {
            std::string detail = "symbolic " + render(v.symb) + " vs concrete " + v.conc.to_string();
            if (!opts_.keep_going) throw ConsistencyViolation(out.name, detail);
            st_.violations.emplace_back(out.name, detail);
        }
    }

    void finish(Valuation& v, uint64_t stab) {
        uint32_t wo = v.symb.width();
        if (!opts_.stability) {
            // only constant bits can be marked here; their sets are empty
            for (uint32_t i = 0; i < wo; ++i)
                if ((stab >> i) & 1) v.lset[i] = make_leakset({bit(v.symb, i)});
            v.stab = BitVec::zeros(wo);
            return;
        }
        v.stab = BitVec(wo, stab);
        for (uint32_t i = 0; i < wo; ++i)
            if ((stab >> i) & 1) v.lset[i] = make_leakset({bit(v.symb, i)});
    }

    void mem_read(const Gate& g, const std::vector<const Valuation*>& in, Valuation& v) {
        const Wire& out = c_.wire(g.output);
        const Valuation& idx = *in[0];
        MemoryState& ms = st_.memories.at(g.params.memory);
        uint32_t depth = static_cast<uint32_t>(ms.cells.size());
        uint64_t addr = idx.conc.bits();
        if (addr >= depth)
            throw SimulationError("memory '" + g.params.memory + "' read at index " +
                                  std::to_string(addr) + " beyond depth " + std::to_string(depth));
        bool idx_stable = idx.stab.bits() == width_mask(idx.width());
        uint32_t wo = out.width;
        v.conc = BitVec(wo, ms.conc[addr]);
        std::optional<Expr> hooked;
        bool sym_index = false;
        if (idx.symb.is_const()) {
            v.symb = ms.cells[addr];
        } else {
            if (opts_.hook) hooked = opts_.hook(g.params.memory, idx.symb, st_);
            if (hooked) {
                v.symb = *hooked;
            } else {
                sym_index = true;
                v.symb = select_cell(ms.cells, idx.symb, wo);
                st_.warnings.push_back("memory index of '" + out.name + "' is symbolic: " + render(idx.symb));
            }
        }
        check_const(out, v);

        LeakSet index_set;
        if (!idx_stable)
            for (auto& s : idx.lset) leakset_insert(index_set, s);
        if (sym_index) {
            for (uint32_t i = 0; i < idx.width(); ++i) leakset_insert(index_set, make_leakset({bit(idx.symb, i)}));
            idx_stable = false;
        }
        uint64_t stab = 0;
        for (uint32_t i = 0; i < wo; ++i) {
            bool st = idx_stable;
            if (st && !hooked && ms.changed[addr])
                st = bit(ms.cells[addr], i) == bit(ms.prev_cells[addr], i);
            if (st) {
                stab |= uint64_t{1} << i;
                continue;
            }
            std::vector<Expr> members;
            if (hooked) {
                members.push_back(bit(v.symb, i));
            } else if (idx_stable) {
                members.push_back(bit(ms.cells[addr], i));
                if (ms.changed[addr]) members.push_back(bit(ms.prev_cells[addr], i));
            } else {
                for (uint32_t j = 0; j < depth; ++j) {
                    members.push_back(bit(ms.cells[j], i));
                    if (ms.changed[j]) members.push_back(bit(ms.prev_cells[j], i));
                }
            }
            v.lset[i] = make_leakset(std::move(members));
            leakset_insert(v.lset[i], index_set);
        }
        finish(v, stab);
    }
};

} // namespace

void step_cycle(const Circuit& c, const Schedule& sched, SimState& st, const StimulusFrame& frame,
                const SimOptions& opts) {
    size_t n = c.wires.size();
    std::vector<Valuation> next(n);
    std::vector<char> assigned(n, 0);
    st.warnings.clear();
    st.violations.clear();
    auto assign = [&](WireId w, Valuation v) {
        if (assigned[w]) throw SimulationError("wire '" + c.wire(w).name + "' evaluated twice");
        assigned[w] = 1;
        next[w] = std::move(v);
    };

    for (size_t ri = 0; ri < c.registers.size(); ++ri) {
        const Register& r = c.registers[ri];
        uint32_t w = c.wire(r.output).width;
        Valuation v;
        v.lset.resize(w);
        if (!st.started) {
            v.conc = r.init;
            v.symb = cst(r.init);
            v.stab = opts.reset_unstable || !opts.stability ? BitVec::zeros(w) : BitVec::ones(w);
        } else {
            const Valuation& stored = st.register_state[ri];
            const Valuation& before = st.current[r.output];
            v.conc = stored.conc;
            v.symb = stored.symb;
            uint64_t stab = 0;
            for (uint32_t i = 0; i < w; ++i) {
                Expr cur = bit(v.symb, i), prev = bit(before.symb, i);
                if (cur == prev && opts.stability) {
                    stab |= uint64_t{1} << i;
                    v.lset[i] = make_leakset({cur});
                } else {
                    v.lset[i] = make_leakset({cur, prev});
                }
            }
            v.stab = BitVec(w, stab);
        }
        assign(r.output, std::move(v));
    }

    for (WireId w : c.inputs) {
        const Wire& wire = c.wire(w);
        auto it = frame.inputs.find(wire.name);
        if (it == frame.inputs.end())
            throw MalformedDocument("stimulus frame " + std::to_string(frame.cycle) +
                                    " has no value for input '" + wire.name + "'");
        assign(w, input_valuation(wire, it->second, st.witness));
    }

    GateEvaluator ev(c, st, next, opts);
    for (uint32_t gi : sched.order) {
        const Gate& g = c.gates[gi];
        assign(g.output, ev.eval(g));
    }
    for (WireId w = 0; w < n; ++w)
        if (!assigned[w]) throw SimulationError("wire '" + c.wire(w).name + "' was not evaluated");

    st.register_state.resize(c.registers.size());
    for (size_t ri = 0; ri < c.registers.size(); ++ri) st.register_state[ri] = next[c.registers[ri].input];

    for (auto& [id, ms] : st.memories) {
        ms.prev_cells = ms.cells;
        std::fill(ms.changed.begin(), ms.changed.end(), 0);
    }
    for (const Gate& g : c.gates) {
        if (g.kind != GateKind::MemWrite) continue;
        const Valuation& idx = next[g.inputs[0]];
        const Valuation& val = next[g.inputs[1]];
        const Valuation& en = next[g.inputs[2]];
        if (!en.symb.is_const())
            st.warnings.push_back("write enable of '" + c.wire(g.output).name + "' is symbolic");
        if (en.conc.bits() == 0) continue;
        MemoryState& ms = st.memories.at(g.params.memory);
        uint64_t addr = idx.conc.bits();
        if (addr >= ms.cells.size())
            throw SimulationError("memory '" + g.params.memory + "' written at index " +
                                  std::to_string(addr) + " beyond depth");
        ms.conc[addr] = val.conc.bits();
        if (idx.symb.is_const()) {
            ms.cells[addr] = val.symb;
            ms.changed[addr] = ms.cells[addr] != ms.prev_cells[addr];
            continue;
        }
        st.warnings.push_back("memory index of '" + c.wire(g.output).name + "' is symbolic: " + render(idx.symb));
        uint32_t w = val.symb.width();
        for (uint32_t j = 0; j < reachable(static_cast<uint32_t>(ms.cells.size()), idx.width()); ++j) {
            Expr hit = repeat_expr(index_is(idx.symb, j), w);
            ms.cells[j] = bor(band(hit, val.symb), band(repeat_expr(bnot(index_is(idx.symb, j)), w), ms.cells[j]));
            ms.changed[j] = ms.cells[j] != ms.prev_cells[j];
        }
    }

    if (st.started) {
        st.previous = std::move(st.current);
        st.current = std::move(next);
        ++st.cycle;
    } else {
        st.current = std::move(next);
        st.previous = st.current;
        st.cycle = 0;
        st.started = true;
    }
}

void consistency_check(const Circuit& c, const SimState& st) {
    for (WireId w = 0; w < st.current.size(); ++w) {
        const Valuation& v = st.current[w];
        BitVec got = eval_concrete(v.symb, st.witness);
        if (got != v.conc)
            throw ConsistencyViolation(c.wire(w).name, "symbolic evaluates to " + got.to_string() +
                                                            ", concrete is " + v.conc.to_string());
    }
}

Simulator::Simulator(const Circuit& c, const Stimuli& stimuli, SimOptions opts)
    : circuit_(c), sched_(validate_and_schedule(c)), stimuli_(stimuli), opts_(std::move(opts)) {
    state_ = init_state(c, stimuli_.witness, stimuli_.masked_tables);
    if (!stimuli_.masked_tables.empty()) {
        MemoryHook masked = masked_table_hook(stimuli_.masked_tables);
        MemoryHook user = opts_.hook;
        opts_.hook = [masked, user](const std::string& m, Expr idx, const SimState& s) {
            auto r = masked(m, idx, s);
            if (!r && user) r = user(m, idx, s);
            return r;
        };
    }
}

void Simulator::step() {
    if (done()) throw SimulationError("no stimulus frame left");
    step_cycle(circuit_, sched_, state_, stimuli_.frames[next_], opts_);
    ++next_;
}

} // namespace leakprobe
