#include "leakprobe/netlist.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "leakprobe/errors.hpp"

namespace leakprobe {

using json = nlohmann::json;

namespace {

constexpr std::pair<GateKind, std::string_view> kKindNames[] = {
    {GateKind::BitNot, "bit_not"}, {GateKind::BitAnd, "bit_and"},
    {GateKind::BitOr, "bit_or"},   {GateKind::BitXor, "bit_xor"},
    {GateKind::Ucmp, "ucmp"},      {GateKind::Scmp, "scmp"},
    {GateKind::Equal, "equal"},    {GateKind::NotEqual, "not_equal"},
    {GateKind::Add, "add"},        {GateKind::Sub, "sub"},
    {GateKind::Neg, "neg"},        {GateKind::Mul, "mul"},
    {GateKind::Shl, "shl"},        {GateKind::Shr, "shr"},
    {GateKind::Sshr, "sshr"},      {GateKind::Trunc, "trunc"},
    {GateKind::Zext, "zext"},      {GateKind::Sext, "sext"},
    {GateKind::Blit, "blit"},      {GateKind::Repeat, "repeat"},
    {GateKind::IsZero, "is_zero"}, {GateKind::IsNeg, "is_neg"},
    {GateKind::MemRead, "mem_read"}, {GateKind::MemWrite, "mem_write"},
    {GateKind::Mux, "mux"},
};

bool is_shift(GateKind k) { return k == GateKind::Shl || k == GateKind::Shr || k == GateKind::Sshr; }

} // namespace

std::string_view gate_kind_name(GateKind k) {
    for (auto& [kind, name] : kKindNames)
        if (kind == k) return name;
    return "?";
}

std::optional<GateKind> gate_kind_from_name(std::string_view name) {
    for (auto& [kind, n] : kKindNames)
        if (n == name) return kind;
    return std::nullopt;
}

WireId Circuit::add_wire(const std::string& name, uint32_t width, std::optional<SrcLoc> src) {
    if (name.empty()) throw MalformedDocument("wire name must not be empty");
    if (width == 0 || width > kMaxWidth)
        throw MalformedDocument("wire '" + name + "' has width " + std::to_string(width) +
                                ", must be in [1, 64]");
    if (by_name_.count(name)) throw MalformedDocument("duplicate wire name '" + name + "'");
    WireId id = static_cast<WireId>(wires.size());
    wires.push_back(Wire{id, name, width, std::move(src)});
    by_name_.emplace(name, id);
    return id;
}

uint32_t Circuit::add_gate(GateKind kind, std::vector<WireId> ins, WireId out, GateParams params) {
    gates.push_back(Gate{kind, std::move(ins), out, std::move(params)});
    return static_cast<uint32_t>(gates.size() - 1);
}

void Circuit::add_register(WireId in, WireId out, BitVec init) {
    registers.push_back(Register{in, out, init});
}

std::optional<WireId> Circuit::find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

WireId Circuit::wire_id(std::string_view name) const {
    auto w = find(name);
    if (!w) throw DanglingReference(std::string(name));
    return *w;
}

const Memory* Circuit::memory(std::string_view id) const {
    for (auto& m : memories)
        if (m.id == id) return &m;
    return nullptr;
}

bool Circuit::is_input(WireId w) const { return w < is_input_.size() && is_input_[w]; }

void Circuit::validate() {
    size_t n = wires.size();
    auto check_id = [&](WireId w) {
        if (w >= n) throw DanglingReference("#" + std::to_string(w));
    };
    driver_gate_.assign(n, -1);
    driver_reg_.assign(n, -1);
    is_input_.assign(n, 0);
    for (WireId w : inputs) {
        check_id(w);
        if (is_input_[w]) throw MalformedDocument("input '" + wires[w].name + "' listed twice");
        is_input_[w] = 1;
    }
    for (WireId w : outputs) check_id(w);

    auto claim = [&](WireId w) {
        if (is_input_[w] || driver_gate_[w] >= 0 || driver_reg_[w] >= 0)
            throw MultipleDrivers(wires[w].name);
    };

    for (size_t gi = 0; gi < gates.size(); ++gi) {
        const Gate& g = gates[gi];
        check_id(g.output);
        for (WireId w : g.inputs) check_id(w);
        const std::string& gname = wires[g.output].name;
        uint32_t wo = wires[g.output].width;
        auto arity = [&](size_t k) {
            if (g.inputs.size() != k)
                throw MalformedDocument("gate '" + gname + "' of kind " +
                                        std::string(gate_kind_name(g.kind)) + " expects " +
                                        std::to_string(k) + " inputs, got " +
                                        std::to_string(g.inputs.size()));
        };
        auto win = [&](size_t i) { return wires[g.inputs[i]].width; };
        auto expect = [&](uint32_t expected, uint32_t actual) {
            if (expected != actual) throw WidthMismatch(gname, expected, actual);
        };
        switch (g.kind) {
        case GateKind::BitNot:
        case GateKind::Neg:
            arity(1);
            expect(win(0), wo);
            break;
        case GateKind::BitAnd:
        case GateKind::BitOr:
        case GateKind::BitXor:
        case GateKind::Add:
        case GateKind::Sub:
        case GateKind::Mul:
            arity(2);
            expect(win(0), win(1));
            expect(win(0), wo);
            break;
        case GateKind::Ucmp:
        case GateKind::Scmp:
            arity(2);
            expect(win(0), win(1));
            expect(1, wo);
            if (win(0) > 63)
                throw MalformedDocument("gate '" + gname + "': comparison inputs limited to 63 bits");
            break;
        case GateKind::Equal:
        case GateKind::NotEqual:
            arity(2);
            expect(win(0), win(1));
            expect(1, wo);
            break;
        case GateKind::Shl:
        case GateKind::Shr:
        case GateKind::Sshr:
            if (g.params.amount) arity(1);
            else arity(2);
            expect(win(0), wo);
            break;
        case GateKind::Trunc:
            arity(1);
            if (wo > win(0)) throw WidthMismatch(gname, win(0), wo);
            break;
        case GateKind::Zext:
        case GateKind::Sext:
            arity(1);
            if (wo < win(0)) throw WidthMismatch(gname, win(0), wo);
            break;
        case GateKind::Blit:
            arity(2);
            expect(win(0), wo);
            if (g.params.offset + win(1) > wo)
                throw MalformedDocument("gate '" + gname + "': blit source does not fit at offset " +
                                        std::to_string(g.params.offset));
            break;
        case GateKind::Repeat:
            arity(1);
            if (g.params.count == 0)
                throw MalformedDocument("gate '" + gname + "': repeat needs count >= 1");
            expect(win(0) * g.params.count, wo);
            break;
        case GateKind::IsZero:
        case GateKind::IsNeg:
            arity(1);
            expect(1, wo);
            break;
        case GateKind::MemRead:
        case GateKind::MemWrite: {
            arity(g.kind == GateKind::MemRead ? 1 : 3);
            const Memory* m = memory(g.params.memory);
            if (!m) throw DanglingReference(g.params.memory);
            expect(m->width, wo);
            if (g.kind == GateKind::MemWrite) {
                expect(m->width, win(1));
                expect(1, win(2));
            }
            break;
        }
        case GateKind::Mux:
            arity(3);
            expect(1, win(0));
            expect(wo, win(1));
            expect(wo, win(2));
            break;
        }
        claim(g.output);
        driver_gate_[g.output] = static_cast<int32_t>(gi);
    }

    for (size_t ri = 0; ri < registers.size(); ++ri) {
        const Register& r = registers[ri];
        check_id(r.input);
        check_id(r.output);
        uint32_t w = wires[r.output].width;
        if (wires[r.input].width != w)
            throw WidthMismatch(wires[r.output].name, w, wires[r.input].width);
        if (r.init.width() != w) throw WidthMismatch(wires[r.output].name, w, r.init.width());
        claim(r.output);
        driver_reg_[r.output] = static_cast<int32_t>(ri);
    }

    for (WireId w = 0; w < n; ++w)
        if (!is_input_[w] && driver_gate_[w] < 0 && driver_reg_[w] < 0)
            throw MalformedDocument("wire '" + wires[w].name + "' has no driver");

    std::set<std::string> parents;
    for (const Split& s : splits) {
        if (!parents.insert(s.parent).second)
            throw MalformedDocument("split parent '" + s.parent + "' declared twice");
        if (s.width == 0 || s.width > kMaxWidth || s.bits.size() != s.width)
            throw MalformedDocument("split '" + s.parent + "' must list exactly " +
                                    std::to_string(s.width) + " bits");
        std::vector<char> seen(s.width, 0);
        for (const SplitBit& b : s.bits) {
            check_id(b.wire);
            if (wires[b.wire].width != 1) throw WidthMismatch(wires[b.wire].name, 1, wires[b.wire].width);
            if (b.index >= s.width || seen[b.index])
                throw MalformedDocument("split '" + s.parent + "' bit index " +
                                        std::to_string(b.index) + " is out of range or repeated");
            seen[b.index] = 1;
        }
    }

    std::set<std::string> mem_ids;
    for (const Memory& m : memories) {
        if (!mem_ids.insert(m.id).second)
            throw MalformedDocument("memory '" + m.id + "' declared twice");
        if (m.depth == 0 || m.width == 0 || m.width > kMaxWidth)
            throw MalformedDocument("memory '" + m.id + "' has invalid shape");
        if (!m.init.empty() && m.init.size() != m.depth)
            throw MalformedDocument("memory '" + m.id + "' init must list depth entries");
        for (auto& v : m.init)
            if (v.width() != m.width) throw WidthMismatch(m.id, m.width, v.width());
    }
}

namespace {

template <class T>
T get(const json& j, const char* key, const std::string& ctx) {
    if (!j.is_object() || !j.contains(key))
        throw MalformedDocument(ctx + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw MalformedDocument(ctx + ": key '" + key + "' has the wrong type");
    }
}

uint32_t get_u32(const json& j, const char* key, const std::string& ctx) {
    int64_t v = get<int64_t>(j, key, ctx);
    if (v < 0 || v > UINT32_MAX) throw MalformedDocument(ctx + ": key '" + key + "' out of range");
    return static_cast<uint32_t>(v);
}

const json& array_at(const json& j, const char* key, bool optional) {
    static const json empty = json::array();
    if (!j.contains(key)) {
        if (optional) return empty;
        throw MalformedDocument(std::string("netlist: missing key '") + key + "'");
    }
    const json& a = j.at(key);
    if (!a.is_array()) throw MalformedDocument(std::string("netlist: '") + key + "' must be an array");
    return a;
}

} // namespace

Circuit parse_netlist(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedDocument(std::string("netlist is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw MalformedDocument("netlist must be a JSON object");

    Circuit c;
    for (const json& w : array_at(doc, "wires", false)) {
        std::optional<SrcLoc> src;
        if (w.contains("src")) {
            const json& s = w.at("src");
            src = SrcLoc{get<std::string>(s, "file", "wire src"), get<int>(s, "line", "wire src")};
        }
        c.add_wire(get<std::string>(w, "name", "wire"), get_u32(w, "width", "wire"), src);
    }
    auto ref = [&](const json& j) {
        if (!j.is_string()) throw MalformedDocument("wire reference must be a string");
        return c.wire_id(j.get<std::string>());
    };
    for (const json& n : array_at(doc, "inputs", false)) c.add_input(ref(n));
    for (const json& n : array_at(doc, "outputs", false)) c.add_output(ref(n));

    for (const json& g : array_at(doc, "gates", false)) {
        std::string kind = get<std::string>(g, "kind", "gate");
        auto k = gate_kind_from_name(kind);
        if (!k) throw UnknownGateKind(kind);
        WireId out = c.wire_id(get<std::string>(g, "output", "gate"));
        std::vector<WireId> ins;
        if (!g.contains("inputs") || !g.at("inputs").is_array())
            throw MalformedDocument("gate: 'inputs' must be an array");
        for (const json& n : g.at("inputs")) ins.push_back(ref(n));
        GateParams p;
        if (g.contains("params")) {
            const json& pj = g.at("params");
            if (!pj.is_object()) throw MalformedDocument("gate: 'params' must be an object");
            std::string ctx = "gate '" + c.wire(out).name + "' params";
            if (pj.contains("amount")) p.amount = get_u32(pj, "amount", ctx);
            if (pj.contains("offset")) p.offset = get_u32(pj, "offset", ctx);
            if (pj.contains("count")) p.count = get_u32(pj, "count", ctx);
            if (pj.contains("memory")) p.memory = get<std::string>(pj, "memory", ctx);
        }
        if (is_shift(*k) && !p.amount && ins.size() == 1)
            throw MalformedDocument("shift gate '" + c.wire(out).name + "' needs an amount");
        c.add_gate(*k, std::move(ins), out, std::move(p));
    }

    for (const json& r : array_at(doc, "registers", false)) {
        WireId in = c.wire_id(get<std::string>(r, "input", "register"));
        WireId out = c.wire_id(get<std::string>(r, "output", "register"));
        BitVec init = BitVec::parse(get<std::string>(r, "init", "register"), c.wire(out).width);
        c.add_register(in, out, init);
    }

    for (const json& s : array_at(doc, "splits", true)) {
        Split sp;
        sp.parent = get<std::string>(s, "parent", "split");
        sp.width = get_u32(s, "width", "split");
        if (!s.contains("bits") || !s.at("bits").is_array())
            throw MalformedDocument("split: 'bits' must be an array");
        for (const json& b : s.at("bits"))
            sp.bits.push_back(SplitBit{c.wire_id(get<std::string>(b, "wire", "split bit")),
                                       get_u32(b, "index", "split bit")});
        c.add_split(std::move(sp));
    }

    for (const json& m : array_at(doc, "memories", true)) {
        Memory mem;
        mem.id = get<std::string>(m, "id", "memory");
        mem.depth = get_u32(m, "depth", "memory");
        mem.width = get_u32(m, "width", "memory");
        if (m.contains("init")) {
            if (!m.at("init").is_array()) throw MalformedDocument("memory: 'init' must be an array");
            for (const json& v : m.at("init")) {
                if (!v.is_string()) throw MalformedDocument("memory init entries must be strings");
                mem.init.push_back(BitVec::parse(v.get<std::string>(), mem.width));
            }
        }
        c.add_memory(std::move(mem));
    }

    c.validate();
    return c;
}

std::string serialize_netlist(const Circuit& c) {
    json doc;
    doc["wires"] = json::array();
    for (const Wire& w : c.wires) {
        json j{{"name", w.name}, {"width", w.width}};
        if (w.src) j["src"] = {{"file", w.src->file}, {"line", w.src->line}};
        doc["wires"].push_back(j);
    }
    auto names = [&](const std::vector<WireId>& ids) {
        json a = json::array();
        for (WireId w : ids) a.push_back(c.wire(w).name);
        return a;
    };
    doc["inputs"] = names(c.inputs);
    doc["outputs"] = names(c.outputs);
    doc["gates"] = json::array();
    for (const Gate& g : c.gates) {
        json j{{"kind", gate_kind_name(g.kind)}, {"output", c.wire(g.output).name},
               {"inputs", names(g.inputs)}};
        json p = json::object();
        if (g.params.amount) p["amount"] = *g.params.amount;
        if (g.kind == GateKind::Blit) p["offset"] = g.params.offset;
        if (g.kind == GateKind::Repeat) p["count"] = g.params.count;
        if (!g.params.memory.empty()) p["memory"] = g.params.memory;
        if (!p.empty()) j["params"] = p;
        doc["gates"].push_back(j);
    }
    doc["registers"] = json::array();
    for (const Register& r : c.registers)
        doc["registers"].push_back({{"input", c.wire(r.input).name},
                                    {"output", c.wire(r.output).name},
                                    {"init", r.init.to_string()}});
    if (!c.splits.empty()) {
        doc["splits"] = json::array();
        for (const Split& s : c.splits) {
            json bits = json::array();
            for (auto& b : s.bits) bits.push_back({{"wire", c.wire(b.wire).name}, {"index", b.index}});
            doc["splits"].push_back({{"parent", s.parent}, {"width", s.width}, {"bits", bits}});
        }
    }
    if (!c.memories.empty()) {
        doc["memories"] = json::array();
        for (const Memory& m : c.memories) {
            json j{{"id", m.id}, {"depth", m.depth}, {"width", m.width}};
            if (!m.init.empty()) {
                json init = json::array();
                for (auto& v : m.init) init.push_back(v.to_string());
                j["init"] = init;
            }
            doc["memories"].push_back(j);
        }
    }
    return doc.dump(1);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Circuit load_netlist(const std::string& path) { return parse_netlist(read_file(path)); }

Schedule validate_and_schedule(const Circuit& c) {
    size_t ng = c.gates.size();
    std::vector<uint32_t> pending(ng, 0);
    std::vector<std::vector<uint32_t>> users(ng);
    for (uint32_t gi = 0; gi < ng; ++gi) {
        for (WireId w : c.gates[gi].inputs) {
            int32_t d = c.driver_gate(w);
            if (d >= 0) {
                ++pending[gi];
                users[static_cast<size_t>(d)].push_back(gi);
            }
        }
    }
    Schedule s;
    std::vector<uint32_t> ready;
    for (uint32_t gi = ng; gi-- > 0;)
        if (pending[gi] == 0) ready.push_back(gi);
    while (!ready.empty()) {
        uint32_t g = ready.back();
        ready.pop_back();
        s.order.push_back(g);
        for (auto it = users[g].rbegin(); it != users[g].rend(); ++it)
            if (--pending[*it] == 0) ready.push_back(*it);
    }
    if (s.order.size() == ng) return s;

    // Walk backwards along combinational drivers from a stuck gate until a
    // gate repeats; the repeated stretch is a cycle.
    uint32_t g = 0;
    while (pending[g] == 0) ++g;
    std::vector<uint32_t> path;
    std::vector<int> pos(ng, -1);
    while (pos[g] < 0) {
        pos[g] = static_cast<int>(path.size());
        path.push_back(g);
        for (WireId w : c.gates[g].inputs) {
            int32_t d = c.driver_gate(w);
            if (d >= 0 && pending[static_cast<size_t>(d)] > 0) {
                g = static_cast<uint32_t>(d);
                break;
            }
        }
    }
    std::vector<std::string> cycle;
    for (size_t i = static_cast<size_t>(pos[g]); i < path.size(); ++i)
        cycle.push_back(c.wire(c.gates[path[i]].output).name);
    std::reverse(cycle.begin(), cycle.end());
    throw CombinatorialLoop(cycle);
}

StructuralIndex structural_index(const Circuit& c) {
    StructuralIndex ix;
    ix.fanout.resize(c.wires.size());
    ix.register_fanout.resize(c.wires.size());
    for (uint32_t ri = 0; ri < c.registers.size(); ++ri) {
        ix.register_input_wires.insert(c.registers[ri].input);
        ix.register_fanout[c.registers[ri].input].push_back(ri);
    }
    ix.primary_output_wires.insert(c.outputs.begin(), c.outputs.end());
    for (const Split& s : c.splits)
        for (auto& b : s.bits) ix.split_wires.insert(b.wire);
    for (uint32_t gi = 0; gi < c.gates.size(); ++gi) {
        const Gate& g = c.gates[gi];
        for (WireId w : g.inputs) {
            auto& f = ix.fanout[w];
            if (f.empty() || f.back() != gi) f.push_back(gi);
        }
        if (g.kind == GateKind::Mux) ix.mux_roles[gi] = MuxRole{g.inputs[0], g.inputs[1], g.inputs[2]};
    }
    return ix;
}

} // namespace leakprobe
