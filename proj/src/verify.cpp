#include "leakprobe/verify.hpp"

#include <algorithm>
#include <cstring>
#include <functional>
#include <numeric>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "leakprobe/errors.hpp"

namespace leakprobe {

using json = nlohmann::json;

std::string_view symbol_kind_name(SymbolKind k) {
    switch (k) {
    case SymbolKind::Secret: return "secret";
    case SymbolKind::Mask: return "mask";
    case SymbolKind::Share: return "share";
    case SymbolKind::Public: return "public";
    }
    return "?";
}

std::string_view verdict_name(VerdictKind k) {
    switch (k) {
    case VerdictKind::Secure: return "secure";
    case VerdictKind::Leaks: return "leaks";
    case VerdictKind::Inconclusive: return "inconclusive";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// labels

void SymbolTable::add(SymbolInfo info) {
    if (info.name.empty()) throw MalformedDocument("symbol name must not be empty");
    if (info.name.find_first_of("(), \n\t") != std::string::npos)
        throw MalformedDocument("symbol name '" + info.name + "' contains a reserved character");
    if (info.width == 0 || info.width > kMaxWidth)
        throw MalformedDocument("symbol '" + info.name + "' has invalid width");
    if (symbols_.count(info.name)) throw MalformedDocument("symbol '" + info.name + "' declared twice");
    if (info.kind == SymbolKind::Share) {
        if (info.secret.empty())
            throw MalformedDocument("share '" + info.name + "' must name its secret");
        for (auto& [n, s] : symbols_) {
            if (s.kind != SymbolKind::Share || s.secret != info.secret) continue;
            if (s.index == info.index)
                throw MalformedDocument("share index " + std::to_string(info.index) + " of secret '" +
                                        info.secret + "' used twice");
            if (s.width != info.width)
                throw MalformedDocument("shares of secret '" + info.secret + "' differ in width");
        }
    }
    symbols_.emplace(info.name, std::move(info));
}

const SymbolInfo* SymbolTable::find(std::string_view name) const {
    auto it = symbols_.find(name);
    return it == symbols_.end() ? nullptr : &it->second;
}

const SymbolInfo& SymbolTable::at(std::string_view name) const {
    auto* s = find(name);
    if (!s) throw UnboundSymbol(std::string(name));
    return *s;
}

std::vector<std::string> SymbolTable::shares_of(const std::string& secret) const {
    std::vector<const SymbolInfo*> v;
    for (auto& [n, s] : symbols_)
        if (s.kind == SymbolKind::Share && s.secret == secret) v.push_back(&s);
    std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->index < b->index; });
    std::vector<std::string> out;
    for (auto* s : v) out.push_back(s->name);
    return out;
}

std::vector<std::string> SymbolTable::shared_secrets() const {
    std::set<std::string> out;
    for (auto& [n, s] : symbols_)
        if (s.kind == SymbolKind::Share) out.insert(s.secret);
    return {out.begin(), out.end()};
}

uint32_t SymbolTable::secret_width(const std::string& secret) const {
    if (auto* s = find(secret)) return s->width;
    auto shares = shares_of(secret);
    if (shares.empty()) throw UnboundSymbol(secret);
    return at(shares[0]).width;
}

SymbolWidthFn SymbolTable::width_fn() const {
    return [this](std::string_view name) -> std::optional<uint32_t> {
        if (auto* s = find(name)) return s->width;
        return std::nullopt;
    };
}

SymbolTable parse_labels(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedDocument(std::string("labels are not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("symbols") || !doc.at("symbols").is_array())
        throw MalformedDocument("labels need a 'symbols' array");
    SymbolTable t;
    for (const json& s : doc.at("symbols")) {
        SymbolInfo info;
        try {
            info.name = s.at("name").get<std::string>();
            info.width = s.at("width").get<uint32_t>();
            std::string kind = s.at("kind").get<std::string>();
            if (kind == "secret") info.kind = SymbolKind::Secret;
            else if (kind == "mask") info.kind = SymbolKind::Mask;
            else if (kind == "public") info.kind = SymbolKind::Public;
            else if (kind == "share") info.kind = SymbolKind::Share;
            else throw MalformedDocument("unknown symbol kind '" + kind + "'");
            if (info.kind == SymbolKind::Share) {
                info.secret = s.at("secret").get<std::string>();
                info.index = s.at("index").get<uint32_t>();
            }
        } catch (const json::exception&) {
            throw MalformedDocument("malformed symbol entry in labels");
        }
        t.add(std::move(info));
    }
    for (const auto& sec : t.shared_secrets()) {
        const SymbolInfo* s = t.find(sec);
        if (!s) continue;
        if (s->kind != SymbolKind::Secret)
            throw MalformedDocument("'" + sec + "' has shares but is not a secret");
        if (s->width != t.at(t.shares_of(sec)[0]).width)
            throw MalformedDocument("secret '" + sec + "' and its shares differ in width");
    }
    return t;
}

std::string serialize_labels(const SymbolTable& t) {
    json doc;
    doc["symbols"] = json::array();
    for (auto& [n, s] : t.symbols()) {
        json j{{"name", s.name}, {"width", s.width}, {"kind", symbol_kind_name(s.kind)}};
        if (s.kind == SymbolKind::Share) {
            j["secret"] = s.secret;
            j["index"] = s.index;
        }
        doc["symbols"].push_back(j);
    }
    return doc.dump(1);
}

SymbolTable load_labels(const std::string& path) { return parse_labels(read_file(path)); }

// ---------------------------------------------------------------------------
// ExprSet

ExprSet::ExprSet(std::vector<Expr> members) {
    members.erase(std::remove_if(members.begin(), members.end(), [](Expr e) { return e.is_const(); }),
                  members.end());
    std::sort(members.begin(), members.end(), ExprLess{});
    members.erase(std::unique(members.begin(), members.end()), members.end());
    members_ = std::move(members);
}

void ExprSet::insert(Expr e) {
    if (e.is_const()) return;
    auto it = std::lower_bound(members_.begin(), members_.end(), e, ExprLess{});
    if (it != members_.end() && *it == e) return;
    members_.insert(it, e);
}

void ExprSet::insert(const ExprSet& other) {
    std::vector<Expr> out;
    out.reserve(members_.size() + other.members_.size());
    std::set_union(members_.begin(), members_.end(), other.members_.begin(), other.members_.end(),
                   std::back_inserter(out), ExprLess{});
    members_ = std::move(out);
}

std::vector<std::string> ExprSet::rendered() const {
    std::vector<std::string> out;
    for (Expr e : members_) out.push_back(render(e));
    return out;
}

std::string ExprSet::key() const {
    std::string k;
    for (Expr e : members_) {
        k += render(e);
        k += '\n';
    }
    return k;
}

// ---------------------------------------------------------------------------
// substitution

namespace {

Expr rebuild_like(Expr e, std::vector<Expr> kids) {
    OpParams p;
    p.hi = e.hi();
    p.lo = e.lo();
    p.width = e.width();
    p.table = e.name();
    return build(e.op(), std::move(kids), p);
}

Expr replace(Expr e, Expr target, Expr with, std::unordered_map<const ExprNode*, Expr>& memo) {
    if (e == target) return with;
    if (e.arity() == 0) return e;
    if (auto it = memo.find(e.node()); it != memo.end()) return it->second;
    std::vector<Expr> kids;
    bool changed = false;
    for (Expr k : e.children()) {
        Expr r = replace(k, target, with, memo);
        changed |= r != k;
        kids.push_back(r);
    }
    Expr out = changed ? rebuild_like(e, std::move(kids)) : e;
    memo.emplace(e.node(), out);
    return out;
}

// Occurrences of `m` in the tree expansion of `e`, saturated at 2.
int occurrences(Expr e, Expr m, std::unordered_map<const ExprNode*, int>& memo) {
    if (e == m) return 1;
    if (e.arity() == 0) return 0;
    if (auto it = memo.find(e.node()); it != memo.end()) return it->second;
    int n = 0;
    for (Expr k : e.children()) {
        n += occurrences(k, m, memo);
        if (n >= 2) {
            n = 2;
            break;
        }
    }
    memo.emplace(e.node(), n);
    return n;
}

bool has_secret(const std::vector<Expr>& members, const SymbolTable& labels) {
    for (Expr e : members)
        for (auto& name : symbols_of(e)) {
            const SymbolInfo* s = labels.find(name);
            if (s && (s->kind == SymbolKind::Secret || s->kind == SymbolKind::Share)) return true;
        }
    return false;
}

} // namespace

Verdict check_substitution(const ExprSet& set, const SymbolTable& labels) {
    std::vector<Expr> cur = set.members();
    std::map<std::string, uint32_t> fresh;
    uint32_t counter = 0;
    while (has_secret(cur, labels)) {
        std::map<std::string, uint32_t> masks;
        for (Expr e : cur)
            for (auto& name : symbols_of(e)) {
                if (auto it = fresh.find(name); it != fresh.end()) {
                    masks.emplace(name, it->second);
                } else {
                    const SymbolInfo& s = labels.at(name);
                    if (s.kind == SymbolKind::Mask) masks.emplace(name, s.width);
                }
            }
        bool progressed = false;
        for (auto& [name, width] : masks) {
            Expr m = symb(name, width);
            std::unordered_map<const ExprNode*, int> memo;
            int total = 0;
            size_t owner = 0;
            for (size_t i = 0; i < cur.size() && total < 2; ++i) {
                int n = occurrences(cur[i], m, memo);
                if (n > 0) owner = i;
                total += n;
            }
            if (total != 1) continue;
            std::vector<Expr> path{cur[owner]};
            while (path.back() != m) {
                for (Expr k : path.back().children()) {
                    if (occurrences(k, m, memo) > 0) {
                        path.push_back(k);
                        break;
                    }
                }
            }
            size_t u = path.size() - 1;
            if (u > 0 && path[u - 1].op() == Op::Extract) --u;
            if (u == 0) continue;
            Expr x = path[u - 1];
            if (x.op() != Op::Xor && x.op() != Op::Not) continue;
            std::string fname = "$f" + std::to_string(counter++);
            fresh.emplace(fname, x.width());
            Expr f = symb(fname, x.width());
            std::unordered_map<const ExprNode*, Expr> rmemo;
            for (Expr& e : cur) e = replace(e, x, f, rmemo);
            progressed = true;
            break;
        }
        if (!progressed) break;
    }
    if (has_secret(cur, labels))
        return Verdict::inconclusive("substitution could not remove every secret");
    return Verdict::make_secure();
}

// ---------------------------------------------------------------------------
// enumeration

namespace {

struct Var {
    std::string name;
    uint32_t width;
};

struct Derived {
    size_t target;
    size_t secret;
    std::vector<size_t> others;
};

struct Plan {
    std::vector<Var> vars;
    std::vector<size_t> pub, sec, uni;
    std::vector<Derived> derived;
    uint32_t bits(const std::vector<size_t>& g) const {
        uint32_t b = 0;
        for (size_t i : g) b += vars[i].width;
        return b;
    }
};

Plan make_plan(const ExprSet& set, const SymbolTable& labels) {
    std::set<std::string> names;
    for (Expr e : set.members())
        for (auto& n : symbols_of(e)) names.insert(n);
    Plan p;
    std::map<std::string, size_t> index;
    auto var = [&](const std::string& name, uint32_t width) {
        auto it = index.find(name);
        if (it != index.end()) return it->second;
        p.vars.push_back(Var{name, width});
        index.emplace(name, p.vars.size() - 1);
        return p.vars.size() - 1;
    };
    std::map<std::string, std::vector<std::string>> shares_seen;
    for (auto& n : names) {
        const SymbolInfo& s = labels.at(n);
        switch (s.kind) {
        case SymbolKind::Secret: p.sec.push_back(var(n, s.width)); break;
        case SymbolKind::Mask: p.uni.push_back(var(n, s.width)); break;
        case SymbolKind::Public: p.pub.push_back(var(n, s.width)); break;
        case SymbolKind::Share: shares_seen[s.secret].push_back(n); break;
        }
    }
    for (auto& [secret, seen] : shares_seen) {
        std::vector<std::string> declared = labels.shares_of(secret);
        if (seen.size() != declared.size()) {
            for (auto& n : seen) p.uni.push_back(var(n, labels.at(n).width));
            continue;
        }
        uint32_t w = labels.secret_width(secret);
        bool had = index.count(secret) > 0;
        size_t sv = var(secret, w);
        if (!had) p.sec.push_back(sv);
        Derived d{0, sv, {}};
        for (size_t i = 0; i + 1 < declared.size(); ++i) {
            size_t v = var(declared[i], w);
            p.uni.push_back(v);
            d.others.push_back(v);
        }
        d.target = var(declared.back(), w);
        p.derived.push_back(std::move(d));
    }
    return p;
}

void scatter(const Plan& p, const std::vector<size_t>& group, uint64_t x, std::vector<uint64_t>& vals) {
    for (size_t i : group) {
        uint32_t w = p.vars[i].width;
        vals[i] = x & width_mask(w);
        x = w >= 64 ? 0 : x >> w;
    }
}

Assignment gather(const Plan& p, const std::vector<size_t>& group, const std::vector<uint64_t>& vals) {
    Assignment a;
    for (size_t i : group) a[p.vars[i].name] = BitVec(p.vars[i].width, vals[i]);
    return a;
}

// Evaluates the members of a set to fixed-stride keys.
class TupleEval {
  public:
    TupleEval(const std::vector<Expr>& members, const std::vector<std::string>& vars)
        : prog_(members, vars), scratch_(prog_.slot_count()), out_(members.size()) {
        uint32_t total = 0;
        for (Expr e : members) {
            widths_.push_back(e.width());
            total += e.width();
        }
        words_ = std::max<uint32_t>(1, (total + 63) / 64);
    }

    uint32_t words() const { return words_; }

    void key(const std::vector<uint64_t>& vals, uint64_t* dst) {
        prog_.run(vals, scratch_, out_);
        std::fill(dst, dst + words_, 0);
        uint32_t pos = 0;
        for (size_t i = 0; i < out_.size(); ++i) {
            uint64_t v = out_[i];
            uint32_t w = widths_[i];
            for (uint32_t b = 0; b < w; ++b, ++pos)
                if ((v >> b) & 1) dst[pos / 64] |= uint64_t{1} << (pos % 64);
        }
    }

    std::string describe(const uint64_t* k) const {
        std::string s = "(";
        uint32_t pos = 0;
        for (size_t i = 0; i < widths_.size(); ++i) {
            uint64_t v = 0;
            for (uint32_t b = 0; b < widths_[i]; ++b, ++pos)
                if ((k[pos / 64] >> (pos % 64)) & 1) v |= uint64_t{1} << b;
            if (i) s += ", ";
            s += BitVec(widths_[i], v).to_string();
        }
        return s + ")";
    }

  private:
    ExprProgram prog_;
    std::vector<uint64_t> scratch_;
    std::vector<uint64_t> out_;
    std::vector<uint32_t> widths_;
    uint32_t words_ = 1;
};

// Multiset of fixed-stride keys, kept sorted for comparison.
struct Distribution {
    uint32_t words = 1;
    std::vector<uint64_t> flat;

    void clear() { flat.clear(); }
    void add(const uint64_t* k) { flat.insert(flat.end(), k, k + words); }
    void finish() {
        if (words == 1) {
            std::sort(flat.begin(), flat.end());
            return;
        }
        size_t n = flat.size() / words;
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            return std::lexicographical_compare(flat.begin() + a * words, flat.begin() + (a + 1) * words,
                                                flat.begin() + b * words, flat.begin() + (b + 1) * words);
        });
        std::vector<uint64_t> out;
        out.reserve(flat.size());
        for (size_t i : idx) out.insert(out.end(), flat.begin() + i * words, flat.begin() + (i + 1) * words);
        flat = std::move(out);
    }
    friend bool operator==(const Distribution& a, const Distribution& b) { return a.flat == b.flat; }
};

// A key whose multiplicity differs between two sorted distributions.
std::string difference(const Distribution& a, const Distribution& b, const TupleEval& ev) {
    uint32_t w = a.words;
    auto count = [&](const Distribution& d, const uint64_t* k) {
        size_t c = 0;
        for (size_t i = 0; i < d.flat.size(); i += w)
            if (std::equal(k, k + w, d.flat.begin() + i)) ++c;
        return c;
    };
    for (size_t i = 0; i < a.flat.size(); i += w) {
        const uint64_t* k = a.flat.data() + i;
        size_t ca = count(a, k), cb = count(b, k);
        if (ca != cb)
            return "tuple " + ev.describe(k) + " occurs " + std::to_string(ca) + " vs " +
                   std::to_string(cb) + " times out of " + std::to_string(a.flat.size() / w);
    }
    for (size_t i = 0; i < b.flat.size(); i += w) {
        const uint64_t* k = b.flat.data() + i;
        if (count(a, k) == 0)
            return "tuple " + ev.describe(k) + " occurs 0 vs " + std::to_string(count(b, k)) + " times";
    }
    return "distributions differ";
}

std::vector<std::string> var_names(const Plan& p) {
    std::vector<std::string> out;
    for (auto& v : p.vars) out.push_back(v.name);
    return out;
}

} // namespace

uint32_t enumeration_bits(const ExprSet& set, const SymbolTable& labels) {
    Plan p = make_plan(set, labels);
    return p.bits(p.pub) + p.bits(p.sec) + p.bits(p.uni);
}

Verdict check_enumeration(const ExprSet& set, const SymbolTable& labels, uint32_t limit) {
    Plan p = make_plan(set, labels);
    uint32_t bp = p.bits(p.pub), bs = p.bits(p.sec), bu = p.bits(p.uni);
    if (bp + bs + bu > limit) throw TooLarge(bp + bs + bu, limit);
    if (p.sec.empty() || set.empty()) return Verdict::make_secure();

    TupleEval ev(set.members(), var_names(p));
    std::vector<uint64_t> vals(p.vars.size(), 0), key(ev.words());
    Distribution ref, cur;
    ref.words = cur.words = ev.words();
    for (uint64_t pa = 0; pa < (uint64_t{1} << bp); ++pa) {
        scatter(p, p.pub, pa, vals);
        for (uint64_t sa = 0; sa < (uint64_t{1} << bs); ++sa) {
            scatter(p, p.sec, sa, vals);
            Distribution& d = sa == 0 ? ref : cur;
            d.clear();
            for (uint64_t ua = 0; ua < (uint64_t{1} << bu); ++ua) {
                scatter(p, p.uni, ua, vals);
                for (const Derived& dv : p.derived) {
                    uint64_t x = vals[dv.secret];
                    for (size_t o : dv.others) x ^= vals[o];
                    vals[dv.target] = x;
                }
                ev.key(vals, key.data());
                d.add(key.data());
            }
            d.finish();
            if (sa == 0 || cur == ref) continue;
            Witness w;
            std::vector<uint64_t> first = vals;
            scatter(p, p.sec, 0, first);
            w.first = gather(p, p.sec, first);
            w.second = gather(p, p.sec, vals);
            w.publics = gather(p, p.pub, vals);
            w.evidence = difference(ref, cur, ev);
            Verdict v;
            v.kind = VerdictKind::Leaks;
            v.witness = std::move(w);
            v.reason = "joint distribution depends on the secret";
            return v;
        }
    }
    return Verdict::make_secure();
}

Verdict check(const ExprSet& set, const SymbolTable& labels, uint32_t limit) {
    Verdict v = check_substitution(set, labels);
    if (v.secure()) return v;
    if (enumeration_bits(set, labels) > limit)
        return Verdict::inconclusive("substitution inconclusive and enumeration exceeds " +
                                     std::to_string(limit) + " bits");
    return check_enumeration(set, labels, limit);
}

// ---------------------------------------------------------------------------
// gadgets: NI / SNI

std::string serialize_gadget(const GadgetSpec& g) {
    json doc;
    doc["name"] = g.name;
    doc["order"] = g.order;
    doc["inputs"] = json::array();
    for (auto& [secret, shares] : g.inputs) doc["inputs"].push_back({{"secret", secret}, {"shares", shares}});
    doc["outputs"] = g.outputs;
    doc["randomness"] = g.randomness;
    return doc.dump(1);
}

GadgetSpec parse_gadget(std::string_view text, Circuit circuit, SymbolTable labels, Stimuli stimuli) {
    GadgetSpec g;
    try {
        json doc = json::parse(text);
        g.name = doc.value("name", std::string{});
        g.order = doc.at("order").get<uint32_t>();
        for (const json& in : doc.at("inputs"))
            g.inputs.emplace_back(in.at("secret").get<std::string>(),
                                  in.at("shares").get<std::vector<std::string>>());
        g.outputs = doc.at("outputs").get<std::vector<std::string>>();
        g.randomness = doc.value("randomness", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("malformed gadget description: ") + e.what());
    }
    for (auto& [secret, shares] : g.inputs)
        if (shares.size() != g.order + 1)
            throw MalformedDocument("input '" + secret + "' must have order+1 shares");
    for (auto& o : g.outputs) circuit.wire_id(o);
    g.circuit = std::move(circuit);
    g.labels = std::move(labels);
    g.stimuli = std::move(stimuli);
    return g;
}

namespace {

struct Probe {
    std::string label;
    ExprSet set;
    bool output;
};

std::vector<Probe> collect_probes(const GadgetSpec& g, bool glitches) {
    Simulator sim(g.circuit, g.stimuli);
    std::set<WireId> outs;
    for (auto& o : g.outputs) outs.insert(g.circuit.wire_id(o));
    size_t last = g.stimuli.frames.size() - 1;
    std::vector<Probe> probes;
    std::set<std::pair<std::string, bool>> seen;
    for (size_t t = 0; !sim.done(); ++t) {
        sim.step();
        const SimState& st = sim.state();
        for (WireId w = 0; w < g.circuit.wires.size(); ++w) {
            const Valuation& v = st.current[w];
            ExprSet s;
            if (glitches) {
                for (auto& l : v.lset)
                    for (Expr e : l) s.insert(e);
            } else {
                s.insert(v.symb);
            }
            if (s.empty()) continue;
            bool out = outs.count(w) && t == last;
            if (!seen.emplace(s.key(), out).second) continue;
            probes.push_back(Probe{g.circuit.wire(w).name + "@" + std::to_string(t), std::move(s), out});
        }
    }
    return probes;
}

struct ShareSel {
    std::vector<std::vector<std::string>> appearing;  // per input
};

// Checks that the distribution of `set` over randomness depends only on the
// selected shares. Fills `w` on failure.
bool simulatable(const ExprSet& set, const GadgetSpec& g, const std::vector<std::vector<std::string>>& selected,
                 const std::vector<std::vector<std::string>>& appearing, uint32_t limit, Witness& w) {
    std::vector<Var> vars;
    std::vector<size_t> sel, rest, rnd;
    std::set<std::string> in_shares;
    for (size_t i = 0; i < appearing.size(); ++i) {
        for (auto& s : appearing[i]) {
            in_shares.insert(s);
            bool chosen = std::find(selected[i].begin(), selected[i].end(), s) != selected[i].end();
            vars.push_back(Var{s, g.labels.at(s).width});
            (chosen ? sel : rest).push_back(vars.size() - 1);
        }
    }
    std::set<std::string> names;
    for (Expr e : set.members())
        for (auto& n : symbols_of(e)) names.insert(n);
    for (auto& n : names) {
        if (in_shares.count(n)) continue;
        const SymbolInfo& s = g.labels.at(n);
        if (s.kind == SymbolKind::Secret || s.kind == SymbolKind::Share)
            throw MalformedDocument("gadget probe depends on '" + n + "', which is not a declared input share");
        vars.push_back(Var{n, s.width});
        rnd.push_back(vars.size() - 1);
    }
    Plan p;
    p.vars = vars;
    uint32_t bs = p.bits(sel), br = p.bits(rest), bn = p.bits(rnd);
    if (bs + br + bn > limit) throw TooLarge(bs + br + bn, limit);
    TupleEval ev(set.members(), var_names(p));
    std::vector<uint64_t> vals(vars.size(), 0), key(ev.words());
    Distribution ref, cur;
    ref.words = cur.words = ev.words();
    for (uint64_t sa = 0; sa < (uint64_t{1} << bs); ++sa) {
        scatter(p, sel, sa, vals);
        for (uint64_t ra = 0; ra < (uint64_t{1} << br); ++ra) {
            scatter(p, rest, ra, vals);
            Distribution& d = ra == 0 ? ref : cur;
            d.clear();
            for (uint64_t na = 0; na < (uint64_t{1} << bn); ++na) {
                scatter(p, rnd, na, vals);
                ev.key(vals, key.data());
                d.add(key.data());
            }
            d.finish();
            if (ra == 0 || cur == ref) continue;
            std::vector<uint64_t> first = vals;
            scatter(p, rest, 0, first);
            std::vector<size_t> shares = sel;
            shares.insert(shares.end(), rest.begin(), rest.end());
            w.first = gather(p, shares, first);
            w.second = gather(p, shares, vals);
            w.evidence = difference(ref, cur, ev);
            return false;
        }
    }
    return true;
}

// All size-k subsets of v, in lexicographic order.
std::vector<std::vector<std::string>> subsets(const std::vector<std::string>& v, size_t k) {
    std::vector<std::vector<std::string>> out;
    std::vector<size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    if (k > v.size()) return out;
    while (true) {
        std::vector<std::string> s;
        for (size_t i : idx) s.push_back(v[i]);
        out.push_back(std::move(s));
        size_t i = k;
        while (i > 0 && idx[i - 1] == v.size() - k + i - 1) --i;
        if (i == 0) break;
        ++idx[i - 1];
        for (size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
    return out;
}

Verdict check_probing(const GadgetSpec& g, uint32_t d, const ProbeOptions& opts, bool strong) {
    std::vector<Probe> probes = collect_probes(g, opts.glitches);
    size_t p = probes.size();
    std::vector<size_t> tuple;
    Verdict fail;
    bool failed = false;

    auto test = [&]() {
        ExprSet u;
        size_t internal = 0;
        for (size_t i : tuple) {
            u.insert(probes[i].set);
            internal += !probes[i].output;
        }
        size_t budget = strong ? internal : tuple.size();
        std::set<std::string> names;
        for (Expr e : u.members())
            for (auto& n : symbols_of(e)) names.insert(n);
        std::vector<std::vector<std::string>> appearing;
        bool trivial = true;
        for (auto& [secret, shares] : g.inputs) {
            std::vector<std::string> a;
            for (auto& s : shares)
                if (names.count(s)) a.push_back(s);
            trivial &= a.size() <= budget;
            appearing.push_back(std::move(a));
        }
        if (trivial) return true;
        std::vector<std::vector<std::vector<std::string>>> choices;
        for (auto& a : appearing) choices.push_back(subsets(a, std::min(budget, a.size())));
        std::vector<size_t> pick(choices.size(), 0);
        Witness w;
        while (true) {
            std::vector<std::vector<std::string>> sel;
            for (size_t i = 0; i < choices.size(); ++i) sel.push_back(choices[i][pick[i]]);
            if (simulatable(u, g, sel, appearing, opts.enum_limit, w)) return true;
            size_t i = 0;
            while (i < pick.size() && ++pick[i] == choices[i].size()) pick[i++] = 0;
            if (i == pick.size()) break;
        }
        std::string labels;
        for (size_t i : tuple) labels += (labels.empty() ? "" : ", ") + probes[i].label;
        w.evidence = "probes {" + labels + "} are not simulatable from " + std::to_string(budget) +
                     " share(s) per input; " + w.evidence;
        fail.kind = VerdictKind::Leaks;
        fail.reason = strong ? "not SNI" : "not NI";
        fail.witness = std::move(w);
        return false;
    };

    std::function<bool(size_t, size_t)> rec = [&](size_t start, size_t k) {
        if (tuple.size() == k) return test();
        for (size_t i = start; i < p; ++i) {
            tuple.push_back(i);
            bool ok = rec(i + 1, k);
            tuple.pop_back();
            if (!ok) return false;
        }
        return true;
    };
    for (size_t k = 1; k <= d && !failed; ++k)
        if (!rec(0, k)) failed = true;
    return failed ? fail : Verdict::make_secure();
}

} // namespace

Verdict check_ni(const GadgetSpec& g, uint32_t d, const ProbeOptions& opts) {
    return check_probing(g, d, opts, false);
}

Verdict check_sni(const GadgetSpec& g, uint32_t d, const ProbeOptions& opts) {
    return check_probing(g, d, opts, true);
}

} // namespace leakprobe
