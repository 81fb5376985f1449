#include "leakprobe/expr.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <unordered_set>

#include "leakprobe/errors.hpp"

namespace leakprobe {

namespace {

constexpr uint64_t kFnvOffset = 1469598103934665603ull;
constexpr uint64_t kFnvPrime = 1099511628211ull;

uint64_t fnv(std::string_view s, uint64_t h = kFnvOffset) {
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

uint64_t mix(uint64_t h, uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h * 0xff51afd7ed558ccdull;
}

struct Key {
    Op op;
    uint32_t width, hi, lo;
    uint64_t value;
    std::string_view name;
    const std::vector<const ExprNode*>* kids;
    uint64_t hash;
};

struct KeyHash {
    using is_transparent = void;
    size_t operator()(const ExprNode* n) const { return n->hash; }
    size_t operator()(const Key& k) const { return k.hash; }
};

struct KeyEq {
    using is_transparent = void;
    static bool same(const ExprNode* a, const Key& k) {
        return a->op == k.op && a->width == k.width && a->hi == k.hi && a->lo == k.lo &&
               a->value == k.value && a->name == k.name && a->kids == *k.kids;
    }
    bool operator()(const ExprNode* a, const ExprNode* b) const { return a == b; }
    bool operator()(const ExprNode* a, const Key& k) const { return same(a, k); }
    bool operator()(const Key& k, const ExprNode* a) const { return same(a, k); }
};

struct Store {
    std::mutex mu;
    std::deque<ExprNode> nodes;
    std::unordered_set<const ExprNode*, KeyHash, KeyEq> index;
};

Store& store() {
    static Store s;
    return s;
}

struct TableEntry {
    uint32_t width;
    std::vector<uint64_t> values;
};

struct TableRegistry {
    std::mutex mu;
    std::unordered_map<std::string, std::unique_ptr<TableEntry>> tables;
};

TableRegistry& tables() {
    static TableRegistry r;
    return r;
}

Expr intern(Op op, uint32_t width, std::vector<const ExprNode*> kids, uint32_t hi = 0,
            uint32_t lo = 0, uint64_t value = 0, std::string_view name = {}) {
    uint64_t h = mix(kFnvOffset, static_cast<uint64_t>(op));
    h = mix(h, width);
    h = mix(h, (uint64_t{hi} << 32) | lo);
    h = mix(h, value);
    h = mix(h, fnv(name));
    for (auto* k : kids) h = mix(h, k->hash);
    Key key{op, width, hi, lo, value, name, &kids, h};
    Store& s = store();
    std::lock_guard lock(s.mu);
    auto it = s.index.find(key);
    if (it != s.index.end()) return Expr(*it);
    ExprNode& n = s.nodes.emplace_back();
    n.op = op;
    n.width = width;
    n.hi = hi;
    n.lo = lo;
    n.value = value;
    n.name = std::string(name);
    n.kids = std::move(kids);
    n.hash = h;
    n.id = static_cast<uint32_t>(s.nodes.size() - 1);
    s.index.insert(&n);
    return Expr(&n);
}

std::vector<const ExprNode*> raw(const std::vector<Expr>& kids) {
    std::vector<const ExprNode*> out;
    out.reserve(kids.size());
    for (auto k : kids) out.push_back(k.node());
    return out;
}

int rank(Op op) {
    if (op == Op::Cst) return 0;
    if (op == Op::Symb) return 1;
    return 2 + static_cast<int>(op);
}

int compare(const ExprNode* a, const ExprNode* b) {
    if (a == b) return 0;
    int ra = rank(a->op), rb = rank(b->op);
    if (ra != rb) return ra < rb ? -1 : 1;
    if (a->op == Op::Cst) {
        if (a->width != b->width) return a->width < b->width ? -1 : 1;
        if (a->value != b->value) return a->value < b->value ? -1 : 1;
        return 0;
    }
    if (a->op == Op::Symb) {
        if (a->name != b->name) return a->name < b->name ? -1 : 1;
        if (a->width != b->width) return a->width < b->width ? -1 : 1;
        return 0;
    }
    if (a->hash != b->hash) return a->hash < b->hash ? -1 : 1;
    if (a->width != b->width) return a->width < b->width ? -1 : 1;
    if (a->hi != b->hi) return a->hi < b->hi ? -1 : 1;
    if (a->lo != b->lo) return a->lo < b->lo ? -1 : 1;
    if (a->name != b->name) return a->name < b->name ? -1 : 1;
    if (a->kids.size() != b->kids.size()) return a->kids.size() < b->kids.size() ? -1 : 1;
    for (size_t i = 0; i < a->kids.size(); ++i)
        if (int c = compare(a->kids[i], b->kids[i])) return c;
    return 0;
}

void sort_terms(std::vector<Expr>& v) { std::sort(v.begin(), v.end(), ExprLess{}); }

void require_arity(Op op, const std::vector<Expr>& kids, size_t n) {
    if (kids.size() != n)
        throw TypeError(std::string(op_name(op)) + " expects " + std::to_string(n) +
                        " operand(s), got " + std::to_string(kids.size()));
}

void require_same_width(Op op, const std::vector<Expr>& kids) {
    if (kids.empty()) throw TypeError(std::string(op_name(op)) + " needs at least one operand");
    for (auto k : kids) {
        if (!k) throw TypeError(std::string(op_name(op)) + " has a null operand");
        if (k.width() != kids[0].width())
            throw TypeError(std::string(op_name(op)) + " operands differ in width (" +
                            std::to_string(kids[0].width()) + " vs " +
                            std::to_string(k.width()) + ")");
    }
}

Expr simplify_xor(const std::vector<Expr>& kids, uint64_t c0) {
    uint32_t w = kids[0].width();
    uint64_t m = width_mask(w);
    uint64_t c = c0 & m;
    std::vector<Expr> terms;
    std::vector<Expr> stack(kids.rbegin(), kids.rend());
    while (!stack.empty()) {
        Expr e = stack.back();
        stack.pop_back();
        switch (e.op()) {
        case Op::Xor:
            for (size_t i = e.arity(); i-- > 0;) stack.push_back(e.child(i));
            break;
        case Op::Not:
            c ^= m;
            stack.push_back(e.child(0));
            break;
        case Op::Cst:
            c ^= e.const_value();
            break;
        default:
            terms.push_back(e);
        }
    }
    sort_terms(terms);
    std::vector<Expr> core;
    for (size_t i = 0; i < terms.size();) {
        if (i + 1 < terms.size() && terms[i] == terms[i + 1]) {
            i += 2;
        } else {
            core.push_back(terms[i]);
            ++i;
        }
    }
    if (core.empty()) return cst(w, c);
    Expr body = core.size() == 1 ? core[0] : intern(Op::Xor, w, raw(core));
    if (c == 0) return body;
    if (c == m) return intern(Op::Not, w, {body.node()});
    core.insert(core.begin(), cst(w, c));
    return intern(Op::Xor, w, raw(core));
}

Expr simplify_andor(Op op, const std::vector<Expr>& kids) {
    uint32_t w = kids[0].width();
    uint64_t m = width_mask(w);
    bool is_and = op == Op::And;
    uint64_t c = is_and ? m : 0;
    std::vector<Expr> terms;
    std::vector<Expr> stack(kids.rbegin(), kids.rend());
    while (!stack.empty()) {
        Expr e = stack.back();
        stack.pop_back();
        if (e.op() == op) {
            for (size_t i = e.arity(); i-- > 0;) stack.push_back(e.child(i));
        } else if (e.is_const()) {
            c = is_and ? (c & e.const_value()) : (c | e.const_value());
        } else {
            terms.push_back(e);
        }
    }
    uint64_t absorbing = is_and ? 0 : m;
    if (c == absorbing) return cst(w, c);
    sort_terms(terms);
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto t : terms) {
        if (t.op() == Op::Not &&
            std::binary_search(terms.begin(), terms.end(), t.child(0), ExprLess{}))
            return cst(w, absorbing);
    }
    uint64_t neutral = is_and ? m : 0;
    if (terms.empty()) return cst(w, c);
    if (c != neutral) terms.insert(terms.begin(), cst(w, c));
    if (terms.size() == 1) return terms[0];
    return intern(op, w, raw(terms));
}

bool as_slice(Expr e, Expr& base, uint32_t& hi, uint32_t& lo) {
    if (e.op() != Op::Extract) return false;
    base = e.child(0);
    hi = e.hi();
    lo = e.lo();
    return true;
}

Expr simplify_concat(const std::vector<Expr>& kids) {
    if (kids.empty()) throw TypeError("OP_CONCAT needs at least one operand");
    std::vector<Expr> flat;
    std::vector<Expr> stack(kids.rbegin(), kids.rend());
    while (!stack.empty()) {
        Expr e = stack.back();
        stack.pop_back();
        if (!e) throw TypeError("OP_CONCAT has a null operand");
        if (e.op() == Op::Concat) {
            for (size_t i = e.arity(); i-- > 0;) stack.push_back(e.child(i));
        } else {
            flat.push_back(e);
        }
    }
    uint64_t total = 0;
    for (auto e : flat) total += e.width();
    if (total > kMaxWidth) throw TypeError("OP_CONCAT result wider than 64 bits");
    std::vector<Expr> merged;
    for (auto p : flat) {
        if (!merged.empty()) {
            Expr last = merged.back();
            if (last.is_const() && p.is_const()) {
                merged.back() = cst(last.width() + p.width(),
                                    (last.const_value() << p.width()) | p.const_value());
                continue;
            }
            Expr b1, b2;
            uint32_t h1, l1, h2, l2;
            if (as_slice(last, b1, h1, l1) && as_slice(p, b2, h2, l2) && b1 == b2 &&
                l1 == h2 + 1) {
                merged.back() = extract(b1, h1, l2);
                continue;
            }
        }
        merged.push_back(p);
    }
    if (merged.size() == 1) return merged[0];
    return intern(Op::Concat, static_cast<uint32_t>(total), raw(merged));
}

Expr replicate(Expr b, uint32_t n) {
    if (n == 1) return b;
    return simplify_concat(std::vector<Expr>(n, b));
}

Expr simplify_extract(Expr x, uint32_t hi, uint32_t lo) {
    uint32_t n = x.width();
    if (hi < lo) throw TypeError("OP_EXTRACT with hi < lo");
    if (hi >= n)
        throw IndexOutOfRange("bit " + std::to_string(hi) + " out of range for width " +
                              std::to_string(n));
    if (lo == 0 && hi == n - 1) return x;
    uint32_t w = hi - lo + 1;
    switch (x.op()) {
    case Op::Cst:
        return cst(w, x.const_value() >> lo);
    case Op::Extract:
        return simplify_extract(x.child(0), x.lo() + hi, x.lo() + lo);
    case Op::Concat: {
        std::vector<Expr> pieces;
        uint32_t off = 0;
        for (size_t i = x.arity(); i-- > 0;) {
            Expr k = x.child(i);
            uint32_t kw = k.width();
            uint32_t a = off, b = off + kw - 1;
            if (b >= lo && a <= hi) {
                uint32_t ph = std::min(hi, b) - off, pl = std::max(lo, a) - off;
                pieces.push_back(simplify_extract(k, ph, pl));
            }
            off += kw;
        }
        std::reverse(pieces.begin(), pieces.end());
        return simplify_concat(pieces);
    }
    case Op::Xor:
    case Op::And:
    case Op::Or:
    case Op::Not: {
        std::vector<Expr> parts;
        for (auto k : x.children()) parts.push_back(simplify_extract(k, hi, lo));
        return build(x.op(), parts);
    }
    case Op::Zext: {
        Expr y = x.child(0);
        uint32_t wy = y.width();
        if (hi < wy) return simplify_extract(y, hi, lo);
        if (lo >= wy) return cst(w, 0);
        return zext(simplify_extract(y, wy - 1, lo), w);
    }
    case Op::Sext: {
        Expr y = x.child(0);
        uint32_t wy = y.width();
        if (hi < wy) return simplify_extract(y, hi, lo);
        if (lo >= wy - 1) return replicate(simplify_extract(y, wy - 1, wy - 1), w);
        return sext(simplify_extract(y, wy - 1, lo), w);
    }
    default:
        return intern(Op::Extract, w, {x.node()}, hi, lo);
    }
}

uint64_t sign_extend(uint64_t v, uint32_t from, uint32_t to) {
    if (from < 64 && ((v >> (from - 1)) & 1)) v |= ~width_mask(from);
    return v & width_mask(to);
}

Expr simplify_ext(Op op, Expr x, uint32_t w) {
    uint32_t n = x.width();
    if (w < n) throw TypeError(std::string(op_name(op)) + " target narrower than operand");
    if (w > kMaxWidth) throw TypeError(std::string(op_name(op)) + " target wider than 64 bits");
    if (w == n) return x;
    if (x.is_const())
        return cst(w, op == Op::Zext ? x.const_value() : sign_extend(x.const_value(), n, w));
    if (x.op() == op) return simplify_ext(op, x.child(0), w);
    if (op == Op::Sext && x.op() == Op::Zext) return simplify_ext(Op::Zext, x.child(0), w);
    return intern(op, w, {x.node()}, 0, 0, 0);
}

uint64_t ipow(uint64_t base, uint64_t exp, uint64_t m) {
    uint64_t r = 1;
    while (exp) {
        if (exp & 1) r *= base;
        base *= base;
        exp >>= 1;
    }
    return r & m;
}

Expr shift_const(Op op, Expr a, uint64_t k) {
    uint32_t n = a.width();
    if (k == 0) return a;
    if (op == Op::Asr) {
        if (k >= n) return replicate(bit(a, n - 1), n);
        return sext(extract(a, n - 1, static_cast<uint32_t>(k)), n);
    }
    if (k >= n) return cst(n, 0);
    uint32_t kk = static_cast<uint32_t>(k);
    if (op == Op::Lsl) return simplify_concat({extract(a, n - 1 - kk, 0), cst(kk, 0)});
    return zext(extract(a, n - 1, kk), n);
}

Expr simplify_arith(Op op, Expr a, Expr b) {
    uint32_t w = a.width();
    uint64_t m = width_mask(w);
    bool ca = a.is_const(), cb = b.is_const();
    uint64_t va = a.const_value(), vb = b.const_value();
    switch (op) {
    case Op::Add:
        if (ca && cb) return cst(w, va + vb);
        if (ca && va == 0) return b;
        if (cb && vb == 0) return a;
        break;
    case Op::Sub:
        if (ca && cb) return cst(w, va - vb);
        if (cb && vb == 0) return a;
        if (a == b) return cst(w, 0);
        break;
    case Op::Mul:
        if (ca && cb) return cst(w, va * vb);
        if ((ca && va == 0) || (cb && vb == 0)) return cst(w, 0);
        if (ca && va == 1) return b;
        if (cb && vb == 1) return a;
        break;
    case Op::Pow:
        if (ca && cb) return cst(w, ipow(va, vb, m));
        return intern(op, w, {a.node(), b.node()});
    default:
        break;
    }
    if ((op == Op::Add || op == Op::Mul) && ExprLess{}(b, a)) std::swap(a, b);
    return intern(op, w, {a.node(), b.node()});
}

} // namespace

std::string_view op_name(Op op) {
    switch (op) {
    case Op::Cst: return "CST";
    case Op::Symb: return "SYMB";
    case Op::Xor: return "OP_XOR";
    case Op::And: return "OP_AND";
    case Op::Or: return "OP_OR";
    case Op::Not: return "OP_NOT";
    case Op::Add: return "OP_ADD";
    case Op::Mul: return "OP_MUL";
    case Op::Pow: return "OP_POW";
    case Op::Sub: return "OP_SUB";
    case Op::Lsl: return "OP_LSL";
    case Op::Lsr: return "OP_LSR";
    case Op::Asr: return "OP_ASR";
    case Op::Array: return "ARRAY";
    case Op::Concat: return "OP_CONCAT";
    case Op::Extract: return "OP_EXTRACT";
    case Op::Zext: return "OP_ZEXT";
    case Op::Sext: return "OP_SEXT";
    }
    return "?";
}

std::vector<Expr> Expr::children() const {
    std::vector<Expr> out;
    out.reserve(n_->kids.size());
    for (auto* k : n_->kids) out.emplace_back(k);
    return out;
}

std::string Expr::to_string() const { return render(*this); }

bool ExprLess::operator()(Expr a, Expr b) const { return compare(a.node(), b.node()) < 0; }

Expr cst(const BitVec& v) { return cst(v.width(), v.bits()); }

Expr cst(uint32_t width, uint64_t value) {
    if (width == 0 || width > kMaxWidth)
        throw TypeError("constant width must be in [1, 64], got " + std::to_string(width));
    return intern(Op::Cst, width, {}, 0, 0, value & width_mask(width));
}

Expr symb(const std::string& name, uint32_t width) {
    if (width == 0 || width > kMaxWidth)
        throw TypeError("symbol width must be in [1, 64], got " + std::to_string(width));
    if (name.empty()) throw TypeError("symbol name must not be empty");
    return intern(Op::Symb, width, {}, 0, 0, 0, name);
}

Expr build(Op op, std::vector<Expr> kids, const OpParams& p) {
    for (auto k : kids)
        if (!k) throw TypeError(std::string(op_name(op)) + " has a null operand");
    switch (op) {
    case Op::Cst:
    case Op::Symb:
        throw TypeError("leaves are built with cst() and symb()");
    case Op::Xor:
        require_same_width(op, kids);
        return simplify_xor(kids, 0);
    case Op::Not:
        require_arity(op, kids, 1);
        return simplify_xor(kids, width_mask(kids[0].width()));
    case Op::And:
    case Op::Or:
        require_same_width(op, kids);
        return simplify_andor(op, kids);
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
        require_arity(op, kids, 2);
        require_same_width(op, kids);
        return simplify_arith(op, kids[0], kids[1]);
    case Op::Pow:
        require_arity(op, kids, 2);
        return simplify_arith(op, kids[0], kids[1]);
    case Op::Lsl:
    case Op::Lsr:
    case Op::Asr:
        require_arity(op, kids, 2);
        if (kids[1].is_const()) return shift_const(op, kids[0], kids[1].const_value());
        if (kids[0].is_const() && kids[0].const_value() == 0) return kids[0];
        return intern(op, kids[0].width(), raw(kids));
    case Op::Array:
        require_arity(op, kids, 1);
        if (p.table.empty()) throw TypeError("ARRAY needs a table id");
        if (p.width == 0 || p.width > kMaxWidth) throw TypeError("ARRAY element width invalid");
        return intern(op, p.width, raw(kids), 0, 0, 0, p.table);
    case Op::Concat:
        return simplify_concat(kids);
    case Op::Extract:
        require_arity(op, kids, 1);
        return simplify_extract(kids[0], p.hi, p.lo);
    case Op::Zext:
    case Op::Sext:
        require_arity(op, kids, 1);
        return simplify_ext(op, kids[0], p.width);
    }
    throw TypeError("unknown operator");
}

Expr bxor(Expr a, Expr b) { return build(Op::Xor, {a, b}); }
Expr band(Expr a, Expr b) { return build(Op::And, {a, b}); }
Expr bor(Expr a, Expr b) { return build(Op::Or, {a, b}); }
Expr bnot(Expr a) { return build(Op::Not, {a}); }
Expr concat(std::vector<Expr> msb_first) { return build(Op::Concat, std::move(msb_first)); }

Expr extract(Expr e, uint32_t hi, uint32_t lo) {
    OpParams p;
    p.hi = hi;
    p.lo = lo;
    return build(Op::Extract, {e}, p);
}

Expr zext(Expr e, uint32_t width) {
    OpParams p;
    p.width = width;
    return build(Op::Zext, {e}, p);
}

Expr sext(Expr e, uint32_t width) {
    OpParams p;
    p.width = width;
    return build(Op::Sext, {e}, p);
}

Expr array_lookup(const std::string& table, uint32_t width, Expr index) {
    OpParams p;
    p.table = table;
    p.width = width;
    return build(Op::Array, {index}, p);
}

Expr bit(Expr e, uint32_t i) {
    if (i >= e.width())
        throw IndexOutOfRange("bit " + std::to_string(i) + " out of range for width " +
                              std::to_string(e.width()));
    return extract(e, i, i);
}

bool structurally_equal(Expr a, Expr b) { return a == b; }

uint64_t apply_op(const ExprNode& n, const uint64_t* v) {
    uint64_t m = width_mask(n.width);
    switch (n.op) {
    case Op::Cst:
        return n.value;
    case Op::Symb:
        throw UnboundSymbol(n.name);
    case Op::Xor: {
        uint64_t r = 0;
        for (size_t i = 0; i < n.kids.size(); ++i) r ^= v[i];
        return r;
    }
    case Op::And: {
        uint64_t r = m;
        for (size_t i = 0; i < n.kids.size(); ++i) r &= v[i];
        return r;
    }
    case Op::Or: {
        uint64_t r = 0;
        for (size_t i = 0; i < n.kids.size(); ++i) r |= v[i];
        return r;
    }
    case Op::Not:
        return ~v[0] & m;
    case Op::Add:
        return (v[0] + v[1]) & m;
    case Op::Sub:
        return (v[0] - v[1]) & m;
    case Op::Mul:
        return (v[0] * v[1]) & m;
    case Op::Pow:
        return ipow(v[0], v[1], m);
    case Op::Lsl:
        return v[1] >= n.width ? 0 : (v[0] << v[1]) & m;
    case Op::Lsr:
        return v[1] >= n.width ? 0 : v[0] >> v[1];
    case Op::Asr: {
        uint64_t s = sign_extend(v[0], n.width, 64);
        uint64_t k = std::min<uint64_t>(v[1], 63);
        return static_cast<uint64_t>(static_cast<int64_t>(s) >> k) & m;
    }
    case Op::Array: {
        auto* t = find_table(n.name);
        if (!t) throw UnboundSymbol(n.name);
        if (v[0] >= t->size())
            throw IndexOutOfRange("index " + std::to_string(v[0]) + " outside table '" + n.name +
                                  "'");
        return (*t)[v[0]] & m;
    }
    case Op::Concat: {
        uint64_t r = 0;
        for (size_t i = 0; i < n.kids.size(); ++i) {
            uint32_t w = n.kids[i]->width;
            r = (w >= 64 ? 0 : (r << w)) | v[i];
        }
        return r & m;
    }
    case Op::Extract:
        return (v[0] >> n.lo) & m;
    case Op::Zext:
        return v[0];
    case Op::Sext:
        return sign_extend(v[0], n.kids[0]->width, n.width);
    }
    return 0;
}

BitVec eval_concrete(Expr e, const Assignment& assignment) {
    std::unordered_map<const ExprNode*, uint64_t> memo;
    std::vector<uint64_t> buf;
    auto rec = [&](auto& self, const ExprNode* n) -> uint64_t {
        if (n->op == Op::Cst) return n->value;
        if (n->op == Op::Symb) {
            auto it = assignment.find(n->name);
            if (it == assignment.end()) throw UnboundSymbol(n->name);
            if (it->second.width() != n->width)
                throw TypeError("assignment for '" + n->name + "' has width " +
                                std::to_string(it->second.width()) + ", expected " +
                                std::to_string(n->width));
            return it->second.bits();
        }
        if (auto it = memo.find(n); it != memo.end()) return it->second;
        std::vector<uint64_t> vals;
        vals.reserve(n->kids.size());
        for (auto* k : n->kids) vals.push_back(self(self, k));
        uint64_t r = apply_op(*n, vals.data());
        memo.emplace(n, r);
        return r;
    };
    return BitVec(e.width(), rec(rec, e.node()));
}

std::set<std::string> symbols_of(Expr e) {
    std::set<std::string> out;
    std::unordered_set<const ExprNode*> seen;
    std::vector<const ExprNode*> stack{e.node()};
    while (!stack.empty()) {
        auto* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        if (n->op == Op::Symb) out.insert(n->name);
        for (auto* k : n->kids) stack.push_back(k);
    }
    return out;
}

std::string render(Expr e) {
    const ExprNode* n = e.node();
    switch (n->op) {
    case Op::Cst:
        return "CST(" + BitVec(n->width, n->value).to_string() + ")";
    case Op::Symb:
        return "SYMB(" + n->name + ")";
    case Op::Array:
        return "ARRAY(" + n->name + ", " + render(e.child(0)) + ")";
    case Op::Extract:
        return "OP_EXTRACT(" + render(e.child(0)) + ", " + std::to_string(n->hi) + ", " +
               std::to_string(n->lo) + ")";
    case Op::Zext:
    case Op::Sext:
        return std::string(op_name(n->op)) + "(" + render(e.child(0)) + ", " +
               std::to_string(n->width) + ")";
    default: {
        std::string s(op_name(n->op));
        s += "(";
        for (size_t i = 0; i < n->kids.size(); ++i) {
            if (i) s += ", ";
            s += render(e.child(i));
        }
        return s + ")";
    }
    }
}

namespace {

class Parser {
  public:
    Parser(std::string_view text, const SymbolWidthFn& fn) : s_(text), width_of_(fn) {}

    Expr parse_all() {
        Expr e = parse();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing input");
        return e;
    }

  private:
    std::string_view s_;
    size_t pos_ = 0;
    const SymbolWidthFn& width_of_;

    [[noreturn]] void fail(const std::string& what) {
        throw ParseError(what + " at offset " + std::to_string(pos_) + " in '" + std::string(s_) +
                         "'");
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string_view atom() {
        skip_ws();
        size_t start = pos_;
        while (pos_ < s_.size()) {
            char c = s_[pos_];
            if (c == '(' || c == ')' || c == ',' || std::isspace(static_cast<unsigned char>(c)))
                break;
            ++pos_;
        }
        if (start == pos_) fail("expected a name");
        return s_.substr(start, pos_ - start);
    }

    uint32_t number() {
        auto a = atom();
        uint32_t v = 0;
        for (char c : a) {
            if (!std::isdigit(static_cast<unsigned char>(c))) fail("expected a number");
            v = v * 10 + static_cast<uint32_t>(c - '0');
        }
        return v;
    }

    Expr parse() {
        std::string head(atom());
        expect('(');
        Expr result;
        if (head == "CST") {
            auto lit = atom();
            try {
                result = cst(BitVec::parse(lit));
            } catch (const MalformedDocument& e) {
                fail(e.what());
            }
        } else if (head == "SYMB") {
            std::string name(atom());
            auto w = width_of_ ? width_of_(name) : std::nullopt;
            if (!w) throw UnboundSymbol(name);
            result = symb(name, *w);
        } else if (head == "ARRAY") {
            std::string table(atom());
            expect(',');
            Expr idx = parse();
            std::lock_guard lock(tables().mu);
            auto it = tables().tables.find(table);
            if (it == tables().tables.end()) throw UnboundSymbol(table);
            uint32_t w = it->second->width;
            result = intern(Op::Array, w, {idx.node()}, 0, 0, 0, table);
        } else if (head == "OP_EXTRACT") {
            Expr x = parse();
            expect(',');
            uint32_t hi = number();
            expect(',');
            uint32_t lo = number();
            result = extract(x, hi, lo);
        } else if (head == "OP_ZEXT" || head == "OP_SEXT") {
            Expr x = parse();
            expect(',');
            uint32_t w = number();
            result = head == "OP_ZEXT" ? zext(x, w) : sext(x, w);
        } else {
            static const std::pair<const char*, Op> ops[] = {
                {"OP_XOR", Op::Xor}, {"OP_AND", Op::And}, {"OP_OR", Op::Or},
                {"OP_NOT", Op::Not}, {"OP_ADD", Op::Add}, {"OP_MUL", Op::Mul},
                {"OP_POW", Op::Pow}, {"OP_SUB", Op::Sub}, {"OP_LSL", Op::Lsl},
                {"OP_LSR", Op::Lsr}, {"OP_ASR", Op::Asr}, {"OP_CONCAT", Op::Concat},
            };
            auto it = std::find_if(std::begin(ops), std::end(ops),
                                   [&](const auto& o) { return head == o.first; });
            if (it == std::end(ops)) fail("unknown operator '" + head + "'");
            std::vector<Expr> kids{parse()};
            skip_ws();
            while (pos_ < s_.size() && s_[pos_] == ',') {
                ++pos_;
                kids.push_back(parse());
                skip_ws();
            }
            result = build(it->second, kids);
        }
        expect(')');
        return result;
    }
};

} // namespace

Expr parse_expr(std::string_view text, const SymbolWidthFn& symbol_width) {
    return Parser(text, symbol_width).parse_all();
}

void register_table(const std::string& id, uint32_t width, std::vector<uint64_t> values) {
    if (width == 0 || width > kMaxWidth) throw TypeError("table element width invalid");
    for (auto& v : values) v &= width_mask(width);
    auto& r = tables();
    std::lock_guard lock(r.mu);
    auto& slot = r.tables[id];
    if (slot && slot->width == width) {
        slot->values = std::move(values);
        return;
    }
    // Entries are never freed so that pointers handed out stay valid.
    auto entry = std::make_unique<TableEntry>(TableEntry{width, std::move(values)});
    if (slot) {
        static std::vector<std::unique_ptr<TableEntry>> retired;
        retired.push_back(std::move(slot));
    }
    slot = std::move(entry);
}

const std::vector<uint64_t>* find_table(const std::string& id) {
    auto& r = tables();
    std::lock_guard lock(r.mu);
    auto it = r.tables.find(id);
    return it == r.tables.end() ? nullptr : &it->second->values;
}

size_t interned_count() {
    Store& s = store();
    std::lock_guard lock(s.mu);
    return s.nodes.size();
}

ExprProgram::ExprProgram(std::span<const Expr> roots, const std::vector<std::string>& variables) {
    std::unordered_map<const ExprNode*, uint32_t> slot;
    std::unordered_map<std::string, int32_t> var_index;
    for (size_t i = 0; i < variables.size(); ++i)
        var_index.emplace(variables[i], static_cast<int32_t>(i));
    auto rec = [&](auto& self, const ExprNode* n) -> uint32_t {
        if (auto it = slot.find(n); it != slot.end()) return it->second;
        std::vector<uint32_t> kid_slots;
        for (auto* k : n->kids) kid_slots.push_back(self(self, k));
        Instr in{n};
        if (n->op == Op::Symb) {
            auto it = var_index.find(n->name);
            if (it == var_index.end()) throw UnboundSymbol(n->name);
            in.var = it->second;
        }
        in.first_kid = static_cast<uint32_t>(kid_slots_.size());
        kid_slots_.insert(kid_slots_.end(), kid_slots.begin(), kid_slots.end());
        uint32_t s = static_cast<uint32_t>(nodes_.size());
        nodes_.push_back(in);
        slot.emplace(n, s);
        return s;
    };
    for (auto r : roots) root_slots_.push_back(rec(rec, r.node()));
}

void ExprProgram::run(std::span<const uint64_t> vars, std::span<uint64_t> scratch,
                      std::span<uint64_t> out) const {
    uint64_t kidv[64];
    std::vector<uint64_t> big;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const Instr& in = nodes_[i];
        const ExprNode& n = *in.node;
        if (n.op == Op::Cst) {
            scratch[i] = n.value;
        } else if (n.op == Op::Symb) {
            scratch[i] = vars[static_cast<size_t>(in.var)] & width_mask(n.width);
        } else {
            size_t k = n.kids.size();
            uint64_t* buf = kidv;
            if (k > 64) {
                big.resize(k);
                buf = big.data();
            }
            for (size_t j = 0; j < k; ++j) buf[j] = scratch[kid_slots_[in.first_kid + j]];
            scratch[i] = apply_op(n, buf);
        }
    }
    for (size_t j = 0; j < root_slots_.size(); ++j) out[j] = scratch[root_slots_[j]];
}

} // namespace leakprobe
