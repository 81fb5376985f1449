#include <doctest.h>

#include <random>

#include "leakprobe/errors.hpp"
#include "leakprobe/expr.hpp"

using namespace leakprobe;

namespace {

// Unsimplified term used as an independent oracle: evaluated directly with
// plain integer arithmetic, then rebuilt through build().
struct Raw {
    Op op;
    uint32_t width;
    uint64_t value = 0;
    std::string name;
    uint32_t hi = 0, lo = 0;
    std::vector<Raw> kids;
};

uint64_t msk(uint32_t w) { return w >= 64 ? ~0ull : ((1ull << w) - 1); }

uint64_t oracle(const Raw& r, const std::map<std::string, uint64_t>& env) {
    uint64_t m = msk(r.width);
    auto k = [&](size_t i) { return oracle(r.kids[i], env); };
    switch (r.op) {
    case Op::Cst: return r.value;
    case Op::Symb: return env.at(r.name);
    case Op::Xor: return (k(0) ^ k(1)) & m;
    case Op::And: return k(0) & k(1);
    case Op::Or: return k(0) | k(1);
    case Op::Not: return ~k(0) & m;
    case Op::Add: return (k(0) + k(1)) % (m + 1 == 0 ? ~0ull : m + 1);
    case Op::Sub: return (k(0) + (m + 1) - k(1)) & m;
    case Op::Mul: return (k(0) * k(1)) & m;
    case Op::Lsl: {
        uint64_t s = k(1);
        uint64_t v = k(0);
        for (uint64_t i = 0; i < s && i < 64; ++i) v = (v * 2) & m;
        return v;
    }
    case Op::Lsr: {
        uint64_t s = k(1);
        uint64_t v = k(0);
        for (uint64_t i = 0; i < s && i < 64; ++i) v /= 2;
        return v;
    }
    case Op::Asr: {
        uint64_t s = k(1);
        uint64_t v = k(0);
        uint64_t top = (v >> (r.width - 1)) & 1;
        for (uint64_t i = 0; i < s && i < 64; ++i) v = (v / 2) | (top << (r.width - 1));
        return v & m;
    }
    case Op::Concat: {
        uint64_t v = 0;
        for (size_t i = 0; i < r.kids.size(); ++i) v = v * (1ull << r.kids[i].width) + k(i);
        return v;
    }
    case Op::Extract: {
        uint64_t v = k(0);
        uint64_t out = 0;
        for (uint32_t i = r.hi + 1; i-- > r.lo;) out = out * 2 + ((v >> i) & 1);
        return out;
    }
    case Op::Zext: return k(0);
    case Op::Sext: {
        uint64_t v = k(0);
        uint32_t w0 = r.kids[0].width;
        if ((v >> (w0 - 1)) & 1)
            for (uint32_t i = w0; i < r.width; ++i) v |= 1ull << i;
        return v;
    }
    default: return 0;
    }
}

Expr lower(const Raw& r) {
    std::vector<Expr> kids;
    for (auto& c : r.kids) kids.push_back(lower(c));
    if (r.op == Op::Cst) return cst(r.width, r.value);
    if (r.op == Op::Symb) return symb(r.name, r.width);
    OpParams p;
    p.hi = r.hi;
    p.lo = r.lo;
    p.width = r.width;
    return build(r.op, kids, p);
}

struct Gen {
    std::mt19937_64 rng;
    std::vector<std::pair<std::string, uint32_t>> syms{{"a", 4}, {"b", 4}, {"k", 1}, {"m", 1}, {"n", 2}};

    uint32_t pick(uint32_t n) { return static_cast<uint32_t>(rng() % n); }

    Raw leaf(uint32_t w) {
        std::vector<std::pair<std::string, uint32_t>> ok;
        for (auto& s : syms)
            if (s.second == w) ok.push_back(s);
        if (ok.empty() || pick(4) == 0) return Raw{Op::Cst, w, rng() & msk(w)};
        auto& s = ok[pick(static_cast<uint32_t>(ok.size()))];
        return Raw{Op::Symb, w, 0, s.first};
    }

    Raw term(uint32_t w, int depth) {
        if (depth == 0) return leaf(w);
        switch (pick(12)) {
        case 0: return leaf(w);
        case 1: return Raw{Op::Xor, w, 0, {}, 0, 0, {term(w, depth - 1), term(w, depth - 1)}};
        case 2: return Raw{Op::And, w, 0, {}, 0, 0, {term(w, depth - 1), term(w, depth - 1)}};
        case 3: return Raw{Op::Or, w, 0, {}, 0, 0, {term(w, depth - 1), term(w, depth - 1)}};
        case 4: return Raw{Op::Not, w, 0, {}, 0, 0, {term(w, depth - 1)}};
        case 5: {
            Op ops[] = {Op::Add, Op::Sub, Op::Mul};
            return Raw{ops[pick(3)], w, 0, {}, 0, 0, {term(w, depth - 1), term(w, depth - 1)}};
        }
        case 6: {
            Op ops[] = {Op::Lsl, Op::Lsr, Op::Asr};
            Raw amt = pick(2) ? Raw{Op::Cst, w, pick(w + 1) & msk(w)} : term(w, depth - 1);
            return Raw{ops[pick(3)], w, 0, {}, 0, 0, {term(w, depth - 1), amt}};
        }
        case 7:
            if (w > 1) {
                uint32_t hw = 1 + pick(w - 1);
                return Raw{Op::Concat, w, 0, {}, 0, 0, {term(hw, depth - 1), term(w - hw, depth - 1)}};
            }
            return leaf(w);
        case 8: {
            uint32_t src = w + pick(3);
            uint32_t lo = pick(src - w + 1);
            return Raw{Op::Extract, w, 0, {}, lo + w - 1, lo, {term(src, depth - 1)}};
        }
        case 9:
        case 10: {
            uint32_t src = 1 + pick(w);
            return Raw{pick(2) ? Op::Zext : Op::Sext, w, 0, {}, 0, 0, {term(src, depth - 1)}};
        }
        default: return Raw{Op::Xor, w, 0, {}, 0, 0, {term(w, depth - 1), leaf(w)}};
        }
    }
};

Assignment assign(const std::map<std::string, uint64_t>& env, const Gen& g) {
    Assignment a;
    for (auto& s : g.syms) a[s.first] = BitVec(s.second, env.at(s.first));
    return a;
}

Expr k1() { return symb("k", 1); }
Expr m1() { return symb("m", 1); }

} // namespace

TEST_CASE("simplification examples") {
    Expr x = symb("x", 1);
    CHECK(band(x, cst(1, 0)) == cst(1, 0));
    CHECK(bxor(k1(), k1()) == cst(1, 0));
    CHECK(bxor(bxor(k1(), m1()), m1()) == k1());
    CHECK(bnot(bnot(x)) == x);
    CHECK(bor(x, cst(1, 1)) == cst(1, 1));
    CHECK(bor(x, x) == x);
    CHECK(band(x, cst(1, 1)) == x);
    CHECK(band(x, bnot(x)) == cst(1, 0));
    CHECK(render(band(x, bnot(x))) == "CST(0b0)");
}

TEST_CASE("structural equality") {
    Expr mp = symb("m'", 1);
    CHECK(structurally_equal(bxor(k1(), m1()), bxor(m1(), k1())));
    CHECK_FALSE(structurally_equal(bxor(k1(), m1()), bxor(k1(), mp)));
    CHECK(structurally_equal(bxor(k1(), cst(1, 0)), k1()));
}

TEST_CASE("bit projection") {
    Expr km = bxor(k1(), m1());
    CHECK(bit(concat({m1(), km}), 0) == km);
    CHECK(bit(concat({m1(), km}), 1) == m1());
    CHECK(bit(cst(2, 0b10), 1) == cst(1, 1));
    Expr a = symb("a2", 2), b = symb("b2", 2);
    CHECK(bit(bxor(a, b), 0) == bxor(bit(a, 0), bit(b, 0)));
    CHECK_THROWS_AS(bit(a, 2), IndexOutOfRange);
    Expr s = build(Op::Add, {a, b});
    CHECK(bit(s, 1).op() == Op::Extract);
    CHECK(bit(s, 1).child(0) == s);
}

TEST_CASE("typing errors") {
    CHECK_THROWS_AS(bxor(symb("a2", 2), k1()), TypeError);
    CHECK_THROWS_AS(extract(k1(), 0, 1), TypeError);
    CHECK_THROWS_AS(zext(symb("a2", 2), 1), TypeError);
}

TEST_CASE("concrete evaluation") {
    Assignment a{{"k", BitVec(1, 1)}, {"m", BitVec(1, 1)}};
    CHECK(eval_concrete(bxor(k1(), m1()), a) == BitVec(1, 0));
    CHECK(eval_concrete(build(Op::Add, {cst(2, 3), cst(2, 1)}), {}) == BitVec(2, 0));
    CHECK_THROWS_AS(eval_concrete(symb("z", 1), a), UnboundSymbol);
    Expr p = build(Op::Pow, {symb("p", 3), cst(3, 3)});
    CHECK(p.op() == Op::Pow);
    CHECK(eval_concrete(p, {{"p", BitVec(3, 3)}}) == BitVec(3, 27 % 8));
    CHECK(eval_concrete(build(Op::Asr, {cst(3, 0b100), cst(3, 1)}), {}) == BitVec(3, 0b110));
}

TEST_CASE("symbols_of") {
    CHECK(symbols_of(bxor(k1(), m1())) == std::set<std::string>{"k", "m"});
    CHECK(symbols_of(cst(1, 1)).empty());
    CHECK(symbols_of(concat({m1(), bxor(k1(), m1())})) == std::set<std::string>{"k", "m"});
}

TEST_CASE("render and parse round trip") {
    auto widths = [](std::string_view n) -> std::optional<uint32_t> {
        if (n == "k" || n == "m") return 1;
        if (n == "a" || n == "b") return 4;
        if (n == "n") return 2;
        return std::nullopt;
    };
    CHECK(render(bxor(k1(), m1())) == "OP_XOR(SYMB(k), SYMB(m))");
    CHECK(render(cst(2, 1)) == "CST(0b01)");
    CHECK(parse_expr("OP_XOR(SYMB(k), SYMB(m))", widths) == bxor(k1(), m1()));
    CHECK_THROWS_AS(parse_expr("OP_XOR(SYMB(q), SYMB(m))", widths), UnboundSymbol);
    CHECK_THROWS_AS(parse_expr("OP_FOO(SYMB(k))", widths), ParseError);
    Gen g{std::mt19937_64(7)};
    for (int i = 0; i < 300; ++i) {
        Expr e = lower(g.term(4, 4));
        CHECK(parse_expr(render(e), widths) == e);
    }
}

TEST_CASE("simplification soundness against integer oracle") {
    Gen g{std::mt19937_64(12345)};
    for (int i = 0; i < 400; ++i) {
        uint32_t w = 1 + g.pick(4);
        Raw r = g.term(w, 4);
        Expr e = lower(r);
        REQUIRE(e.width() == w);
        for (int j = 0; j < 4; ++j) {
            std::map<std::string, uint64_t> env;
            for (auto& s : g.syms) env[s.first] = g.rng() & msk(s.second);
            uint64_t want = oracle(r, env);
            BitVec got = eval_concrete(e, assign(env, g));
            CHECK(got.bits() == want);
            for (uint32_t b = 0; b < w; ++b)
                CHECK(eval_concrete(bit(e, b), assign(env, g)).bits() == ((want >> b) & 1));
        }
    }
}

TEST_CASE("build is idempotent on canonical terms") {
    Gen g{std::mt19937_64(99)};
    for (int i = 0; i < 500; ++i) {
        Expr e = lower(g.term(1 + g.pick(4), 4));
        if (e.is_const() || e.is_symbol()) continue;
        OpParams p;
        p.hi = e.hi();
        p.lo = e.lo();
        p.width = e.width();
        p.table = e.name();
        CHECK(build(e.op(), e.children(), p) == e);
    }
}

TEST_CASE("interning agrees with deep comparison") {
    Gen g{std::mt19937_64(4242)};
    std::vector<Expr> pool;
    for (int i = 0; i < 200; ++i) pool.push_back(lower(g.term(1, 3)));
    int same = 0;
    for (int i = 0; i < 10000; ++i) {
        Expr a = pool[g.pick(200)], b = pool[g.pick(200)];
        bool deep = render(a) == render(b);
        CHECK(structurally_equal(a, b) == deep);
        same += deep;
    }
    CHECK(same > 0);
}

TEST_CASE("compiled program matches eval_concrete") {
    Gen g{std::mt19937_64(5)};
    std::vector<Expr> roots;
    for (int i = 0; i < 20; ++i) roots.push_back(lower(g.term(3, 4)));
    std::vector<std::string> vars;
    for (auto& s : g.syms) vars.push_back(s.first);
    ExprProgram prog(roots, vars);
    std::vector<uint64_t> scratch(prog.slot_count()), out(roots.size());
    for (int j = 0; j < 20; ++j) {
        std::map<std::string, uint64_t> env;
        std::vector<uint64_t> vals;
        for (auto& s : g.syms) {
            env[s.first] = g.rng() & msk(s.second);
            vals.push_back(env[s.first]);
        }
        prog.run(vals, scratch, out);
        for (size_t r = 0; r < roots.size(); ++r)
            CHECK(out[r] == eval_concrete(roots[r], assign(env, g)).bits());
    }
}
