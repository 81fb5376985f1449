#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leakprobe/bitvec.hpp"

namespace leakprobe {

// Operator vocabulary of symbolic terms. CST and SYMB are leaves; ARRAY is an
// opaque table lookup produced only by memory hooks.
enum class Op : uint8_t {
    Cst,
    Symb,
    Xor,
    And,
    Or,
    Not,
    Add,
    Mul,
    Pow,
    Sub,
    Lsl,
    Lsr,
    Asr,
    Array,
    Concat,
    Extract,
    Zext,
    Sext,
};

std::string_view op_name(Op op);

struct ExprNode {
    Op op;
    uint32_t width;
    uint32_t hi = 0;     // EXTRACT range
    uint32_t lo = 0;
    uint64_t value = 0;  // CST bits
    std::string name;    // SYMB name, ARRAY table id
    std::vector<const ExprNode*> kids;
    uint64_t hash = 0;   // structural, independent of interning order
    uint32_t id = 0;     // interning order
};

// Handle to an interned, immutable term. Two handles compare equal iff the
// terms are structurally identical.
class Expr {
  public:
    Expr() = default;
    explicit Expr(const ExprNode* n) : n_(n) {}

    const ExprNode* node() const { return n_; }
    explicit operator bool() const { return n_ != nullptr; }

    Op op() const { return n_->op; }
    uint32_t width() const { return n_->width; }
    bool is_const() const { return n_->op == Op::Cst; }
    bool is_symbol() const { return n_->op == Op::Symb; }
    uint64_t const_value() const { return n_->value; }
    const std::string& name() const { return n_->name; }
    uint32_t hi() const { return n_->hi; }
    uint32_t lo() const { return n_->lo; }
    size_t arity() const { return n_->kids.size(); }
    Expr child(size_t i) const { return Expr(n_->kids[i]); }
    std::vector<Expr> children() const;
    uint32_t id() const { return n_->id; }

    std::string to_string() const;

    friend bool operator==(Expr a, Expr b) { return a.n_ == b.n_; }

  private:
    const ExprNode* n_ = nullptr;
};

struct ExprHash {
    size_t operator()(Expr e) const { return static_cast<size_t>(e.node()->hash); }
};

// Canonical total order: leaves first (constants, then symbols by name), then
// operator nodes by structural hash with a deep comparison on ties.
struct ExprLess {
    bool operator()(Expr a, Expr b) const;
};

struct OpParams {
    uint32_t hi = 0;
    uint32_t lo = 0;
    uint32_t width = 0;  // ZEXT/SEXT target, ARRAY element width
    std::string table;   // ARRAY table id
};

Expr cst(const BitVec& v);
Expr cst(uint32_t width, uint64_t value);
Expr symb(const std::string& name, uint32_t width);

// Builds the canonically simplified term. Throws TypeError when operator
// typing is violated.
Expr build(Op op, std::vector<Expr> kids, const OpParams& params = {});

Expr bxor(Expr a, Expr b);
Expr band(Expr a, Expr b);
Expr bor(Expr a, Expr b);
Expr bnot(Expr a);
Expr concat(std::vector<Expr> msb_first);
Expr extract(Expr e, uint32_t hi, uint32_t lo);
Expr zext(Expr e, uint32_t width);
Expr sext(Expr e, uint32_t width);
Expr array_lookup(const std::string& table, uint32_t width, Expr index);

// 1-bit projection; throws IndexOutOfRange.
Expr bit(Expr e, uint32_t i);

bool structurally_equal(Expr a, Expr b);

using Assignment = std::map<std::string, BitVec>;

BitVec eval_concrete(Expr e, const Assignment& assignment);
std::set<std::string> symbols_of(Expr e);

// Prefix rendering, e.g. "OP_XOR(SYMB(k), SYMB(m))".
std::string render(Expr e);

using SymbolWidthFn = std::function<std::optional<uint32_t>(std::string_view)>;
// Inverse of render(). Symbol widths come from the callback; ARRAY widths
// from the table registry.
Expr parse_expr(std::string_view text, const SymbolWidthFn& symbol_width);

// Lookup tables referenced by ARRAY terms.
void register_table(const std::string& id, uint32_t width, std::vector<uint64_t> values);
const std::vector<uint64_t>* find_table(const std::string& id);

// Number of distinct interned terms.
size_t interned_count();

// Straight-line evaluator for a fixed set of roots over a fixed variable
// order; used by exhaustive enumeration where eval_concrete is too slow.
class ExprProgram {
  public:
    ExprProgram(std::span<const Expr> roots, const std::vector<std::string>& variables);

    size_t slot_count() const { return nodes_.size(); }
    // `scratch` must hold slot_count() entries.
    void run(std::span<const uint64_t> vars, std::span<uint64_t> scratch,
             std::span<uint64_t> out) const;

  private:
    struct Instr {
        const ExprNode* node;
        int32_t var = -1;
        uint32_t first_kid = 0;
    };
    std::vector<Instr> nodes_;
    std::vector<uint32_t> kid_slots_;
    std::vector<uint32_t> root_slots_;
};

// Applies one operator to already-evaluated child values.
uint64_t apply_op(const ExprNode& n, const uint64_t* kid_values);

} // namespace leakprobe
