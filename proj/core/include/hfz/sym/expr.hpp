#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hfz::sym {

// Bitvector expression DAG over input bytes. Nodes are immutable and shared;
// the builder functions below fold constants and apply local rewrites, so
// callers never construct nodes directly.

enum class Op : std::uint8_t {
  Input, Const,
  Not, Neg, ZExt, SExt,
  Add, Sub, Mul, UDiv, SDiv, And, Or, Xor, Shl, LShr, AShr,
  Concat, Extract,
  Eq, Ne, Ult, Ule, Ugt, Uge, Slt, Sle, Sgt, Sge,
  Ite, Select,
};

const char* op_name(Op op);
bool is_compare(Op op);
bool is_binary(Op op);
Op negate_compare(Op op);
Op swap_compare(Op op);

using Deps = std::vector<std::uint32_t>;  // sorted, unique input offsets

Deps deps_union(const Deps& a, const Deps& b);
bool deps_intersect(const Deps& a, const Deps& b);

class Node;
using Expr = std::shared_ptr<const Node>;

class Node {
 public:
  Op op;
  std::uint8_t width;
  std::uint8_t hi = 0, lo = 0;   // Extract bounds
  std::uint64_t value = 0;       // Const value, Input offset, Select region base
  std::uint32_t region = 0;      // Select region id
  std::vector<Expr> kids;        // Select: [addr, cell0, cell1, ...]
  Deps deps;
  std::uint64_t hash = 0;
  std::uint32_t tree_size = 1;   // saturating node count with sharing expanded
  std::uint32_t depth = 1;

  Node(Op op, std::uint8_t width);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  bool is_const() const { return op == Op::Const; }
  bool is_true() const { return op == Op::Const && value != 0; }
  bool is_false() const { return op == Op::Const && value == 0; }
  bool symbolic() const { return !deps.empty(); }
};

// Live node gauge, used for the engine's memory budget.
std::size_t live_nodes();
inline constexpr std::size_t kApproxNodeBytes = sizeof(Node) + 48;

std::uint64_t mask(unsigned width);
std::int64_t to_signed(std::uint64_t v, unsigned width);

// Operator semantics shared by constant folding and the evaluators.
std::uint64_t apply_unary(Op op, unsigned width, unsigned from_width, std::uint64_t a);
std::uint64_t apply_binary(Op op, unsigned width, std::uint64_t a, std::uint64_t b);

// Builders.
Expr input_byte(std::uint32_t offset);
Expr constant(std::uint64_t value, unsigned width);
Expr bool_const(bool v);
Expr lnot(const Expr& a);  // bitwise not; logical not on width 1
Expr neg(const Expr& a);
Expr zext(const Expr& a, unsigned width);
Expr sext(const Expr& a, unsigned width);
Expr binary(Op op, const Expr& a, const Expr& b);
Expr compare(Op op, const Expr& a, const Expr& b);
Expr concat(const Expr& high, const Expr& low);
Expr extract(const Expr& a, unsigned hi, unsigned lo);
Expr ite(const Expr& cond, const Expr& then_e, const Expr& else_e);
// Byte read from `cells` (the region starting at `base`) at `addr`.
// Out-of-region addresses read as 0.
Expr select(std::uint32_t region, std::uint64_t base, const Expr& addr, std::vector<Expr> cells);

inline Expr add(const Expr& a, const Expr& b) { return binary(Op::Add, a, b); }
inline Expr sub(const Expr& a, const Expr& b) { return binary(Op::Sub, a, b); }
inline Expr land(const Expr& a, const Expr& b) { return binary(Op::And, a, b); }
inline Expr lor(const Expr& a, const Expr& b) { return binary(Op::Or, a, b); }
inline Expr eq(const Expr& a, const Expr& b) { return compare(Op::Eq, a, b); }

// Conjunction/disjunction of width-1 expressions.
Expr all_of(std::span<const Expr> terms);
Expr any_of(std::span<const Expr> terms);

bool structurally_equal(const Expr& a, const Expr& b);

// Concrete evaluation. Offsets past the end of `input` read as 0, matching
// the VM's INPUT semantics.
std::uint64_t evaluate(const Expr& e, std::span<const std::uint8_t> input);

std::string to_string(const Expr& e, int max_depth = 12);
// Distinct nodes reachable from e.
std::size_t dag_size(const Expr& e);
// True if `needle` is reachable from `haystack` (pointer identity).
bool contains(const Expr& haystack, const Node* needle, std::size_t visit_limit = 1u << 16);

}  // namespace hfz::sym
