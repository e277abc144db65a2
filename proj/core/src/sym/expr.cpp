#include "hfz/sym/expr.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "hfz/common/hash.hpp"

namespace hfz::sym {
namespace {

std::atomic<std::size_t> g_live_nodes{0};

constexpr std::uint32_t kSizeCap = 1u << 30;
// Single-input expressions up to this size are checked exhaustively for
// being constant, which keeps their dependency sets exact.
constexpr std::uint32_t kFoldProbeSize = 64;

std::uint64_t node_hash(const Node& n) {
  Fnv1a h;
  h.byte(static_cast<std::uint8_t>(n.op)).byte(n.width).byte(n.hi).byte(n.lo).u64(n.value).u64(n.region);
  for (const auto& k : n.kids) h.u64(k->hash);
  return h.value();
}

Expr finish(std::shared_ptr<Node> n) {
  std::uint64_t size = 1;
  for (const auto& k : n->kids) {
    n->deps = deps_union(n->deps, k->deps);
    size += k->tree_size;
    n->depth = std::max(n->depth, k->depth + 1);
  }
  n->tree_size = static_cast<std::uint32_t>(std::min<std::uint64_t>(size, kSizeCap));
  n->hash = node_hash(*n);
  return n;
}

std::uint64_t eval_single(const Node& n, std::uint32_t offset, std::uint8_t byte);

Expr maybe_fold_single(Expr e) {
  if (e->deps.size() != 1 || e->tree_size > kFoldProbeSize || e->op == Op::Input) return e;
  const auto off = e->deps.front();
  const auto first = eval_single(*e, off, 0);
  for (unsigned v = 1; v < 256; ++v) {
    if (eval_single(*e, off, static_cast<std::uint8_t>(v)) != first) return e;
  }
  return constant(first, e->width);
}

Expr make(Op op, unsigned width, std::vector<Expr> kids) {
  auto n = std::make_shared<Node>(op, static_cast<std::uint8_t>(width));
  n->kids = std::move(kids);
  return maybe_fold_single(finish(std::move(n)));
}

bool same(const Expr& a, const Expr& b) { return a == b || structurally_equal(a, b); }

bool commutative(Op op) {
  return op == Op::Add || op == Op::Mul || op == Op::And || op == Op::Or || op == Op::Xor;
}

}  // namespace

Node::Node(Op o, std::uint8_t w) : op(o), width(w) { ++g_live_nodes; }
Node::~Node() { --g_live_nodes; }

std::size_t live_nodes() { return g_live_nodes.load(); }

const char* op_name(Op op) {
  static constexpr const char* kNames[] = {
      "in", "const", "not", "neg", "zext", "sext", "add", "sub", "mul", "udiv", "sdiv", "and", "or",
      "xor", "shl", "lshr", "ashr", "concat", "extract", "eq", "ne", "ult", "ule", "ugt", "uge",
      "slt", "sle", "sgt", "sge", "ite", "select",
  };
  return kNames[static_cast<std::size_t>(op)];
}

bool is_compare(Op op) { return op >= Op::Eq && op <= Op::Sge; }
bool is_binary(Op op) { return op >= Op::Add && op <= Op::AShr; }

Op negate_compare(Op op) {
  switch (op) {
    case Op::Eq: return Op::Ne;
    case Op::Ne: return Op::Eq;
    case Op::Ult: return Op::Uge;
    case Op::Ule: return Op::Ugt;
    case Op::Ugt: return Op::Ule;
    case Op::Uge: return Op::Ult;
    case Op::Slt: return Op::Sge;
    case Op::Sle: return Op::Sgt;
    case Op::Sgt: return Op::Sle;
    case Op::Sge: return Op::Slt;
    default: return op;
  }
}

Op swap_compare(Op op) {
  switch (op) {
    case Op::Ult: return Op::Ugt;
    case Op::Ule: return Op::Uge;
    case Op::Ugt: return Op::Ult;
    case Op::Uge: return Op::Ule;
    case Op::Slt: return Op::Sgt;
    case Op::Sle: return Op::Sge;
    case Op::Sgt: return Op::Slt;
    case Op::Sge: return Op::Sle;
    default: return op;
  }
}

Deps deps_union(const Deps& a, const Deps& b) {
  if (b.empty()) return a;
  if (a.empty()) return b;
  Deps out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool deps_intersect(const Deps& a, const Deps& b) {
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return true;
    if (*i < *j) ++i;
    else ++j;
  }
  return false;
}

std::uint64_t mask(unsigned width) { return width >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1; }

std::int64_t to_signed(std::uint64_t v, unsigned width) {
  if (width >= 64) return static_cast<std::int64_t>(v);
  const unsigned shift = 64 - width;
  return static_cast<std::int64_t>(v << shift) >> shift;
}

std::uint64_t apply_unary(Op op, unsigned width, unsigned from_width, std::uint64_t a) {
  switch (op) {
    case Op::Not: return ~a & mask(width);
    case Op::Neg: return (0 - a) & mask(width);
    case Op::ZExt: return a & mask(from_width);
    case Op::SExt: return static_cast<std::uint64_t>(to_signed(a, from_width)) & mask(width);
    default: throw std::logic_error("not a unary op");
  }
}

std::uint64_t apply_binary(Op op, unsigned width, std::uint64_t a, std::uint64_t b) {
  const auto m = mask(width);
  a &= m;
  b &= m;
  switch (op) {
    case Op::Add: return (a + b) & m;
    case Op::Sub: return (a - b) & m;
    case Op::Mul: return (a * b) & m;
    case Op::UDiv: return b == 0 ? m : a / b;
    case Op::SDiv: {
      const auto sa = to_signed(a, width), sb = to_signed(b, width);
      if (sb == 0) return sa < 0 ? 1 : m;
      if (sb == -1) return (0 - a) & m;
      return static_cast<std::uint64_t>(sa / sb) & m;
    }
    case Op::And: return a & b;
    case Op::Or: return a | b;
    case Op::Xor: return a ^ b;
    case Op::Shl: return b >= width ? 0 : (a << b) & m;
    case Op::LShr: return b >= width ? 0 : a >> b;
    case Op::AShr: {
      const auto sa = to_signed(a, width);
      if (b >= width) return sa < 0 ? m : 0;
      return static_cast<std::uint64_t>(sa >> b) & m;
    }
    case Op::Eq: return a == b;
    case Op::Ne: return a != b;
    case Op::Ult: return a < b;
    case Op::Ule: return a <= b;
    case Op::Ugt: return a > b;
    case Op::Uge: return a >= b;
    case Op::Slt: return to_signed(a, width) < to_signed(b, width);
    case Op::Sle: return to_signed(a, width) <= to_signed(b, width);
    case Op::Sgt: return to_signed(a, width) > to_signed(b, width);
    case Op::Sge: return to_signed(a, width) >= to_signed(b, width);
    default: throw std::logic_error("not a binary op");
  }
}

namespace {

std::uint64_t eval_single(const Node& n, std::uint32_t offset, std::uint8_t byte) {
  switch (n.op) {
    case Op::Input: return n.value == offset ? byte : 0;
    case Op::Const: return n.value;
    case Op::Not: case Op::Neg: case Op::ZExt: case Op::SExt:
      return apply_unary(n.op, n.width, n.kids[0]->width, eval_single(*n.kids[0], offset, byte));
    case Op::Concat:
      return (eval_single(*n.kids[0], offset, byte) << n.kids[1]->width) | eval_single(*n.kids[1], offset, byte);
    case Op::Extract: return (eval_single(*n.kids[0], offset, byte) >> n.lo) & mask(n.width);
    case Op::Ite:
      return eval_single(*n.kids[0], offset, byte) ? eval_single(*n.kids[1], offset, byte)
                                                   : eval_single(*n.kids[2], offset, byte);
    case Op::Select: {
      const auto idx = eval_single(*n.kids[0], offset, byte) - n.value;
      return idx < n.kids.size() - 1 ? eval_single(*n.kids[idx + 1], offset, byte) : 0;
    }
    default: {
      const auto& a = *n.kids[0];
      return apply_binary(n.op, a.width, eval_single(a, offset, byte), eval_single(*n.kids[1], offset, byte));
    }
  }
}

}  // namespace

Expr input_byte(std::uint32_t offset) {
  auto n = std::make_shared<Node>(Op::Input, 8);
  n->value = offset;
  n->deps = {offset};
  return finish(std::move(n));
}

Expr constant(std::uint64_t value, unsigned width) {
  auto n = std::make_shared<Node>(Op::Const, static_cast<std::uint8_t>(width));
  n->value = value & mask(width);
  return finish(std::move(n));
}

Expr bool_const(bool v) { return constant(v ? 1 : 0, 1); }

Expr lnot(const Expr& a) {
  if (a->is_const()) return constant(~a->value, a->width);
  if (a->op == Op::Not) return a->kids[0];
  if (a->width == 1 && is_compare(a->op)) return compare(negate_compare(a->op), a->kids[0], a->kids[1]);
  return make(Op::Not, a->width, {a});
}

Expr neg(const Expr& a) {
  if (a->is_const()) return constant(0 - a->value, a->width);
  return make(Op::Neg, a->width, {a});
}

Expr zext(const Expr& a, unsigned width) {
  if (width == a->width) return a;
  if (width < a->width) return extract(a, width - 1, 0);
  if (a->is_const()) return constant(a->value, width);
  if (a->op == Op::ZExt) return zext(a->kids[0], width);
  return make(Op::ZExt, width, {a});
}

Expr sext(const Expr& a, unsigned width) {
  if (width == a->width) return a;
  if (width < a->width) return extract(a, width - 1, 0);
  if (a->is_const()) return constant(static_cast<std::uint64_t>(to_signed(a->value, a->width)), width);
  return make(Op::SExt, width, {a});
}

Expr binary(Op op, const Expr& a_in, const Expr& b_in) {
  if (is_compare(op)) return compare(op, a_in, b_in);
  if (a_in->width != b_in->width) throw std::logic_error("binary: width mismatch");
  Expr a = a_in, b = b_in;
  const unsigned w = a->width;
  if (a->is_const() && b->is_const()) return constant(apply_binary(op, w, a->value, b->value), w);
  if (commutative(op) && a->is_const()) std::swap(a, b);
  const auto m = mask(w);
  switch (op) {
    case Op::Add:
      if (b->is_const() && b->value == 0) return a;
      if (b->is_const() && a->op == Op::Add && a->kids[1]->is_const()) {
        return add(a->kids[0], constant(a->kids[1]->value + b->value, w));
      }
      break;
    case Op::Sub:
      if (b->is_const()) return b->value == 0 ? a : add(a, constant(0 - b->value, w));
      if (same(a, b)) return constant(0, w);
      break;
    case Op::Mul:
      if (b->is_const() && b->value == 1) return a;
      if (b->is_const() && b->value == 0) return constant(0, w);
      break;
    case Op::UDiv:
      if (b->is_const() && b->value == 1) return a;
      break;
    case Op::And:
      if (b->is_const() && b->value == 0) return constant(0, w);
      if (b->is_const() && b->value == m) return a;
      if (same(a, b)) return a;
      break;
    case Op::Or:
      if (b->is_const() && b->value == 0) return a;
      if (b->is_const() && b->value == m) return constant(m, w);
      if (same(a, b)) return a;
      break;
    case Op::Xor:
      if (b->is_const() && b->value == 0) return a;
      if (same(a, b)) return constant(0, w);
      break;
    case Op::Shl: case Op::LShr:
      if (b->is_const() && b->value == 0) return a;
      if (b->is_const() && b->value >= w) return constant(0, w);
      break;
    case Op::AShr:
      if (b->is_const() && b->value == 0) return a;
      break;
    default: break;
  }
  return make(op, w, {a, b});
}

Expr compare(Op op, const Expr& a, const Expr& b) {
  if (a->width != b->width) throw std::logic_error("compare: width mismatch");
  if (a->is_const() && b->is_const()) return bool_const(apply_binary(op, a->width, a->value, b->value) != 0);
  if (same(a, b)) {
    return bool_const(op == Op::Eq || op == Op::Ule || op == Op::Uge || op == Op::Sle || op == Op::Sge);
  }
  if (a->width == 1 && b->is_const() && (op == Op::Eq || op == Op::Ne)) {
    const bool keep = (op == Op::Eq) == (b->value == 1);
    return keep ? a : lnot(a);
  }
  if (b->is_const() && b->value == 0) {
    if (op == Op::Ult) return bool_const(false);
    if (op == Op::Uge) return bool_const(true);
  }
  if (a->is_const() && !b->is_const()) return compare(swap_compare(op), b, a);
  return make(op, 1, {a, b});
}

Expr concat(const Expr& high, const Expr& low) {
  const unsigned w = high->width + low->width;
  if (w > 64) throw std::logic_error("concat wider than 64 bits");
  if (high->is_const() && low->is_const()) return constant((high->value << low->width) | low->value, w);
  if (high->op == Op::Extract && low->op == Op::Extract && high->lo == low->hi + 1 &&
      same(high->kids[0], low->kids[0])) {
    return extract(high->kids[0], high->hi, low->lo);
  }
  if (high->is_false() || (high->is_const() && high->value == 0)) return zext(low, w);
  return make(Op::Concat, w, {high, low});
}

Expr extract(const Expr& a, unsigned hi, unsigned lo) {
  if (hi < lo || hi >= a->width) throw std::logic_error("extract: bad bounds");
  const unsigned w = hi - lo + 1;
  if (w == a->width) return a;
  if (a->is_const()) return constant(a->value >> lo, w);
  if (a->op == Op::Extract) return extract(a->kids[0], hi + a->lo, lo + a->lo);
  if (a->op == Op::ZExt) {
    const unsigned inner = a->kids[0]->width;
    if (hi < inner) return extract(a->kids[0], hi, lo);
    if (lo >= inner) return constant(0, w);
  }
  if (a->op == Op::Concat) {
    const auto& h = a->kids[0];
    const auto& l = a->kids[1];
    if (hi < l->width) return extract(l, hi, lo);
    if (lo >= l->width) return extract(h, hi - l->width, lo - l->width);
  }
  auto n = std::make_shared<Node>(Op::Extract, static_cast<std::uint8_t>(w));
  n->hi = static_cast<std::uint8_t>(hi);
  n->lo = static_cast<std::uint8_t>(lo);
  n->kids = {a};
  return maybe_fold_single(finish(std::move(n)));
}

Expr ite(const Expr& cond, const Expr& then_e, const Expr& else_e) {
  if (cond->width != 1 || then_e->width != else_e->width) throw std::logic_error("ite: width mismatch");
  if (cond->is_const()) return cond->value ? then_e : else_e;
  if (same(then_e, else_e)) return then_e;
  if (then_e->width == 1 && then_e->is_true() && else_e->is_false()) return cond;
  if (then_e->width == 1 && then_e->is_false() && else_e->is_true()) return lnot(cond);
  return make(Op::Ite, then_e->width, {cond, then_e, else_e});
}

Expr select(std::uint32_t region, std::uint64_t base, const Expr& addr, std::vector<Expr> cells) {
  if (cells.empty()) return constant(0, 8);
  if (addr->is_const()) {
    const auto idx = addr->value - base;
    return idx < cells.size() ? cells[idx] : constant(0, 8);
  }
  // The concrete run accessed this region, so a single-cell region (or one
  // whose cells agree) reads that cell.
  if (std::all_of(cells.begin() + 1, cells.end(), [&](const Expr& c) { return same(c, cells.front()); })) {
    return cells.front();
  }
  auto n = std::make_shared<Node>(Op::Select, 8);
  n->region = region;
  n->value = base;
  n->kids.reserve(cells.size() + 1);
  n->kids.push_back(addr);
  for (auto& c : cells) n->kids.push_back(std::move(c));
  return finish(std::move(n));
}

Expr all_of(std::span<const Expr> terms) {
  Expr acc = bool_const(true);
  for (const auto& t : terms) {
    if (t->is_false()) return bool_const(false);
    if (t->is_true()) continue;
    acc = acc->is_true() ? t : land(acc, t);
  }
  return acc;
}

Expr any_of(std::span<const Expr> terms) {
  Expr acc = bool_const(false);
  for (const auto& t : terms) {
    if (t->is_true()) return bool_const(true);
    if (t->is_false()) continue;
    acc = acc->is_false() ? t : lor(acc, t);
  }
  return acc;
}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->hash != b->hash || a->op != b->op || a->width != b->width || a->hi != b->hi || a->lo != b->lo ||
      a->value != b->value || a->region != b->region || a->kids.size() != b->kids.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a->kids.size(); ++i) {
    if (!structurally_equal(a->kids[i], b->kids[i])) return false;
  }
  return true;
}

namespace {

struct Evaluator {
  std::span<const std::uint8_t> input;
  std::unordered_map<const Node*, std::uint64_t> memo;

  std::uint64_t run(const Node& n) {
    if (n.op == Op::Const) return n.value;
    if (n.op == Op::Input) return n.value < input.size() ? input[n.value] : 0;
    if (auto it = memo.find(&n); it != memo.end()) return it->second;
    std::uint64_t v = 0;
    switch (n.op) {
      case Op::Not: case Op::Neg: case Op::ZExt: case Op::SExt:
        v = apply_unary(n.op, n.width, n.kids[0]->width, run(*n.kids[0]));
        break;
      case Op::Concat: v = (run(*n.kids[0]) << n.kids[1]->width) | run(*n.kids[1]); break;
      case Op::Extract: v = (run(*n.kids[0]) >> n.lo) & mask(n.width); break;
      case Op::Ite: v = run(*n.kids[0]) ? run(*n.kids[1]) : run(*n.kids[2]); break;
      case Op::Select: {
        const auto idx = run(*n.kids[0]) - n.value;
        v = idx < n.kids.size() - 1 ? run(*n.kids[idx + 1]) : 0;
        break;
      }
      default: v = apply_binary(n.op, n.kids[0]->width, run(*n.kids[0]), run(*n.kids[1])); break;
    }
    memo.emplace(&n, v);
    return v;
  }
};

void print(const Expr& e, int depth, std::string& out) {
  if (e->op == Op::Const) {
    out += "0x" + to_hex(e->value).substr(16 - std::max<std::size_t>(1, (e->width + 3) / 4)) + ":" +
           std::to_string(e->width);
    return;
  }
  if (e->op == Op::Input) {
    out += "in[" + std::to_string(e->value) + "]";
    return;
  }
  if (depth <= 0) {
    out += "...";
    return;
  }
  out += "(";
  out += op_name(e->op);
  if (e->op == Op::Extract) out += " " + std::to_string(e->hi) + ":" + std::to_string(e->lo);
  if (e->op == Op::ZExt || e->op == Op::SExt) out += std::to_string(e->width);
  if (e->op == Op::Select) {
    out += " #" + std::to_string(e->region) + " ";
    print(e->kids[0], depth - 1, out);
    out += " [" + std::to_string(e->kids.size() - 1) + " cells])";
    return;
  }
  for (const auto& k : e->kids) {
    out += " ";
    print(k, depth - 1, out);
  }
  out += ")";
}

}  // namespace

std::uint64_t evaluate(const Expr& e, std::span<const std::uint8_t> input) {
  Evaluator ev{input, {}};
  return ev.run(*e);
}

std::string to_string(const Expr& e, int max_depth) {
  std::string out;
  print(e, max_depth, out);
  return out;
}

std::size_t dag_size(const Expr& e) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{e.get()};
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    for (const auto& k : n->kids) stack.push_back(k.get());
  }
  return seen.size();
}

bool contains(const Expr& haystack, const Node* needle, std::size_t visit_limit) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{haystack.get()};
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    if (n == needle) return true;
    if (n->deps.empty() || !seen.insert(n).second) continue;
    if (seen.size() > visit_limit) return false;
    for (const auto& k : n->kids) stack.push_back(k.get());
  }
  return false;
}

}  // namespace hfz::sym
