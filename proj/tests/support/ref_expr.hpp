#pragma once

// Reference bitvector expressions for oracle tests: a plain tree with its own
// evaluator, plus a translation into library expressions. The evaluator does
// not use any library code, so folding and rewriting in the builders are
// checked against independent arithmetic.

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "hfz/sym/expr.hpp"

namespace hfz::test {

struct Ref;
using RefPtr = std::shared_ptr<const Ref>;

struct Ref {
  enum class K { In, Const, Not, Neg, ZExt, SExt, Bin, Cmp, Ite, Extract, Concat };
  K k = K::Const;
  sym::Op op = sym::Op::Add;  // Bin and Cmp
  unsigned width = 8;
  std::uint64_t v = 0;  // Const value, In offset
  unsigned hi = 0, lo = 0;
  std::vector<RefPtr> kids;
};

inline std::uint64_t ref_mask(unsigned w) { return w >= 64 ? ~0ULL : (1ULL << w) - 1; }
inline std::int64_t ref_signed(std::uint64_t v, unsigned w) {
  v &= ref_mask(w);
  if (w < 64 && (v >> (w - 1)) & 1) return static_cast<std::int64_t>(v | ~ref_mask(w));
  return static_cast<std::int64_t>(v);
}

inline std::uint64_t ref_eval(const Ref& r, std::span<const std::uint8_t> in) {
  using sym::Op;
  const auto m = ref_mask(r.width);
  auto kid = [&](int i) { return ref_eval(*r.kids[i], in); };
  switch (r.k) {
    case Ref::K::In: return r.v < in.size() ? in[r.v] : 0;
    case Ref::K::Const: return r.v & m;
    case Ref::K::Not: return ~kid(0) & m;
    case Ref::K::Neg: return (~kid(0) + 1) & m;
    case Ref::K::ZExt: return kid(0);
    case Ref::K::SExt: return static_cast<std::uint64_t>(ref_signed(kid(0), r.kids[0]->width)) & m;
    case Ref::K::Extract: return (kid(0) >> r.lo) & ref_mask(r.hi - r.lo + 1);
    case Ref::K::Concat: return ((kid(0) << r.kids[1]->width) | kid(1)) & m;
    case Ref::K::Ite: return kid(0) ? kid(1) : kid(2);
    case Ref::K::Bin: {
      const auto a = kid(0), b = kid(1);
      const unsigned w = r.width;
      const auto sa = ref_signed(a, w), sb = ref_signed(b, w);
      switch (r.op) {
        case Op::Add: return (a + b) & m;
        case Op::Sub: return (a + (~b + 1)) & m;
        case Op::Mul: return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b) & m;
        case Op::UDiv: return b == 0 ? m : a / b;
        case Op::SDiv:
          if (b == 0) return sa < 0 ? 1 : m;
          if (sb == -1) return (~a + 1) & m;
          return static_cast<std::uint64_t>(sa / sb) & m;
        case Op::And: return a & b;
        case Op::Or: return a | b;
        case Op::Xor: return a ^ b;
        case Op::Shl: return b >= w ? 0 : (a << b) & m;
        case Op::LShr: return b >= w ? 0 : a >> b;
        case Op::AShr: return b >= w ? (sa < 0 ? m : 0) : static_cast<std::uint64_t>(sa >> b) & m;
        default: return 0;
      }
    }
    case Ref::K::Cmp: {
      const unsigned w = r.kids[0]->width;
      const auto a = kid(0), b = kid(1);
      const auto sa = ref_signed(a, w), sb = ref_signed(b, w);
      switch (r.op) {
        case Op::Eq: return a == b;
        case Op::Ne: return a != b;
        case Op::Ult: return a < b;
        case Op::Ule: return a <= b;
        case Op::Ugt: return a > b;
        case Op::Uge: return a >= b;
        case Op::Slt: return sa < sb;
        case Op::Sle: return sa <= sb;
        case Op::Sgt: return sa > sb;
        case Op::Sge: return sa >= sb;
        default: return 0;
      }
    }
  }
  return 0;
}

inline sym::Expr to_expr(const Ref& r) {
  using namespace sym;
  auto kid = [&](int i) { return to_expr(*r.kids[i]); };
  switch (r.k) {
    case Ref::K::In: return input_byte(static_cast<std::uint32_t>(r.v));
    case Ref::K::Const: return constant(r.v & ref_mask(r.width), r.width);
    case Ref::K::Not: return lnot(kid(0));
    case Ref::K::Neg: return neg(kid(0));
    case Ref::K::ZExt: return zext(kid(0), r.width);
    case Ref::K::SExt: return sext(kid(0), r.width);
    case Ref::K::Extract: return extract(kid(0), r.hi, r.lo);
    case Ref::K::Concat: return concat(kid(0), kid(1));
    case Ref::K::Ite: return ite(kid(0), kid(1), kid(2));
    case Ref::K::Bin: return binary(r.op, kid(0), kid(1));
    case Ref::K::Cmp: return compare(r.op, kid(0), kid(1));
  }
  return nullptr;
}

// Random expression generator over a fixed set of input offsets.
class RefGen {
 public:
  RefGen(std::uint64_t seed, std::vector<std::uint32_t> offsets) : rng_(seed), offsets_(std::move(offsets)) {}

  std::mt19937_64& rng() { return rng_; }

  RefPtr value(unsigned width, int depth) {
    if (depth <= 0 || pick(4) == 0) return leaf(width);
    switch (pick(10)) {
      case 0: return unary(pick(2) ? Ref::K::Not : Ref::K::Neg, width, value(width, depth - 1));
      case 1:
        if (width > 8) {
          const unsigned from = width / 2;
          return ext(pick(2) ? Ref::K::ZExt : Ref::K::SExt, width, value(from, depth - 1));
        }
        break;
      case 2:
        if (width < 64) {
          const auto inner = value(width * 2, depth - 1);
          const unsigned lo = static_cast<unsigned>(pick(width + 1));
          auto r = std::make_shared<Ref>();
          r->k = Ref::K::Extract;
          r->width = width;
          r->lo = lo;
          r->hi = lo + width - 1;
          r->kids = {inner};
          return r;
        }
        break;
      case 3:
        if (width >= 16) {
          auto r = std::make_shared<Ref>();
          r->k = Ref::K::Concat;
          r->width = width;
          r->kids = {value(width / 2, depth - 1), value(width / 2, depth - 1)};
          return r;
        }
        break;
      case 4: {
        auto r = std::make_shared<Ref>();
        r->k = Ref::K::Ite;
        r->width = width;
        r->kids = {boolean(depth - 1), value(width, depth - 1), value(width, depth - 1)};
        return r;
      }
      default: break;
    }
    static const sym::Op ops[] = {sym::Op::Add, sym::Op::Sub, sym::Op::Mul,  sym::Op::UDiv, sym::Op::SDiv,
                                  sym::Op::And, sym::Op::Or,  sym::Op::Xor,  sym::Op::Shl,  sym::Op::LShr,
                                  sym::Op::AShr};
    auto r = std::make_shared<Ref>();
    r->k = Ref::K::Bin;
    r->op = ops[pick(std::size(ops))];
    r->width = width;
    auto rhs = value(width, depth - 1);
    if (r->op == sym::Op::Shl || r->op == sym::Op::LShr || r->op == sym::Op::AShr) {
      if (pick(3)) rhs = constant(pick(width + 2), width);
    }
    r->kids = {value(width, depth - 1), rhs};
    return r;
  }

  RefPtr boolean(int depth) {
    static const sym::Op cmps[] = {sym::Op::Eq,  sym::Op::Ne,  sym::Op::Ult, sym::Op::Ule, sym::Op::Ugt,
                                   sym::Op::Uge, sym::Op::Slt, sym::Op::Sle, sym::Op::Sgt, sym::Op::Sge};
    static const unsigned widths[] = {8, 8, 16, 32, 64};
    const unsigned w = widths[pick(std::size(widths))];
    auto r = std::make_shared<Ref>();
    r->k = Ref::K::Cmp;
    r->op = cmps[pick(std::size(cmps))];
    r->width = 1;
    r->kids = {value(w, depth), pick(2) ? constant(small_or_any(w), w) : value(w, depth)};
    return r;
  }

  RefPtr constant(std::uint64_t v, unsigned width) {
    auto r = std::make_shared<Ref>();
    r->k = Ref::K::Const;
    r->width = width;
    r->v = v & ref_mask(width);
    return r;
  }

  RefPtr input(std::uint32_t offset, unsigned width) {
    auto r = std::make_shared<Ref>();
    r->k = Ref::K::In;
    r->width = 8;
    r->v = offset;
    if (width == 8) return r;
    return ext(Ref::K::ZExt, width, r);
  }

  std::uint64_t pick(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng_); }

 private:
  RefPtr leaf(unsigned width) {
    if (!offsets_.empty() && pick(3) != 0) return input(offsets_[pick(offsets_.size())], width);
    return constant(small_or_any(width), width);
  }

  std::uint64_t small_or_any(unsigned width) {
    if (pick(2)) return pick(300);
    return rng_() & ref_mask(width);
  }

  RefPtr unary(Ref::K k, unsigned width, RefPtr a) {
    auto r = std::make_shared<Ref>();
    r->k = k;
    r->width = width;
    r->kids = {std::move(a)};
    return r;
  }

  RefPtr ext(Ref::K k, unsigned width, RefPtr a) {
    auto r = std::make_shared<Ref>();
    r->k = k;
    r->width = width;
    r->kids = {std::move(a)};
    return r;
  }

  std::mt19937_64 rng_;
  std::vector<std::uint32_t> offsets_;
};

// Enumerates every assignment of the bytes at `offsets` (others zero) and
// reports whether any makes `r` true. The satisfying input is stored in `witness`.
inline bool ref_satisfiable(const Ref& r, const std::vector<std::uint32_t>& offsets, std::vector<std::uint8_t>& witness) {
  std::uint32_t top = 0;
  for (auto o : offsets) top = std::max(top, o + 1);
  std::vector<std::uint8_t> in(top, 0);
  const std::uint64_t total = 1ULL << (8 * offsets.size());
  for (std::uint64_t x = 0; x < total; ++x) {
    for (std::size_t i = 0; i < offsets.size(); ++i) in[offsets[i]] = static_cast<std::uint8_t>(x >> (8 * i));
    if (ref_eval(r, in)) {
      witness = in;
      return true;
    }
  }
  return false;
}

}  // namespace hfz::test
