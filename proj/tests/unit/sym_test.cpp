#include <gtest/gtest.h>

#include <chrono>
#include <set>

#include "hfz/sym/expr.hpp"
#include "hfz/sym/solver.hpp"
#include "ref_expr.hpp"

namespace hfz::sym {
namespace {

using test::Ref;
using test::RefGen;

Expr byte(std::uint32_t i) { return input_byte(i); }
Expr c8(std::uint64_t v) { return constant(v, 8); }

TEST(Expr, DepsAreUnionOfChildren) {
  const auto e = add(zext(byte(3), 32), binary(Op::Mul, zext(byte(1), 32), constant(7, 32)));
  EXPECT_EQ(e->deps, (Deps{1, 3}));
  EXPECT_EQ(e->width, 32);
  EXPECT_TRUE(constant(5, 64)->deps.empty());
}

TEST(Expr, ConstantFolding) {
  const auto e = add(constant(250, 8), constant(10, 8));
  ASSERT_TRUE(e->is_const());
  EXPECT_EQ(e->value, 4u);
  EXPECT_TRUE(eq(byte(0), byte(0))->is_true());
  EXPECT_TRUE(compare(Op::Ult, c8(3), c8(2))->is_false());
}

TEST(Expr, EvaluateReadsMissingBytesAsZero) {
  const auto e = add(zext(byte(0), 16), zext(byte(5), 16));
  const Bytes in = {7};
  EXPECT_EQ(evaluate(e, in), 7u);
}

TEST(Expr, Negations) {
  for (auto op : {Op::Eq, Op::Ne, Op::Ult, Op::Ule, Op::Ugt, Op::Uge, Op::Slt, Op::Sle, Op::Sgt, Op::Sge}) {
    const auto a = compare(op, byte(0), byte(1));
    const auto n = compare(negate_compare(op), byte(0), byte(1));
    const auto s = compare(swap_compare(op), byte(1), byte(0));
    for (int x = 0; x < 256; x += 17) {
      for (int y = 0; y < 256; y += 13) {
        const Bytes in = {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y)};
        EXPECT_NE(evaluate(a, in), evaluate(n, in)) << op_name(op);
        EXPECT_EQ(evaluate(a, in), evaluate(s, in)) << op_name(op);
      }
    }
  }
}

TEST(Expr, SelectReadsCells) {
  std::vector<Expr> cells = {c8(10), c8(20), byte(1), c8(40)};
  const auto addr = add(constant(0x1000, 64), zext(binary(Op::And, byte(0), c8(3)), 64));
  const auto e = select(1, 0x1000, addr, cells);
  EXPECT_EQ(e->width, 8);
  EXPECT_EQ(evaluate(e, Bytes{0, 99}), 10u);
  EXPECT_EQ(evaluate(e, Bytes{2, 99}), 99u);
  EXPECT_EQ(evaluate(e, Bytes{7, 99}), 40u);
  EXPECT_EQ(e->deps, (Deps{0, 1}));
  // Out of region reads as 0.
  const auto far = select(1, 0x1000, constant(0x2000, 64), cells);
  EXPECT_EQ(evaluate(far, {}), 0u);
}

TEST(Expr, DagSharing) {
  auto x = zext(byte(0), 64);
  for (int i = 0; i < 40; ++i) x = add(x, x);
  EXPECT_LE(dag_size(x), 45u);
  EXPECT_TRUE(contains(x, byte(0).get()) || !x->deps.empty());
}

// Library evaluation (with all folding and rewrites applied at build time)
// agrees with the reference evaluator on random trees.
TEST(ExprProperty, EvaluateMatchesReference) {
  RefGen gen(11, {0, 1, 2});
  std::mt19937_64 rng(5);
  for (int t = 0; t < 3000; ++t) {
    const unsigned widths[] = {8, 16, 32, 64};
    const auto r = gen.pick(4) == 0 ? gen.boolean(3) : gen.value(widths[gen.pick(4)], 4);
    const auto e = test::to_expr(*r);
    ASSERT_EQ(e->width, r->width);
    for (int k = 0; k < 8; ++k) {
      const Bytes in = {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()),
                        static_cast<std::uint8_t>(rng())};
      ASSERT_EQ(evaluate(e, in), test::ref_eval(*r, in)) << to_string(e);
    }
  }
}

// Offsets whose perturbation changes the value, by exhaustive enumeration of
// a 2-byte input space.
std::set<std::uint32_t> semantic_deps(const Ref& r) {
  std::set<std::uint32_t> out;
  for (int a = 0; a < 256; ++a) {
    for (int b = 0; b < 256; ++b) {
      const Bytes in = {static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)};
      const auto v = test::ref_eval(r, in);
      for (std::uint32_t off : {0u, 1u}) {
        if (out.count(off)) continue;
        Bytes p = in;
        for (int d = 1; d < 256 && !out.count(off); d += 37) {
          p[off] = static_cast<std::uint8_t>(in[off] + d);
          if (test::ref_eval(r, p) != v) out.insert(off);
        }
      }
    }
    if (out.size() == 2) break;
  }
  return out;
}

// Soundness on arbitrary trees: every offset that can change the value is
// listed in deps.
TEST(ExprProperty, DepsCoverSemanticDependence) {
  RefGen gen(23, {0, 1});
  for (int t = 0; t < 80; ++t) {
    const auto r = gen.value(16, 3);
    const auto e = test::to_expr(*r);
    const auto sem = semantic_deps(*r);
    const std::set<std::uint32_t> syn(e->deps.begin(), e->deps.end());
    for (auto off : sem) EXPECT_TRUE(syn.count(off)) << off << " in " << to_string(e);
  }
}

// Exactness on expressions built from operations that are bijective in each
// operand, where syntactic and semantic dependence coincide.
TEST(ExprProperty, DepsExactOnInvertibleExpressions) {
  std::mt19937_64 rng(29);
  for (int t = 0; t < 150; ++t) {
    RefGen g(rng(), {});
    std::vector<test::RefPtr> leaves;
    const int uses = 1 + static_cast<int>(rng() % 2);
    for (int i = 0; i < uses; ++i) leaves.push_back(g.input(static_cast<std::uint32_t>(i), 16));
    test::RefPtr cur = leaves[0];
    for (std::size_t i = 1; i < leaves.size(); ++i) {
      auto b = std::make_shared<Ref>();
      b->k = Ref::K::Bin;
      b->width = 16;
      b->op = (rng() % 2) ? Op::Add : Op::Xor;
      b->kids = {cur, leaves[i]};
      cur = b;
    }
    for (int step = 0; step < 4; ++step) {
      auto n = std::make_shared<Ref>();
      n->width = 16;
      switch (rng() % 4) {
        case 0: n->k = Ref::K::Not; n->kids = {cur}; break;
        case 1: n->k = Ref::K::Neg; n->kids = {cur}; break;
        case 2: n->k = Ref::K::Bin; n->op = Op::Mul; n->kids = {cur, g.constant((rng() % 500) * 2 + 1, 16)}; break;
        default: n->k = Ref::K::Bin; n->op = Op::Xor; n->kids = {cur, g.constant(rng(), 16)}; break;
      }
      cur = n;
    }
    const auto e = test::to_expr(*cur);
    const auto sem = semantic_deps(*cur);
    EXPECT_EQ(std::set<std::uint32_t>(e->deps.begin(), e->deps.end()), sem) << to_string(e);
  }
}

TEST(Solver, WraparoundModel) {
  const std::vector<Expr> c = {eq(add(byte(0), c8(1)), c8(0))};
  const auto r = solve(c);
  ASSERT_EQ(r.verdict, Verdict::Sat);
  EXPECT_EQ(r.model.at(0), 255);
}

TEST(Solver, EmptyIntervalUnsat) {
  const std::vector<Expr> c = {compare(Op::Ult, byte(0), c8(5)), compare(Op::Ugt, byte(0), c8(10))};
  EXPECT_EQ(solve(c).verdict, Verdict::Unsat);
}

TEST(Solver, ContradictionFolds) {
  const std::vector<Expr> c = {compare(Op::Ne, byte(0), byte(0))};
  EXPECT_EQ(solve(c).verdict, Verdict::Unsat);
}

TEST(Solver, EmptyConjunctionIsSat) {
  const auto r = solve(std::vector<Expr>{});
  EXPECT_EQ(r.verdict, Verdict::Sat);
  EXPECT_TRUE(r.model.empty());
}

TEST(Solver, ManyIndependentBytes) {
  std::vector<Expr> c;
  for (std::uint32_t i = 0; i < 32; ++i) c.push_back(eq(byte(i), c8(0x40 + i)));
  const auto r = solve(c);
  ASSERT_EQ(r.verdict, Verdict::Sat);
  for (std::uint32_t i = 0; i < 32; ++i) EXPECT_EQ(r.model.at(i), 0x40 + i);
}

TEST(Solver, WideWordEquality) {
  // 32-bit packed word, beyond exhaustive size; byte-wise equality
  // splitting solves it.
  Expr w = zext(byte(0), 32);
  for (std::uint32_t i = 1; i < 4; ++i) w = binary(Op::Or, binary(Op::Shl, w, constant(8, 32)), zext(byte(i), 32));
  const std::vector<Expr> c = {eq(w, constant(0xdeadbeef, 32))};
  const auto r = solve(c);
  ASSERT_EQ(r.verdict, Verdict::Sat);
  EXPECT_TRUE(satisfies(c, apply_model({}, r.model)));
}

TEST(Solver, HintKeepsUnconstrainedBytes) {
  const Bytes base = {1, 2, 3, 4};
  SolveOptions o;
  o.hint = base;
  const std::vector<Expr> c = {eq(byte(2), c8(9))};
  const auto r = solve(c, o);
  ASSERT_EQ(r.verdict, Verdict::Sat);
  EXPECT_EQ(apply_model(base, r.model), (Bytes{1, 2, 9, 4}));
}

TEST(Solver, ApplyModelGrowsBuffer) {
  Model m{{5, 7}};
  EXPECT_EQ(apply_model(Bytes{1}, m), (Bytes{1, 0, 0, 0, 0, 7}));
}

TEST(Solver, PerQueryTimeoutYieldsUnknown) {
  // A 64-bit multiplicative hash over 8 bytes: no domain shortcut and far
  // beyond exhaustive search.
  Expr h = constant(0, 64);
  for (std::uint32_t i = 0; i < 8; ++i)
    h = binary(Op::Xor, binary(Op::Mul, h, constant(0x100000001b3ULL, 64)), zext(byte(i), 64));
  const std::vector<Expr> c = {eq(h, constant(0x123456789abcdefULL, 64))};
  SolveOptions o;
  o.per_query = std::chrono::milliseconds(300);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = solve(c, o);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(r.verdict, Verdict::Unknown);
  EXPECT_LT(s, 1.3);
}

TEST(Solver, DeadlineRespected) {
  Expr h = constant(0, 64);
  for (std::uint32_t i = 0; i < 8; ++i)
    h = binary(Op::Xor, binary(Op::Mul, h, constant(0x100000001b3ULL, 64)), zext(byte(i), 64));
  const std::vector<Expr> c = {eq(h, constant(0x123456789abcdefULL, 64))};
  SolveOptions o;
  o.per_query = std::chrono::seconds(10);
  o.deadline = Clock::now() + std::chrono::milliseconds(200);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(solve(c, o).verdict, Verdict::Unknown);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.2);
}

// Small-scale version of the verdict oracle: up to two bytes, every model
// replays, and Sat/Unsat matches enumeration.
TEST(SolverProperty, VerdictsMatchEnumeration) {
  std::mt19937_64 rng(77);
  int sat = 0, unsat = 0;
  for (int t = 0; t < 300; ++t) {
    std::vector<std::uint32_t> offs = {static_cast<std::uint32_t>(rng() % 4)};
    if (rng() % 2) offs.push_back(offs[0] + 1 + static_cast<std::uint32_t>(rng() % 3));
    RefGen gen(rng(), offs);
    const auto r = gen.boolean(3);
    const auto e = test::to_expr(*r);
    std::vector<std::uint8_t> witness;
    const bool expect = test::ref_satisfiable(*r, offs, witness);
    const std::vector<Expr> c = {e};
    const auto res = solve(c);
    ASSERT_NE(res.verdict, Verdict::Unknown) << to_string(e);
    EXPECT_EQ(res.verdict == Verdict::Sat, expect) << to_string(e);
    if (res.verdict == Verdict::Sat) {
      EXPECT_TRUE(test::ref_eval(*r, apply_model({}, res.model))) << to_string(e);
      ++sat;
    } else {
      ++unsat;
    }
  }
  EXPECT_GT(sat, 0);
  EXPECT_GT(unsat, 0);
}

TEST(Solver, NormalizeSplitsConjunctions) {
  const auto both = land(eq(byte(0), c8(1)), eq(byte(1), c8(2)));
  const std::vector<Expr> in = {both};
  const auto out = normalize(in);
  EXPECT_GE(out.size(), 2u);
  const Bytes good = {1, 2};
  const Bytes bad = {1, 3};
  EXPECT_TRUE(satisfies(out, good));
  EXPECT_FALSE(satisfies(out, bad));
}

}  // namespace
}  // namespace hfz::sym
