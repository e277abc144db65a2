#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "hfz/cmin/cmin.hpp"
#include "hfz/concolic/path.hpp"
#include "hfz/triage/triage.hpp"

namespace {

using namespace hfz;

void BM_Slice(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::vector<concolic::PathConstraint> pred(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto e = sym::zext(sym::input_byte(static_cast<std::uint32_t>(rng() % 64)), 16);
    e = sym::add(e, sym::zext(sym::input_byte(static_cast<std::uint32_t>(rng() % 64)), 16));
    pred[i].expr = sym::compare(sym::Op::Ne, e, sym::constant(999, 16));
    pred[i].seq = i;
  }
  concolic::PathConstraint target;
  target.expr = sym::eq(sym::input_byte(3), sym::constant(1, 8));
  target.seq = pred.size();
  for (auto _ : state) benchmark::DoNotOptimize(concolic::slice(pred, target));
}
BENCHMARK(BM_Slice)->Arg(100)->Arg(1000);

void BM_Minimize(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::vector<cmin::CorpusEntry> e(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i].path = std::to_string(i);
    e[i].bytes_len = 1 + rng() % 100;
    for (int k = 0; k < 40; ++k) e[i].bitmap.set(static_cast<std::uint32_t>(rng() % 4096), static_cast<std::uint8_t>(1u << (rng() % 8)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(cmin::minimize(e));
}
BENCHMARK(BM_Minimize)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_TraceDistance(benchmark::State& state) {
  std::mt19937_64 rng(3);
  auto trace = [&] {
    std::vector<vm::Frame> t(static_cast<std::size_t>(state.range(0)));
    for (auto& f : t) f = {"fn" + std::to_string(rng() % 8), "x.asm", static_cast<std::uint32_t>(rng() % 20)};
    return t;
  };
  const auto a = trace(), b = trace();
  for (auto _ : state) benchmark::DoNotOptimize(triage::trace_distance(a, b));
}
BENCHMARK(BM_TraceDistance)->Arg(8)->Arg(64);

}  // namespace
