#include <benchmark/benchmark.h>

#include <filesystem>

#include "hfz/common/fs.hpp"
#include "hfz/concolic/cache.hpp"
#include "hfz/concolic/engine.hpp"
#include "hfz/orch/fuzzer.hpp"
#include "hfz/vm/machine.hpp"
#include "hfz/vm/parser.hpp"

namespace {

using namespace hfz;

vm::Program target(const char* name) { return vm::load_program(std::filesystem::path(HFZ_SOURCE_DIR) / "targets" / name); }

void BM_Execute(benchmark::State& state) {
  const auto p = target("branch_dense.asm");
  const Bytes in(40, 'A');
  for (auto _ : state) benchmark::DoNotOptimize(vm::execute(p, in));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Execute);

void BM_ExecuteSanitizer(benchmark::State& state) {
  const auto p = target("security/heap_oob.asm");
  vm::ExecOptions o;
  o.sanitizer = true;
  const Bytes in = {0};
  for (auto _ : state) benchmark::DoNotOptimize(vm::execute(p, in, o));
}
BENCHMARK(BM_ExecuteSanitizer);

void BM_FuzzerRun(benchmark::State& state) {
  const auto p = target("magic_check.asm");
  const auto dir = std::filesystem::temp_directory_path() / "hfz-bench-fuzzer";
  for (auto _ : state) {
    state.PauseTiming();
    std::filesystem::remove_all(dir);
    orch::WorkerDirs w{dir};
    w.create();
    orch::HavocFuzzer f(p, w, {.seed = 5});
    f.add_seed(Bytes{}, {}, true);
    state.ResumeTiming();
    f.run(static_cast<std::uint64_t>(state.range(0)));
  }
  std::filesystem::remove_all(dir);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FuzzerRun)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_ConcolicRun(benchmark::State& state) {
  const auto p = target("branch_dense.asm");
  const Bytes in(40, 'A');
  for (auto _ : state) {
    concolic::InversionCache cache;
    benchmark::DoNotOptimize(concolic::run_concolic(p, in, cache));
  }
}
BENCHMARK(BM_ConcolicRun)->Unit(benchmark::kMillisecond);

}  // namespace
