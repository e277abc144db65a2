#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hfz/common/bytes.hpp"
#include "hfz/concolic/cache.hpp"
#include "hfz/concolic/invert.hpp"
#include "hfz/concolic/path.hpp"
#include "hfz/secpred/secpred.hpp"
#include "hfz/vm/machine.hpp"

namespace hfz::concolic {

struct SolveBudget {
  double per_query_seconds = 10;
  double total_seconds = 60;
  double run_seconds = 120;
  std::size_t queue_threshold = 300;
  std::uint64_t memory_bytes = 8ULL << 30;
  unsigned solver_threads = 1;
  bool operator==(const SolveBudget&) const = default;
};

struct Modes {
  bool sym_pointers = false;    // model reads through symbolic pointers with Select
  bool check_security = false;  // build and solve security predicates
  bool invert_branches = true;  // regular branch and switch inversion
  bool fuzz_addresses = true;   // solver-driven fuzzing of symbolic addresses
};

struct AddressLimits {
  std::size_t per_address = 10;
  std::size_t per_run = 1000;
  double query_seconds = 0.25;
  bool operator==(const AddressLimits&) const = default;
};

// Observation points for the job queue, called on the tracer thread.
struct RunHooks {
  std::function<void(std::size_t pending)> on_push;
  std::function<void(std::size_t pending)> on_suspend;
  std::function<void(std::size_t pending)> on_resume;
};

struct RunOptions {
  AddressLimits address;
  std::uint64_t step_budget = 1'000'000;
  std::size_t max_switch_cases = 256;
  bool keep_predicate = false;
  std::uint64_t rng_seed = 0x5eed;
  RunHooks hooks;
  // Polled by the tracer and the solver workers; set to abandon the run.
  const std::atomic<bool>* cancel = nullptr;
};

struct RunStats {
  std::size_t seeds_generated = 0;
  std::size_t branches_seen = 0;
  std::size_t branches_inverted = 0;
  std::size_t optimistic_seeds = 0;
  std::size_t strong_optimistic_seeds = 0;
  std::size_t timeouts = 0;
  std::size_t suspensions = 0;
  std::size_t jobs = 0;
  std::size_t jobs_skipped = 0;  // dropped because the total solver budget ran out
  std::size_t solver_queries = 0;
  std::size_t max_pending = 0;
  std::size_t address_models = 0;
  std::size_t findings = 0;
  std::size_t constraints = 0;
  std::uint64_t steps = 0;
  double solver_seconds = 0;
  double max_query_seconds = 0;
  double run_seconds = 0;
  bool aborted_time = false;
  bool aborted_memory = false;
  bool cancelled = false;

  std::vector<std::pair<std::string, std::string>> entries() const;
  // key=value lines
  std::string to_text() const;
};

struct RunResult {
  std::vector<Bytes> new_seeds;  // unique, excluding the input itself, in job order
  std::vector<Candidate::Kind> seed_kinds;
  std::vector<secpred::SecurityFinding> findings;  // unverified
  RunStats stats;
  vm::ExecResult exec;  // the concrete run
  bool crashed() const { return exec.crashed(); }
  std::vector<PathConstraint> predicate;  // when keep_predicate is set
  // Input offsets the faulting address depends on, when the run crashed in a
  // LOAD or STORE. Empty deps mean a concrete address.
  std::optional<sym::Deps> crash_address_deps;
};

RunResult run_concolic(const vm::Program& program, std::span<const std::uint8_t> input, InversionCache& cache,
                       const SolveBudget& budget = {}, const Modes& modes = {}, const RunOptions& options = {});

// Symbolic shadow of the machine: registers and memory bytes that depend on
// input. Missing entries are concrete.
struct SymState {
  std::array<Expr, vm::kNumRegs> regs{};
  std::unordered_map<std::uint64_t, Expr> memory;

  Expr reg_or_const(const vm::Machine& m, int r) const;
  Expr byte_or_const(const vm::Machine& m, std::uint64_t addr) const;
  // Little-endian read of `width` bytes zero-extended to 64 bits; null when
  // every byte is concrete.
  Expr read(const vm::Machine& m, std::uint64_t addr, unsigned width) const;
  void write(std::uint64_t addr, const Expr& value, unsigned width);
};

// Solver-driven exploration of a symbolic address: the minimum and maximum
// feasible values, then distinct models in between, up to limits.per_address.
// `run_models` counts models across the run and stops at limits.per_run.
std::vector<Bytes> fuzz_symbolic_address(const Expr& addr, std::span<const PathConstraint> sliced,
                                         std::span<const std::uint8_t> base_input, const AddressLimits& limits,
                                         const sym::SolveOptions& solve, std::size_t& run_models);

inline constexpr std::uint64_t kMaxSymbolicRegion = 4096;

// Select-based read of `width` bytes from `region` at a symbolic address.
// Empty when the region exceeds `cap` bytes.
std::optional<Expr> read_symbolic_memory(const Expr& addr, const vm::MemoryObject& region, const SymState& sym,
                                         const vm::Machine& m, unsigned width, std::uint64_t cap = kMaxSymbolicRegion);

struct IntrinsicSummary {
  Expr value;                       // new r0, 64 bits
  std::vector<Expr> side_conditions;  // recorded as path constraints
};

inline constexpr std::size_t kParseIntSymbolicBytes = 20;

// Direct formula for an intrinsic's result over the current state. Empty
// when none of its inputs is symbolic.
std::optional<IntrinsicSummary> intrinsic_summary(vm::Intrinsic id, const SymState& sym, const vm::Machine& m);

}  // namespace hfz::concolic
