#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hfz/concolic/engine.hpp"
#include "hfz/orch/protocol.hpp"
#include "hfz/orch/seed.hpp"
#include "hfz/vm/machine.hpp"

namespace hfz::orch {

enum class Mode : std::uint8_t { LibFuzzerStyle, AflStyle };
std::string_view mode_name(Mode m);
std::optional<Mode> mode_from_name(std::string_view name);

// Coverage over every seed the orchestrator admitted: the initial corpus and
// concolic output. Cells only ever go up.
class GlobalBitmap {
 public:
  // Merges `result`'s coverage; returns true if any cell rose.
  bool merge(const vm::ExecResult& result) { return map_.merge_cells(result.coverage, result.edges).raised > 0; }
  std::size_t gain(const vm::ExecResult& result) const;
  const vm::CoverageBitmap& bitmap() const { return map_; }

 private:
  vm::CoverageBitmap map_;
};

struct SessionDirs {
  fs::path root;
  WorkerDirs fuzzer(std::size_t i) const { return {root / (i == 0 ? "main" : "fuzzer" + std::to_string(i))}; }
  WorkerDirs concolic() const { return {root / "concolic"}; }
  fs::path raw() const { return root / "concolic" / "raw"; }
  fs::path initial() const { return root / "initial"; }
  // libFuzzer-style reload ledger: one adopted concolic file name per line.
  fs::path reload_ledger() const { return root / "main" / "reload.log"; }
  fs::path summary() const { return root / "summary"; }
};

enum class SeedFate : std::uint8_t { Queue, Crash, Hang, Discard };
std::string_view seed_fate_name(SeedFate f);

struct Evaluation {
  SeedFate fate = SeedFate::Discard;
  fs::path destination;  // empty for Discard
  vm::ExecResult result;
};

// Runs `program` on the seed at `raw_path`, then moves it into the concolic
// worker's queue (when it raises the global bitmap), crashes or hangs
// directory, or deletes it. Destination names are `id:NNNNNN,...` with
// `next_id` incremented for each kept file.
Evaluation evaluate_concolic_seed(const fs::path& raw_path, GlobalBitmap& global, const vm::Program& program,
                                  const WorkerDirs& concolic, std::uint64_t& next_id,
                                  std::uint64_t step_budget = 1'000'000);

// libfuzzer_style: lines in the reload ledger; afl_style: main-queue files
// tagged `sync:concolic`.
std::size_t count_contribution(Mode mode, const SessionDirs& dirs);

struct StopConditions {
  std::size_t max_crashes = 0;     // distinct (kind, top frame); 0 = unlimited
  double session_timeout = 0;      // seconds; 0 = unlimited
  double exit_on_time = 3600;      // seconds without any global coverage gain
  std::uint64_t max_execs = 0;     // total fuzzer executions; 0 = unlimited
  std::size_t max_epochs = 0;      // 0 = unlimited
  bool operator==(const StopConditions&) const = default;
};

struct CampaignConfig {
  fs::path target;
  fs::path output;
  std::vector<fs::path> corpus_dirs;
  unsigned fuzzer_workers = 1;
  unsigned concolic_workers = 1;
  Mode mode = Mode::AflStyle;
  concolic::SolveBudget budget;
  concolic::AddressLimits address;
  std::size_t sym_pointer_period = 25;
  StopConditions stop;
  std::size_t security_sample = 100;
  std::uint64_t seed = 1;
  std::uint64_t step_budget = 1'000'000;
  // Fuzzer executions per worker between synchronization points. Workers run
  // concurrently inside an epoch and exchange seeds only at its end, which
  // keeps sessions reproducible.
  std::uint64_t execs_per_epoch = 2000;
  double poll_interval = 1.0;
  unsigned jobs = 1;
  bool operator==(const CampaignConfig&) const = default;
};

struct CampaignSummary {
  std::map<std::string, std::size_t> seeds_by_origin;  // initial / fuzzer / concolic
  std::size_t initial_total = 0;                       // before minimization
  std::size_t unique_crashes = 0;
  std::size_t crash_files = 0;
  std::size_t hangs = 0;
  std::size_t imported_from_concolic = 0;
  std::size_t concolic_launches = 0;
  std::size_t sym_pointer_launches = 0;
  std::size_t concolic_seeds = 0;  // emitted into the raw directory
  std::uint64_t fuzzer_execs = 0;
  std::size_t epochs = 0;
  std::string stop_reason;
  std::optional<std::string> first_crash_origin;
  double seconds = 0;

  std::string to_text() const;
};

struct CampaignHooks {
  // Called once per concolic launch with its 1-based index and mode.
  std::function<void(std::size_t launch, bool sym_pointers)> on_launch;
};

// Full-mode launches: every `period`-th one, counting from 1.
inline bool sym_pointer_launch(std::size_t launch, std::size_t period) {
  return period > 0 && launch % period == 0;
}

CampaignSummary run_campaign(const CampaignConfig& config, const CampaignHooks& hooks = {});

}  // namespace hfz::orch
