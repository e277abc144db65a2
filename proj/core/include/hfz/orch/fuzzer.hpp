#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hfz/common/bytes.hpp"
#include "hfz/common/rng.hpp"
#include "hfz/orch/protocol.hpp"
#include "hfz/vm/machine.hpp"

namespace hfz::orch {

struct FuzzerOptions {
  std::uint64_t seed = 1;
  std::uint64_t step_budget = 1'000'000;
  std::size_t max_input = 4096;
};

// Coverage-guided havoc fuzzer speaking the worker directory protocol.
// Everything it does is a function of its seed and the inputs it is given,
// so sessions replay exactly.
class HavocFuzzer {
 public:
  HavocFuzzer(const vm::Program& program, WorkerDirs dirs, FuzzerOptions options);

  // Executes `input` and queues it when it raises the fuzzer's coverage
  // (always when `force`). Extra tags are appended to the file name.
  bool add_seed(const Bytes& input, std::string_view tags = {}, bool force = false);

  // Runs `execs` mutated inputs, fewer if `cancel` gets set.
  void run(std::uint64_t execs, const std::atomic<bool>* cancel = nullptr);

  // Imports files from another worker's queue that raise this fuzzer's
  // coverage. Imported entries carry `sync:<source>` in their names. Each
  // file is looked at once. Returns the names of the imported source files.
  std::vector<std::string> sync_from(const fs::path& queue_dir, std::string_view source);

  std::uint64_t execs() const { return execs_; }
  std::size_t queue_size() const { return queue_.size(); }
  std::size_t crash_count() const { return crash_sites_.size(); }
  // Execution count at which the first crash was seen, 0 if none.
  std::uint64_t first_crash_exec() const { return first_crash_exec_; }
  const vm::CoverageBitmap& coverage() const { return coverage_; }
  const WorkerDirs& dirs() const { return dirs_; }

  void write_stats(std::uint64_t pending = 0) const;

  Bytes mutate(const Bytes& base);

 private:
  enum class Verdict { None, Queued, Crash, Hang };
  Verdict evaluate(const Bytes& input, std::string_view tags, bool force);
  std::string next_name(std::string_view tags);

  const vm::Program& program_;
  WorkerDirs dirs_;
  FuzzerOptions options_;
  Rng rng_;
  vm::CoverageBitmap coverage_;
  vm::CoverageBitmap hang_coverage_;
  std::vector<Bytes> queue_;
  std::set<std::pair<int, std::size_t>> crash_sites_;
  std::set<std::string> synced_;
  std::uint64_t execs_ = 0;
  std::uint64_t next_id_ = 0;
  std::uint64_t cursor_ = 0;
  std::uint64_t first_crash_exec_ = 0;
  std::uint64_t last_gain_unix_ = 0;
};

}  // namespace hfz::orch
