#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hfz::orch {

namespace fs = std::filesystem;

// Worker directory layout:
//   <worker>/queue/    seed files named id:NNNNNN[,tag...]
//   <worker>/crashes/
//   <worker>/hangs/
//   <worker>/stats     key = value lines: execs, last_cov_gain_unix, pending
struct WorkerDirs {
  fs::path root;
  fs::path queue() const { return root / "queue"; }
  fs::path crashes() const { return root / "crashes"; }
  fs::path hangs() const { return root / "hangs"; }
  fs::path stats() const { return root / "stats"; }
  void create() const;
};

struct WorkerStats {
  std::uint64_t execs = 0;
  std::uint64_t last_cov_gain_unix = 0;
  std::uint64_t pending = 0;
};

std::string format_stats(const WorkerStats& s);
// Empty on malformed text: unknown keys are ignored, but every known key must
// parse as an unsigned integer and `execs` must be present.
std::optional<WorkerStats> parse_stats(const std::string& text);

struct QueueEntry {
  std::string name;
  bool new_cov = false;  // `+cov` tag
  std::optional<std::uint64_t> afl_id;
};

struct PollResult {
  std::vector<QueueEntry> queue;
  std::vector<std::string> crashes;
  std::vector<std::string> hangs;
  WorkerStats stats;
  bool stats_stale = false;  // the stats file was missing or malformed
};

// Remembers what a poller has already reported for one worker directory.
struct AdapterState {
  std::set<std::string> seen_queue, seen_crashes, seen_hangs;
  WorkerStats stats;
};

// Incremental scan: entries reported once, in name order. Hidden files
// (in-flight temporaries) are never reported.
PollResult adapter_poll(const fs::path& worker_dir, AdapterState& state);

}  // namespace hfz::orch
