#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hfz/vm/machine.hpp"

namespace hfz::triage {

// Ordered: a larger value is more severe.
enum class Severity : std::uint8_t { NotExploitable, ProbablyExploitable, Exploitable };
std::string_view severity_name(Severity s);
std::optional<Severity> severity_from_name(std::string_view name);

struct CrashReport {
  std::string id;
  std::string cmdline;
  vm::CrashKind crash_kind = vm::CrashKind::DivByZero;
  vm::SourceLoc crash_loc;
  std::vector<vm::Frame> stack_trace;  // innermost first
  std::array<std::uint64_t, vm::kNumRegs> registers{};
  vm::Flags flags;
  std::vector<std::pair<std::uint32_t, std::string>> source_excerpt;
  std::string seed_path;
  Severity severity = Severity::NotExploitable;
  std::uint64_t crash_address = 0;
  bool is_write = false;
  // Whether the faulting address depends on input, when a symbolic replay
  // could tell.
  std::optional<bool> controlled_address;
  std::vector<vm::Diagnostic> diagnostics;

  bool operator==(const CrashReport&) const = default;
};

struct ReportOptions {
  bool sanitizer = true;
  std::uint64_t step_budget = 1'000'000;
  // Replay symbolically to decide whether wild addresses are input-controlled.
  bool probe_control = true;
};

std::optional<CrashReport> generate_report(const vm::Program& program, std::span<const std::uint8_t> seed,
                                           const std::string& seed_path, const ReportOptions& options = {});

Severity estimate_severity(const CrashReport& report);

std::uint64_t frame_hash(const vm::Frame& frame);
std::uint64_t trace_hash(std::span<const vm::Frame> trace);

// One report per trace hash: the one with the smallest id. Result sorted by id.
std::vector<CrashReport> dedup(std::vector<CrashReport> reports);

// Edit distance over frames (equal when function and line match), divided by
// the longer length. Two empty traces are at distance 0.
double trace_distance(std::span<const vm::Frame> a, std::span<const vm::Frame> b);

struct Cluster {
  std::vector<std::string> members;  // report ids, sorted
  std::string representative;
  vm::SourceLoc crash_line;
  std::size_t size = 0;
  Severity severity = Severity::NotExploitable;
  vm::CrashKind crash_kind = vm::CrashKind::DivByZero;
  std::string representative_seed;
};

// Agglomerative complete-linkage clustering; clusters whose merged diameter
// stays within `threshold` are joined. Sorted by size, largest first.
std::vector<Cluster> cluster(const std::vector<CrashReport>& reports, double threshold = 0.3);

// Each report in a cluster of its own, for when clustering is skipped.
std::vector<Cluster> singleton_clusters(const std::vector<CrashReport>& reports);

std::string render(const CrashReport& report);
std::string render(const std::vector<Cluster>& clusters);

std::string report_to_json(const CrashReport& report);
CrashReport report_from_json(std::string_view text);

struct TriageOptions {
  double threshold = 0.3;
  bool sanitizer = true;
  bool skip_clustering = false;  // step 3
  bool skip_rerun = false;       // step 4
  unsigned jobs = 1;
  std::uint64_t step_budget = 1'000'000;
  bool probe_control = true;
};

struct TriageResult {
  std::size_t seeds = 0;
  std::vector<CrashReport> reports;  // deduplicated, by id
  std::size_t total_reports = 0;     // before dedup
  std::vector<Cluster> clusters;
  // Representative id -> whether it still crashes without the sanitizer.
  std::map<std::string, bool> reproduces;
};

// Steps: reports for every seed, dedup, clustering, plain re-run of each
// cluster representative. Writes reports/<id>.json, cl<N>/ with member
// reports and a summary, and a top-level summary into `out_dir`.
TriageResult run_triage(const vm::Program& program, const std::vector<std::filesystem::path>& seeds,
                        const std::filesystem::path& out_dir, const TriageOptions& options = {});

}  // namespace hfz::triage
