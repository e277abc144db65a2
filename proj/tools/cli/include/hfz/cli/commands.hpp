#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "hfz/cli/config.hpp"

namespace hfz::cli {

enum ExitCode : int { kOk = 0, kError = 1, kCrashesFound = 2 };

// Every command writes its artifacts under config.output_root and its
// human-readable result to `out`; diagnostics go to `err`.
int cmd_run(const PipelineConfig& config, std::ostream& out, std::ostream& err);
int cmd_cmin(const PipelineConfig& config, std::ostream& out, std::ostream& err);
int cmd_security(const PipelineConfig& config, std::ostream& out, std::ostream& err);
int cmd_triage(const PipelineConfig& config, std::ostream& out, std::ostream& err);
int cmd_cov_report(const PipelineConfig& config, std::ostream& out, std::ostream& err);

// Seed directories produced by a campaign under `run_dir`: each worker queue
// and the minimized initial corpus, in a fixed order.
std::vector<fs::path> campaign_seed_dirs(const fs::path& run_dir);

// The corpus a coverage report runs over: the minimized corpus when present,
// otherwise the campaign queues plus the configured corpus directories.
std::vector<fs::path> coverage_corpus(const PipelineConfig& config);

// `k` distinct indices drawn uniformly from [0, n) (all of them when k >= n),
// returned in ascending order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace hfz::cli
