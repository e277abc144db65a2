#include "hfz/orch/protocol.hpp"

#include <charconv>
#include <sstream>

#include "hfz/common/fs.hpp"
#include "hfz/common/log.hpp"
#include "hfz/orch/seed.hpp"

namespace hfz::orch {

void WorkerDirs::create() const {
  fs::create_directories(queue());
  fs::create_directories(crashes());
  fs::create_directories(hangs());
}

std::string format_stats(const WorkerStats& s) {
  return "execs = " + std::to_string(s.execs) + "\nlast_cov_gain_unix = " + std::to_string(s.last_cov_gain_unix) +
         "\npending = " + std::to_string(s.pending) + "\n";
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::optional<WorkerStats> parse_stats(const std::string& text) {
  WorkerStats s;
  bool have_execs = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) return std::nullopt;
    const auto key = trim(t.substr(0, eq));
    const auto value = trim(t.substr(eq + 1));
    std::uint64_t* slot = key == "execs" ? &s.execs
                          : key == "last_cov_gain_unix" ? &s.last_cov_gain_unix
                          : key == "pending" ? &s.pending
                          : nullptr;
    if (!slot) continue;
    const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), *slot);
    if (ec != std::errc{} || end != value.data() + value.size()) return std::nullopt;
    have_execs = have_execs || key == "execs";
  }
  if (!have_execs) return std::nullopt;
  return s;
}

PollResult adapter_poll(const fs::path& worker_dir, AdapterState& state) {
  PollResult out;
  const WorkerDirs dirs{worker_dir};
  for (const auto& p : fsx::list_files(dirs.queue())) {
    auto name = p.filename().string();
    if (!state.seen_queue.insert(name).second) continue;
    out.queue.push_back({name, has_tag(name, "+cov"), parse_afl_id(name)});
  }
  for (const auto& p : fsx::list_files(dirs.crashes())) {
    auto name = p.filename().string();
    if (state.seen_crashes.insert(name).second) out.crashes.push_back(std::move(name));
  }
  for (const auto& p : fsx::list_files(dirs.hangs())) {
    auto name = p.filename().string();
    if (state.seen_hangs.insert(name).second) out.hangs.push_back(std::move(name));
  }
  std::optional<WorkerStats> stats;
  std::error_code ec;
  if (fs::is_regular_file(dirs.stats(), ec)) {
    try {
      stats = parse_stats(fsx::read_text(dirs.stats()));
    } catch (const std::exception&) {
    }
    if (!stats) log::warn("malformed stats file " + dirs.stats().string() + ", keeping previous values");
  }
  if (stats) state.stats = *stats;
  out.stats_stale = !stats;
  out.stats = state.stats;
  return out;
}

}  // namespace hfz::orch
