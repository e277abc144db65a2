#include "hfz/cli/commands.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "hfz/cmin/cmin.hpp"
#include "hfz/common/fs.hpp"
#include "hfz/common/parallel.hpp"
#include "hfz/common/rng.hpp"
#include "hfz/concolic/engine.hpp"
#include "hfz/orch/campaign.hpp"
#include "hfz/secpred/secpred.hpp"
#include "hfz/triage/triage.hpp"
#include "hfz/vm/parser.hpp"

namespace hfz::cli {
namespace {

bool non_empty_dir(const fs::path& dir) {
  std::error_code ec;
  return fs::is_directory(dir, ec) && !fs::is_empty(dir, ec);
}

// Stage directories are created once per output root.
void claim_stage_dir(const fs::path& dir) {
  if (non_empty_dir(dir)) throw std::runtime_error(dir.string() + " already exists and is not empty");
  fs::create_directories(dir);
}

vm::Program load_target(const PipelineConfig& config) {
  if (config.campaign.target.empty()) throw std::runtime_error("no target configured");
  return vm::load_program(config.campaign.target);
}

template <typename Fn>
int guarded(std::ostream& err, const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "hfz " << name << ": " << e.what() << "\n";
    return kError;
  }
}

std::string join_lines(const std::vector<std::uint32_t>& lines) {
  std::string s;
  for (auto l : lines) s += (s.empty() ? "" : " ") + std::to_string(l);
  return s;
}

double percent(std::size_t part, std::size_t whole) {
  return whole == 0 ? 100.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

}  // namespace

std::vector<fs::path> campaign_seed_dirs(const fs::path& run_dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(run_dir, ec)) return out;
  std::vector<fs::path> workers;
  for (const auto& e : fs::directory_iterator(run_dir, ec)) {
    if (e.is_directory(ec) && fs::is_directory(e.path() / "queue", ec)) workers.push_back(e.path() / "queue");
  }
  std::sort(workers.begin(), workers.end());
  out = std::move(workers);
  if (fs::is_directory(run_dir / "initial", ec)) out.push_back(run_dir / "initial");
  return out;
}

std::vector<fs::path> coverage_corpus(const PipelineConfig& config) {
  if (non_empty_dir(config.cmin_dir())) return {config.cmin_dir()};
  auto dirs = campaign_seed_dirs(config.run_dir());
  dirs.insert(dirs.end(), config.campaign.corpus_dirs.begin(), config.campaign.corpus_dirs.end());
  return dirs;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, n);
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

int cmd_run(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, "run", [&] {
    auto campaign = config.campaign;
    campaign.output = config.run_dir();
    load_target(config);
    fs::create_directories(config.output_root);
    const auto summary = orch::run_campaign(campaign);
    out << summary.to_text();
    return summary.unique_crashes > 0 ? kCrashesFound : kOk;
  });
}

int cmd_cmin(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, "cmin", [&] {
    const auto program = load_target(config);
    std::vector<std::pair<std::string, fs::path>> sources;
    for (const auto& d : campaign_seed_dirs(config.run_dir())) {
      const auto tag = d.filename() == "queue" ? d.parent_path().filename().string() : d.filename().string();
      sources.emplace_back(tag, d);
    }
    for (std::size_t i = 0; i < config.campaign.corpus_dirs.size(); ++i)
      sources.emplace_back("corpus" + std::to_string(i), config.campaign.corpus_dirs[i]);

    // Worker queues reuse the same id-based names, so seeds are staged
    // under a per-source prefix before minimizing.
    const auto staging = config.output_root / ".cmin-staging";
    fs::remove_all(staging);
    fs::create_directories(staging);
    std::size_t staged = 0;
    for (const auto& [tag, dir] : sources) {
      for (const auto& f : fsx::list_files(dir)) {
        std::error_code ec;
        fs::copy_file(f, staging / (tag + "_" + f.filename().string()), ec);
        if (ec) {
          err << "hfz cmin: skipping " << f.string() << ": " << ec.message() << "\n";
          continue;
        }
        ++staged;
      }
    }
    if (staged == 0) {
      fs::remove_all(staging);
      err << "hfz cmin: empty corpus\n";
      return kError;
    }
    claim_stage_dir(config.cmin_dir());
    const auto result = cmin::minimize_directory(program, {staging}, config.cmin_dir(), config.campaign.jobs,
                                                 config.campaign.step_budget);
    fs::remove_all(staging);
    out << "kept " << result.kept.size() << "/" << result.total << "\n";
    return result.kept.empty() ? kError : kOk;
  });
}

int cmd_security(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, "security", [&] {
    const auto program = load_target(config);
    const auto corpus = fsx::list_files(config.cmin_dir());
    if (corpus.empty()) {
      err << "hfz security: no minimized corpus in " << config.cmin_dir().string() << "\n";
      return kError;
    }
    const auto picks = sample_indices(corpus.size(), config.campaign.security_sample, config.campaign.seed);
    claim_stage_dir(config.security_dir() / "seeds");

    concolic::InversionCache cache;
    const concolic::Modes modes{.sym_pointers = false, .check_security = true, .invert_branches = false,
                                .fuzz_addresses = false};
    concolic::RunOptions options;
    options.address = config.campaign.address;
    options.step_budget = config.campaign.step_budget;
    options.rng_seed = config.campaign.seed;

    std::vector<secpred::SecurityFinding> all;
    std::string analyzed;
    for (auto i : picks) {
      const auto seed = fsx::read_file(corpus[i]);
      auto r = concolic::run_concolic(program, seed, cache, config.campaign.budget, modes, options);
      auto verified = secpred::verify_findings(std::move(r.findings), program, seed, config.campaign.step_budget);
      all.insert(all.end(), std::make_move_iterator(verified.begin()), std::make_move_iterator(verified.end()));
      analyzed += corpus[i].filename().string() + "\n";
    }
    const auto unique = secpred::dedup_findings(all);

    std::vector<std::string> names;
    std::size_t verified = 0;
    for (const auto& f : unique) {
      names.push_back(fsx::content_name(f.seed));
      fsx::write_atomic(config.security_dir() / "seeds" / names.back(), f.seed);
      verified += f.verified ? 1 : 0;
    }
    fsx::write_atomic(config.security_dir() / "findings.json", secpred::findings_to_json(unique, names));
    fsx::write_atomic(config.security_dir() / "analyzed", analyzed);

    std::string summary = fmt::format("{} seeds analyzed, {} findings, {} verified\n", picks.size(), unique.size(), verified);
    for (std::size_t i = 0; i < unique.size(); ++i) {
      const auto& f = unique[i];
      if (!f.verified) continue;
      summary += fmt::format("{} at {} seed={}", secpred::finding_kind_name(f.kind), f.source_loc.str(), names[i]);
      if (f.sink_loc) summary += " sink=" + f.sink_loc->str();
      if (f.signedness) summary += fmt::format(" {}", secpred::signedness_name(*f.signedness));
      summary += "\n";
    }
    fsx::write_atomic(config.security_dir() / "summary", summary);
    out << summary;
    return kOk;
  });
}

int cmd_triage(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, "triage", [&] {
    std::vector<fs::path> crash_dirs;
    std::error_code ec;
    if (fs::is_directory(config.run_dir(), ec)) {
      for (const auto& e : fs::directory_iterator(config.run_dir(), ec)) {
        if (fs::is_directory(e.path() / "crashes", ec)) crash_dirs.push_back(e.path() / "crashes");
      }
    }
    if (crash_dirs.empty()) {
      out << "nothing to triage\n";
      return kOk;
    }
    std::sort(crash_dirs.begin(), crash_dirs.end());
    std::vector<fs::path> seeds;
    for (const auto& d : crash_dirs) {
      auto files = fsx::list_files(d);
      seeds.insert(seeds.end(), files.begin(), files.end());
    }
    const auto program = load_target(config);
    claim_stage_dir(config.triage_dir());
    triage::TriageOptions options;
    options.threshold = config.triage_threshold;
    options.sanitizer = config.triage_sanitizer;
    options.skip_clustering = config.triage_skip_clustering;
    options.skip_rerun = config.triage_skip_rerun;
    options.jobs = config.campaign.jobs;
    options.step_budget = config.campaign.step_budget;
    const auto result = triage::run_triage(program, seeds, config.triage_dir(), options);
    out << triage::render(result.clusters);
    return kOk;
  });
}

int cmd_cov_report(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, "cov-report", [&] {
    const auto program = load_target(config);
    std::vector<fs::path> files;
    for (const auto& d : coverage_corpus(config)) {
      auto f = fsx::list_files(d);
      files.insert(files.end(), f.begin(), f.end());
    }
    if (files.empty()) {
      err << "hfz cov-report: empty corpus\n";
      return kError;
    }

    std::vector<vm::ExecResult> results(files.size());
    std::vector<bool> ok(files.size(), false);
    parallel_for(files.size(), config.campaign.jobs, [&](std::size_t i) {
      Bytes data;
      try {
        data = fsx::read_file(files[i]);
      } catch (const std::exception&) {
        return;
      }
      results[i] = vm::execute(program, data, {config.campaign.step_budget, false, true});
      ok[i] = true;
    });

    vm::CoverageBitmap edges;
    std::vector<bool> executed(program.size(), false);
    std::size_t seeds = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
      if (!ok[i]) {
        err << "hfz cov-report: skipping unreadable " << files[i].string() << "\n";
        continue;
      }
      ++seeds;
      edges.merge(results[i].coverage);
      for (std::size_t k = 0; k < program.size(); ++k)
        if (results[i].executed[k]) executed[k] = true;
    }

    std::set<std::uint32_t> covered_lines;
    std::size_t blocks_hit = 0;
    for (std::size_t k = 0; k < program.size(); ++k) {
      if (!executed[k]) continue;
      covered_lines.insert(program.at(k).loc.line);
      if (program.block_start[k]) ++blocks_hit;
    }
    const auto all_lines = program.instruction_lines();
    std::vector<std::uint32_t> hit, missed;
    for (auto l : all_lines) (covered_lines.count(l) ? hit : missed).push_back(l);

    const std::size_t edge_count = edges.count_nonzero();
    const std::string report = fmt::format(
        "seeds {}\n"
        "edges {}\n"
        "blocks {}/{} {:.2f}%\n"
        "lines {}/{} {:.2f}%\n",
        seeds, edge_count, blocks_hit, program.blocks.size(), percent(blocks_hit, program.blocks.size()), hit.size(),
        all_lines.size(), percent(hit.size(), all_lines.size()));

    std::string exported = fmt::format("file {}\n", program.file);
    exported += "covered " + join_lines(hit) + "\n";
    exported += "uncovered " + join_lines(missed) + "\n";
    exported += fmt::format("lines {} {} {:.2f}\n", hit.size(), all_lines.size(), percent(hit.size(), all_lines.size()));
    exported += "end\n";
    exported += fmt::format("total lines {} {} {:.2f}\n", hit.size(), all_lines.size(),
                            percent(hit.size(), all_lines.size()));
    exported += fmt::format("total blocks {} {} {:.2f}\n", blocks_hit, program.blocks.size(),
                            percent(blocks_hit, program.blocks.size()));
    exported += fmt::format("total edges {}\n", edge_count);
    const auto path = config.coverage_path();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fsx::write_atomic(path, exported);

    out << report;
    return kOk;
  });
}

}  // namespace hfz::cli
