#include "hfz/triage/triage.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "hfz/common/fs.hpp"
#include "hfz/common/hash.hpp"
#include "hfz/common/log.hpp"
#include "hfz/common/parallel.hpp"
#include "hfz/concolic/engine.hpp"
#include "json.hpp"

namespace hfz::triage {

using json = nlohmann::ordered_json;

std::string_view severity_name(Severity s) {
  switch (s) {
    case Severity::NotExploitable: return "NOT_EXPLOITABLE";
    case Severity::ProbablyExploitable: return "PROBABLY_EXPLOITABLE";
    case Severity::Exploitable: return "EXPLOITABLE";
  }
  return "?";
}

std::optional<Severity> severity_from_name(std::string_view name) {
  for (auto s : {Severity::NotExploitable, Severity::ProbablyExploitable, Severity::Exploitable}) {
    if (severity_name(s) == name) return s;
  }
  return std::nullopt;
}

namespace {

constexpr std::uint64_t kNearNull = 64 * 1024;

}  // namespace

Severity estimate_severity(const CrashReport& r) {
  using vm::CrashKind;
  switch (r.crash_kind) {
    case CrashKind::OobHeapWrite:
    case CrashKind::OobStackWrite:
    case CrashKind::DoubleFree:
      return Severity::Exploitable;
    case CrashKind::StackExhaustion:
    case CrashKind::OobStackRead:
      return Severity::ProbablyExploitable;
    case CrashKind::UnmappedAccess:
      if (r.crash_address < kNearNull) return Severity::NotExploitable;
      // Without replay information assume the address could be steered.
      return r.controlled_address.value_or(true) ? Severity::ProbablyExploitable : Severity::NotExploitable;
    case CrashKind::NullDeref:
    case CrashKind::DivByZero:
    case CrashKind::OobHeapRead:
      return Severity::NotExploitable;
  }
  return Severity::NotExploitable;
}

std::uint64_t frame_hash(const vm::Frame& f) { return Fnv1a{}.str(f.function).str(f.file).u64(f.line).value(); }

std::uint64_t trace_hash(std::span<const vm::Frame> trace) {
  Fnv1a h;
  for (const auto& f : trace) h.u64(frame_hash(f));
  return h.u64(trace.size()).value();
}

std::optional<CrashReport> generate_report(const vm::Program& program, std::span<const std::uint8_t> seed,
                                           const std::string& seed_path, const ReportOptions& options) {
  const auto r = vm::execute(program, seed, {options.step_budget, options.sanitizer, false});
  if (!r.crashed()) {
    log::debug("no crash replaying " + seed_path);
    return std::nullopt;
  }
  CrashReport rep;
  rep.cmdline = "hfz replay " + program.file + " " + seed_path;
  rep.crash_kind = r.crash_kind;
  rep.crash_loc = r.crash_loc;
  rep.stack_trace = r.stack_trace;
  rep.registers = r.regs;
  rep.flags = r.flags;
  rep.seed_path = seed_path;
  rep.crash_address = r.crash_address;
  rep.is_write = r.crash_is_write;
  rep.diagnostics = r.diagnostics;
  const auto line = r.crash_loc.line;
  for (std::uint32_t l = line > 2 ? line - 2 : 1; l <= line + 2; ++l) {
    if (l == 0 || l > program.source_lines.size()) continue;
    rep.source_excerpt.emplace_back(l, program.source_lines[l - 1]);
  }
  if (options.probe_control && r.crash_kind == vm::CrashKind::UnmappedAccess && r.crash_address >= kNearNull) {
    concolic::InversionCache cache;
    concolic::Modes modes;
    modes.invert_branches = false;
    modes.fuzz_addresses = false;
    concolic::RunOptions ro;
    ro.step_budget = options.step_budget;
    const auto replay = concolic::run_concolic(program, seed, cache, {}, modes, ro);
    if (replay.crash_address_deps) rep.controlled_address = !replay.crash_address_deps->empty();
  }
  rep.severity = estimate_severity(rep);
  Fnv1a h;
  h.u64(static_cast<std::uint64_t>(rep.crash_kind)).u64(trace_hash(rep.stack_trace)).u64(fnv1a(seed));
  rep.id = to_hex(h.value());
  return rep;
}

std::vector<CrashReport> dedup(std::vector<CrashReport> reports) {
  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::set<std::uint64_t> seen;
  std::vector<CrashReport> out;
  for (auto& r : reports) {
    if (seen.insert(trace_hash(r.stack_trace)).second) out.push_back(std::move(r));
  }
  return out;
}

double trace_distance(std::span<const vm::Frame> a, std::span<const vm::Frame> b) {
  const auto n = a.size(), m = b.size();
  if (n == 0 && m == 0) return 0.0;
  auto same = [](const vm::Frame& x, const vm::Frame& y) { return x.function == y.function && x.line == y.line; };
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (same(a[i - 1], b[j - 1]) ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

namespace {

Cluster make_cluster(const std::vector<CrashReport>& reports, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return reports[a].id < reports[b].id; });
  Cluster c;
  for (const auto i : idx) {
    c.members.push_back(reports[i].id);
    c.severity = std::max(c.severity, reports[i].severity);
  }
  const auto& rep = reports[idx.front()];
  c.representative = rep.id;
  c.crash_line = rep.crash_loc;
  c.size = idx.size();
  c.crash_kind = rep.crash_kind;
  c.representative_seed = rep.seed_path;
  return c;
}

void sort_clusters(std::vector<Cluster>& cs) {
  std::stable_sort(cs.begin(), cs.end(), [](const Cluster& a, const Cluster& b) {
    if (a.size != b.size) return a.size > b.size;
    return a.representative < b.representative;
  });
}

}  // namespace

std::vector<Cluster> cluster(const std::vector<CrashReport>& reports, double threshold) {
  const auto n = reports.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = trace_distance(reports[i].stack_trace, reports[j].stack_trace);
  }
  std::vector<std::vector<std::size_t>> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[i] = {i};
  // Complete linkage: distance between groups is the largest pairwise one.
  auto linkage = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double worst = 0;
    for (const auto i : a) {
      for (const auto j : b) worst = std::max(worst, d[i][j]);
    }
    return worst;
  };
  constexpr double kEps = 1e-12;
  while (groups.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      for (std::size_t j = i + 1; j < groups.size(); ++j) {
        const double l = linkage(groups[i], groups[j]);
        if (l < best - kEps) {
          best = l;
          bi = i;
          bj = j;
        }
      }
    }
    if (best > threshold + kEps) break;
    groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  std::vector<Cluster> out;
  for (auto& g : groups) out.push_back(make_cluster(reports, g));
  sort_clusters(out);
  return out;
}

std::vector<Cluster> singleton_clusters(const std::vector<CrashReport>& reports) {
  std::vector<Cluster> out;
  for (std::size_t i = 0; i < reports.size(); ++i) out.push_back(make_cluster(reports, {i}));
  sort_clusters(out);
  return out;
}

std::string render(const CrashReport& r) {
  std::ostringstream out;
  out << "Crash report " << r.id << "\n"
      << "  kind:     " << vm::crash_kind_name(r.crash_kind) << (r.is_write ? " (write)" : "") << "\n"
      << "  severity: " << severity_name(r.severity) << "\n"
      << "  location: " << r.crash_loc.str() << "\n"
      << "  address:  " << to_hex(r.crash_address) << "\n"
      << "  seed:     " << r.seed_path << "\n"
      << "  command:  " << r.cmdline << "\n"
      << "  stack:\n";
  for (std::size_t i = 0; i < r.stack_trace.size(); ++i) {
    const auto& f = r.stack_trace[i];
    out << "    #" << i << " " << f.function << " at " << f.file << ":" << f.line << "\n";
  }
  out << "  registers:";
  for (int i = 0; i < vm::kNumRegs; ++i) out << (i % 4 == 0 ? "\n   " : "") << " r" << i << "=" << to_hex(r.registers[i]);
  out << "\n  flags: CF=" << r.flags.cf << " OF=" << r.flags.of << " ZF=" << r.flags.zf << " SF=" << r.flags.sf << "\n";
  if (!r.source_excerpt.empty()) {
    out << "  source:\n";
    for (const auto& [line, text] : r.source_excerpt) {
      out << (line == r.crash_loc.line ? "  > " : "    ") << line << " | " << text << "\n";
    }
  }
  return out.str();
}

std::string render(const std::vector<Cluster>& clusters) {
  std::ostringstream out;
  std::size_t total = 0;
  for (const auto& c : clusters) total += c.size;
  out << clusters.size() << (clusters.size() == 1 ? " cluster" : " clusters") << ", " << total
      << (total == 1 ? " crash" : " crashes") << "\n";
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const auto& c = clusters[i];
    out << "cl" << i + 1 << ": size=" << c.size << " line=" << c.crash_line.str() << " seed=" << c.representative_seed
        << " kind=" << vm::crash_kind_name(c.crash_kind) << " severity=" << severity_name(c.severity) << "\n";
  }
  return out.str();
}

std::string report_to_json(const CrashReport& r) {
  json j;
  j["id"] = r.id;
  j["cmdline"] = r.cmdline;
  j["crash_kind"] = vm::crash_kind_name(r.crash_kind);
  j["crash_loc"] = {{"file", r.crash_loc.file}, {"line", r.crash_loc.line}, {"column", r.crash_loc.column}};
  j["stack_trace"] = json::array();
  for (const auto& f : r.stack_trace) j["stack_trace"].push_back({{"function", f.function}, {"file", f.file}, {"line", f.line}});
  j["registers"] = json::array();
  for (auto v : r.registers) j["registers"].push_back(to_hex(v));
  j["flags"] = {{"cf", r.flags.cf}, {"of", r.flags.of}, {"zf", r.flags.zf}, {"sf", r.flags.sf}};
  j["source_excerpt"] = json::array();
  for (const auto& [line, text] : r.source_excerpt) j["source_excerpt"].push_back({{"line", line}, {"text", text}});
  j["seed_path"] = r.seed_path;
  j["severity"] = severity_name(r.severity);
  j["crash_address"] = to_hex(r.crash_address);
  j["is_write"] = r.is_write;
  if (r.controlled_address) j["controlled_address"] = *r.controlled_address;
  j["diagnostics"] = json::array();
  for (const auto& d : r.diagnostics) {
    j["diagnostics"].push_back({{"kind", vm::diag_kind_name(d.kind)}, {"file", d.loc.file}, {"line", d.loc.line},
                                {"column", d.loc.column}, {"index", d.instr_index}});
  }
  return j.dump(2) + "\n";
}

namespace {

std::uint64_t parse_hex(const std::string& s) { return std::stoull(s, nullptr, 16); }

std::optional<vm::DiagKind> diag_from_name(std::string_view n) {
  for (auto k : {vm::DiagKind::IntOverflow, vm::DiagKind::OobRead, vm::DiagKind::OobWrite, vm::DiagKind::NullDeref,
                 vm::DiagKind::DivByZero}) {
    if (vm::diag_kind_name(k) == n) return k;
  }
  return std::nullopt;
}

}  // namespace

CrashReport report_from_json(std::string_view text) {
  const auto j = json::parse(text);
  CrashReport r;
  r.id = j.at("id").get<std::string>();
  r.cmdline = j.value("cmdline", "");
  const auto kind = vm::crash_kind_from_name(j.at("crash_kind").get<std::string>());
  if (!kind) throw std::runtime_error("unknown crash kind in report " + r.id);
  r.crash_kind = *kind;
  const auto& loc = j.at("crash_loc");
  r.crash_loc = {loc.at("file").get<std::string>(), loc.at("line").get<std::uint32_t>(),
                 loc.at("column").get<std::uint32_t>()};
  for (const auto& f : j.at("stack_trace")) {
    r.stack_trace.push_back({f.at("function").get<std::string>(), f.at("file").get<std::string>(),
                             f.at("line").get<std::uint32_t>()});
  }
  if (j.contains("registers")) {
    for (std::size_t i = 0; i < r.registers.size() && i < j["registers"].size(); ++i) {
      r.registers[i] = parse_hex(j["registers"][i].get<std::string>());
    }
  }
  if (j.contains("flags")) {
    const auto& f = j["flags"];
    r.flags = {f.value("cf", false), f.value("of", false), f.value("zf", false), f.value("sf", false)};
  }
  if (j.contains("source_excerpt")) {
    for (const auto& e : j["source_excerpt"]) {
      r.source_excerpt.emplace_back(e.at("line").get<std::uint32_t>(), e.at("text").get<std::string>());
    }
  }
  r.seed_path = j.value("seed_path", "");
  r.crash_address = j.contains("crash_address") ? parse_hex(j["crash_address"].get<std::string>()) : 0;
  r.is_write = j.value("is_write", false);
  if (j.contains("controlled_address")) r.controlled_address = j["controlled_address"].get<bool>();
  const auto sev = severity_from_name(j.value("severity", ""));
  r.severity = sev ? *sev : estimate_severity(r);
  if (j.contains("diagnostics")) {
    for (const auto& d : j["diagnostics"]) {
      const auto k = diag_from_name(d.at("kind").get<std::string>());
      if (!k) continue;
      r.diagnostics.push_back({*k,
                               {d.at("file").get<std::string>(), d.at("line").get<std::uint32_t>(),
                                d.at("column").get<std::uint32_t>()},
                               d.value("index", std::size_t{0})});
    }
  }
  return r;
}

TriageResult run_triage(const vm::Program& program, const std::vector<std::filesystem::path>& seeds,
                        const std::filesystem::path& out_dir, const TriageOptions& options) {
  namespace fs = std::filesystem;
  TriageResult result;
  result.seeds = seeds.size();
  std::vector<std::optional<CrashReport>> generated(seeds.size());
  const ReportOptions ro{options.sanitizer, options.step_budget, options.probe_control};
  parallel_for(seeds.size(), options.jobs, [&](std::size_t i) {
    try {
      generated[i] = generate_report(program, fsx::read_file(seeds[i]), seeds[i].filename().string(), ro);
    } catch (const std::exception& e) {
      log::warn("cannot replay " + seeds[i].string() + ": " + e.what());
    }
  });
  std::vector<CrashReport> all;
  for (auto& g : generated) {
    if (g) all.push_back(std::move(*g));
  }
  result.total_reports = all.size();
  fs::create_directories(out_dir / "reports");
  for (const auto& r : all) fsx::write_atomic(out_dir / "reports" / (r.id + ".json"), report_to_json(r));

  result.reports = dedup(std::move(all));
  result.clusters =
      options.skip_clustering ? singleton_clusters(result.reports) : cluster(result.reports, options.threshold);

  std::map<std::string, const CrashReport*> by_id;
  for (const auto& r : result.reports) by_id[r.id] = &r;
  if (!options.skip_rerun) {
    for (const auto& c : result.clusters) {
      const auto* rep = by_id.at(c.representative);
      const auto seed_it = std::find_if(seeds.begin(), seeds.end(),
                                        [&](const fs::path& p) { return p.filename() == rep->seed_path; });
      if (seed_it == seeds.end()) continue;
      const auto plain = vm::execute(program, fsx::read_file(*seed_it), {options.step_budget, false, false});
      result.reproduces[c.representative] = plain.crashed() && plain.crash_kind == rep->crash_kind;
    }
  }

  std::string summary = render(result.clusters);
  for (std::size_t i = 0; i < result.clusters.size(); ++i) {
    const auto& c = result.clusters[i];
    const auto dir = out_dir / ("cl" + std::to_string(i + 1));
    fs::create_directories(dir);
    std::string cs = render(std::vector<Cluster>{c});
    for (const auto& id : c.members) {
      fsx::write_atomic(dir / (id + ".json"), report_to_json(*by_id.at(id)));
      cs += "  " + id + "\n";
    }
    if (auto it = result.reproduces.find(c.representative); it != result.reproduces.end()) {
      const auto line = std::string("reproduces without sanitizer: ") + (it->second ? "yes" : "no") + "\n";
      cs += line;
      summary += "  cl" + std::to_string(i + 1) + " " + line;
    }
    cs += "\n" + render(*by_id.at(c.representative));
    fsx::write_atomic(dir / "summary", cs);
  }
  fsx::write_atomic(out_dir / "summary", summary);
  return result;
}

}  // namespace hfz::triage
