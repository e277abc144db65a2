#include "hfz/orch/campaign.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <memory>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "hfz/cmin/cmin.hpp"
#include "hfz/common/fs.hpp"
#include "hfz/common/hash.hpp"
#include "hfz/common/log.hpp"
#include "hfz/orch/fuzzer.hpp"
#include "hfz/vm/parser.hpp"

namespace hfz::orch {

std::string_view mode_name(Mode m) { return m == Mode::AflStyle ? "afl_style" : "libfuzzer_style"; }

std::optional<Mode> mode_from_name(std::string_view name) {
  if (name == "afl_style" || name == "afl") return Mode::AflStyle;
  if (name == "libfuzzer_style" || name == "libfuzzer") return Mode::LibFuzzerStyle;
  return std::nullopt;
}

std::string_view seed_fate_name(SeedFate f) {
  switch (f) {
    case SeedFate::Queue: return "queue";
    case SeedFate::Crash: return "crash";
    case SeedFate::Hang: return "hang";
    case SeedFate::Discard: return "discard";
  }
  return "?";
}

std::size_t GlobalBitmap::gain(const vm::ExecResult& result) const {
  std::size_t n = 0;
  for (const auto c : result.edges) n += result.coverage[c] > map_[c] ? 1 : 0;
  return n;
}

namespace {

std::string id_name(std::uint64_t id, std::string_view tags) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "id:%06llu", static_cast<unsigned long long>(id));
  std::string s = buf;
  if (!tags.empty()) s += "," + std::string(tags);
  return s;
}

void move_file(const fs::path& from, const fs::path& to) {
  fs::create_directories(to.parent_path());
  fs::rename(from, to);
}

}  // namespace

Evaluation evaluate_concolic_seed(const fs::path& raw_path, GlobalBitmap& global, const vm::Program& program,
                                  const WorkerDirs& concolic, std::uint64_t& next_id, std::uint64_t step_budget) {
  Evaluation ev;
  const auto data = fsx::read_file(raw_path);
  ev.result = vm::execute(program, data, {step_budget, false, false});
  const auto src = "src:" + raw_path.filename().string();
  if (ev.result.crashed()) {
    ev.fate = SeedFate::Crash;
    ev.destination = concolic.crashes() /
                     id_name(next_id++, "kind:" + std::string(vm::crash_kind_name(ev.result.crash_kind)) + "," + src);
  } else if (ev.result.hung()) {
    ev.fate = SeedFate::Hang;
    ev.destination = concolic.hangs() / id_name(next_id++, src);
  } else {
    vm::CoverageBitmap before = global.bitmap();
    std::size_t fresh = 0;
    for (const auto c : ev.result.edges) fresh += before[c] == 0 ? 1 : 0;
    if (global.merge(ev.result)) {
      ev.fate = SeedFate::Queue;
      ev.destination = concolic.queue() / id_name(next_id++, fresh > 0 ? src + ",+cov" : src);
    }
  }
  if (ev.fate == SeedFate::Discard) {
    fs::remove(raw_path);
  } else {
    move_file(raw_path, ev.destination);
  }
  return ev;
}

std::size_t count_contribution(Mode mode, const SessionDirs& dirs) {
  if (mode == Mode::LibFuzzerStyle) {
    std::ifstream in(dirs.reload_ledger());
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
    return n;
  }
  std::size_t n = 0;
  for (const auto& p : fsx::list_files(dirs.fuzzer(0).queue())) n += has_tag(p.filename().string(), "sync:concolic");
  return n;
}

std::string CampaignSummary::to_text() const {
  std::ostringstream out;
  for (const auto& [origin, n] : seeds_by_origin) out << "seeds." << origin << " = " << n << "\n";
  out << "initial_total = " << initial_total << "\n"
      << "unique_crashes = " << unique_crashes << "\n"
      << "crash_files = " << crash_files << "\n"
      << "hangs = " << hangs << "\n"
      << "imported_from_concolic = " << imported_from_concolic << "\n"
      << "concolic_launches = " << concolic_launches << "\n"
      << "sym_pointer_launches = " << sym_pointer_launches << "\n"
      << "concolic_seeds = " << concolic_seeds << "\n"
      << "fuzzer_execs = " << fuzzer_execs << "\n"
      << "epochs = " << epochs << "\n"
      << "stop_reason = " << stop_reason << "\n"
      << "first_crash_origin = " << first_crash_origin.value_or("none") << "\n";
  return out.str();
}

namespace {

using SteadyClock = std::chrono::steady_clock;

struct Candidate {
  SeedRecord record;
  fs::path file;
};

class Session {
 public:
  Session(const CampaignConfig& config, const CampaignHooks& hooks) : config_(config), hooks_(hooks) {}
  CampaignSummary run();

 private:
  void prepare();
  void seed_initial();
  void epoch();
  void absorb_concolic(std::size_t worker, std::size_t launch, concolic::RunResult& result);
  void poll_fuzzers();
  void note_crash(const vm::ExecResult& r, const char* origin);
  std::optional<std::string> should_stop() const;
  SeedRecord evaluate_record(const std::string& name, const Bytes& data, Origin origin, std::uint64_t t);
  std::uint64_t total_execs() const;
  double since(SteadyClock::time_point t) const {
    return std::chrono::duration<double>(SteadyClock::now() - t).count();
  }

  const CampaignConfig& config_;
  const CampaignHooks& hooks_;
  vm::Program program_;
  SessionDirs dirs_;
  GlobalBitmap global_;
  std::vector<std::unique_ptr<HavocFuzzer>> fuzzers_;
  std::vector<AdapterState> poll_state_;
  std::vector<concolic::InversionCache> caches_;
  std::vector<Candidate> pool_;
  std::unordered_set<std::uint64_t> processed_;  // content hashes fed to the concolic engine
  std::set<std::size_t> reached_functions_;
  std::set<std::pair<int, std::string>> crash_keys_;
  std::uint64_t concolic_next_id_ = 0;
  std::size_t launches_ = 0;
  std::atomic<bool> cancel_{false};
  SteadyClock::time_point started_, last_gain_;
  CampaignSummary summary_;
};

std::uint64_t Session::total_execs() const {
  std::uint64_t n = 0;
  for (const auto& f : fuzzers_) n += f->execs();
  return n;
}

SeedRecord Session::evaluate_record(const std::string& name, const Bytes& data, Origin origin, std::uint64_t t) {
  SeedRecord rec;
  rec.path = name;
  rec.bytes_len = std::max<std::uint64_t>(1, data.size());
  rec.t_creation = t;
  rec.origin = origin;
  rec.afl_id = parse_afl_id(name);
  auto r = vm::execute(program_, data, {config_.step_budget, false, true});
  rec.features_gain = global_.gain(r);
  for (const auto& [fname, entry] : program_.functions) {
    if (entry < r.executed.size() && r.executed[entry] && reached_functions_.insert(entry).second) {
      rec.new_function = true;
    }
  }
  return rec;
}

void Session::note_crash(const vm::ExecResult& r, const char* origin) {
  const std::string top = r.stack_trace.empty() ? "" : r.stack_trace.front().function + "@" +
                                                          std::to_string(r.stack_trace.front().line);
  if (crash_keys_.insert({static_cast<int>(r.crash_kind), top}).second && !summary_.first_crash_origin) {
    summary_.first_crash_origin = origin;
  }
}

void Session::prepare() {
  program_ = vm::load_program(config_.target);
  dirs_.root = config_.output;
  std::error_code ec;
  if (fs::exists(dirs_.root, ec) && !fs::is_empty(dirs_.root, ec)) {
    throw std::runtime_error("output directory " + dirs_.root.string() + " already exists and is not empty");
  }
  fs::create_directories(dirs_.root);
  dirs_.concolic().create();
  fs::create_directories(dirs_.raw());
}

void Session::seed_initial() {
  std::size_t total = 0;
  for (const auto& d : config_.corpus_dirs) total += fsx::list_files(d).size();
  summary_.initial_total = total;
  if (total == 0) {
    fs::create_directories(dirs_.initial());
    fsx::write_atomic(dirs_.initial() / "empty", Bytes{});
  } else {
    cmin::minimize_directory(program_, config_.corpus_dirs, dirs_.initial(), config_.jobs, config_.step_budget);
  }
  const auto initial = fsx::list_files(dirs_.initial());
  summary_.seeds_by_origin["initial"] = initial.size();
  for (const auto& p : initial) {
    const auto data = fsx::read_file(p);
    auto rec = evaluate_record(p.filename().string(), data, Origin::Initial, 0);
    auto r = vm::execute(program_, data, {config_.step_budget, false, false});
    rec.new_cov = global_.merge(r);
    pool_.push_back({rec, p});
  }
  for (unsigned i = 0; i < config_.fuzzer_workers; ++i) {
    fuzzers_.push_back(std::make_unique<HavocFuzzer>(
        program_, dirs_.fuzzer(i), FuzzerOptions{config_.seed + i, config_.step_budget}));
    for (const auto& p : initial) fuzzers_.back()->add_seed(fsx::read_file(p), "orig:" + p.filename().string(), true);
    fuzzers_.back()->write_stats();
  }
  poll_state_.resize(fuzzers_.size());
  caches_.resize(config_.concolic_workers);
}

void Session::absorb_concolic(std::size_t worker, std::size_t launch, concolic::RunResult& result) {
  if (result.crashed()) note_crash(result.exec, "concolic");
  std::vector<fs::path> raw;
  for (std::size_t k = 0; k < result.new_seeds.size(); ++k) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "w%zu-l%06zu-%04zu", worker, launch, k);
    const auto p = dirs_.raw() / buf;
    fsx::write_atomic(p, result.new_seeds[k]);
    raw.push_back(p);
  }
  summary_.concolic_seeds += raw.size();
  for (const auto& p : raw) {
    auto ev = evaluate_concolic_seed(p, global_, program_, dirs_.concolic(), concolic_next_id_, config_.step_budget);
    if (ev.fate == SeedFate::Crash) note_crash(ev.result, "concolic");
    if (ev.fate == SeedFate::Queue) {
      last_gain_ = SteadyClock::now();
      const auto name = ev.destination.filename().string();
      auto rec = evaluate_record(name, fsx::read_file(ev.destination), Origin::Concolic, total_execs());
      rec.new_cov = true;
      pool_.push_back({rec, ev.destination});
    }
  }
}

void Session::poll_fuzzers() {
  for (std::size_t i = 0; i < fuzzers_.size(); ++i) {
    const auto wd = dirs_.fuzzer(i);
    auto delta = adapter_poll(wd.root, poll_state_[i]);
    for (const auto& e : delta.queue) {
      if (e.new_cov) last_gain_ = SteadyClock::now();
      if (has_tag(e.name, "sync:concolic")) continue;
      bool orig = false;
      for (const auto& t : name_tags(e.name)) orig = orig || t.starts_with("orig:");
      if (orig) continue;
      std::uint64_t t = 0;
      for (const auto& tag : name_tags(e.name)) {
        if (tag.starts_with("execs:")) t = std::stoull(tag.substr(6));
      }
      const auto file = wd.queue() / e.name;
      auto rec = evaluate_record(e.name, fsx::read_file(file), Origin::Fuzzer, t);
      rec.path = wd.root.filename().string() + "/" + e.name;
      rec.new_cov = e.new_cov;
      pool_.push_back({rec, file});
      ++summary_.seeds_by_origin["fuzzer"];
    }
    for (const auto& c : delta.crashes) {
      auto r = vm::execute(program_, fsx::read_file(wd.crashes() / c), {config_.step_budget, false, false});
      if (r.crashed()) note_crash(r, "fuzzer");
    }
    summary_.hangs += delta.hangs.size();
  }
}

std::optional<std::string> Session::should_stop() const {
  const auto& stop = config_.stop;
  if (stop.max_crashes > 0 && crash_keys_.size() >= stop.max_crashes) return "max_crashes";
  if (stop.session_timeout > 0 && since(started_) >= stop.session_timeout) return "session_timeout";
  if (stop.exit_on_time > 0 && since(last_gain_) >= stop.exit_on_time) return "exit_on_time";
  if (stop.max_execs > 0 && total_execs() >= stop.max_execs) return "max_execs";
  if (stop.max_epochs > 0 && summary_.epochs >= stop.max_epochs) return "max_epochs";
  return std::nullopt;
}

void Session::epoch() {
  ++summary_.epochs;
  // Concolic inputs are chosen from what was known when the epoch began.
  std::vector<std::size_t> picks;
  {
    std::vector<std::size_t> order(pool_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto before = config_.mode == Mode::AflStyle ? afl_before : libfuzzer_before;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return before(pool_[a].record, pool_[b].record); });
    for (const auto i : order) {
      if (picks.size() >= caches_.size()) break;
      const auto h = fnv1a(fsx::read_file(pool_[i].file));
      if (processed_.insert(h).second) picks.push_back(i);
    }
  }
  std::vector<Bytes> inputs;
  for (const auto i : picks) inputs.push_back(fsx::read_file(pool_[i].file));
  std::vector<std::size_t> launch_ids;
  for (std::size_t w = 0; w < picks.size(); ++w) {
    const auto launch = ++launches_;
    launch_ids.push_back(launch);
    const bool full = sym_pointer_launch(launch, config_.sym_pointer_period);
    summary_.sym_pointer_launches += full ? 1 : 0;
    if (hooks_.on_launch) hooks_.on_launch(launch, full);
  }
  summary_.concolic_launches = launches_;

  std::vector<concolic::RunResult> results(picks.size());
  {
    std::vector<std::jthread> threads;
    std::uint64_t execs = config_.execs_per_epoch;
    if (config_.stop.max_execs > 0 && !fuzzers_.empty()) {
      const auto left = config_.stop.max_execs - std::min(config_.stop.max_execs, total_execs());
      execs = std::min<std::uint64_t>(execs, (left + fuzzers_.size() - 1) / fuzzers_.size());
    }
    for (auto& f : fuzzers_) {
      threads.emplace_back([&, execs, fz = f.get()] { fz->run(execs, &cancel_); });
    }
    for (std::size_t w = 0; w < picks.size(); ++w) {
      threads.emplace_back([&, w] {
        concolic::Modes modes;
        modes.sym_pointers = sym_pointer_launch(launch_ids[w], config_.sym_pointer_period);
        concolic::RunOptions opts;
        opts.address = config_.address;
        opts.step_budget = config_.step_budget;
        opts.rng_seed = config_.seed + launch_ids[w];
        opts.cancel = &cancel_;
        results[w] = concolic::run_concolic(program_, inputs[w], caches_[w], config_.budget, modes, opts);
      });
    }
    // Wake up periodically so the wall-clock stop conditions hold even while a
    // long concolic run is in flight.
    std::atomic<bool> finished{false};
    std::thread watchdog([&] {
      const auto interval = std::chrono::duration<double>(std::max(0.01, config_.poll_interval));
      while (!finished.load()) {
        std::this_thread::sleep_for(std::min<std::chrono::duration<double>>(interval, std::chrono::milliseconds(50)));
        const auto& stop = config_.stop;
        if ((stop.session_timeout > 0 && since(started_) >= stop.session_timeout) ||
            (stop.exit_on_time > 0 && since(last_gain_) >= stop.exit_on_time)) {
          cancel_ = true;
        }
      }
    });
    threads.clear();
    finished = true;
    watchdog.join();
  }

  for (std::size_t w = 0; w < picks.size(); ++w) absorb_concolic(w, launch_ids[w], results[w]);
  poll_fuzzers();
  for (std::size_t i = 0; i < fuzzers_.size(); ++i) {
    const auto adopted = fuzzers_[i]->sync_from(dirs_.concolic().queue(), "concolic");
    if (i == 0 && config_.mode == Mode::LibFuzzerStyle && !adopted.empty()) {
      std::ofstream ledger(dirs_.reload_ledger(), std::ios::app);
      for (const auto& name : adopted) ledger << name << "\n";
    }
    fuzzers_[i]->write_stats();
  }
  // Imports are queue entries too; take them in now so they are not mistaken
  // for fuzzer discoveries later.
  poll_fuzzers();
  fsx::write_atomic(dirs_.concolic().stats(),
                    format_stats({launches_, 0, static_cast<std::uint64_t>(pool_.size() - processed_.size())}));
}

CampaignSummary Session::run() {
  started_ = last_gain_ = SteadyClock::now();
  prepare();
  seed_initial();
  summary_.seeds_by_origin.try_emplace("fuzzer", 0);
  summary_.seeds_by_origin.try_emplace("concolic", 0);
  while (true) {
    if (auto reason = should_stop()) {
      summary_.stop_reason = *reason;
      break;
    }
    if (cancel_) {
      summary_.stop_reason = since(started_) >= config_.stop.session_timeout && config_.stop.session_timeout > 0
                                 ? "session_timeout"
                                 : "exit_on_time";
      break;
    }
    const bool idle = fuzzers_.empty() && std::all_of(pool_.begin(), pool_.end(), [&](const Candidate& c) {
                        return processed_.count(fnv1a(fsx::read_file(c.file))) > 0;
                      });
    if (idle) {
      summary_.stop_reason = "exhausted";
      break;
    }
    epoch();
  }
  summary_.unique_crashes = crash_keys_.size();
  for (std::size_t i = 0; i < fuzzers_.size(); ++i) summary_.crash_files += fsx::list_files(dirs_.fuzzer(i).crashes()).size();
  summary_.crash_files += fsx::list_files(dirs_.concolic().crashes()).size();
  summary_.seeds_by_origin["concolic"] = fsx::list_files(dirs_.concolic().queue()).size();
  summary_.fuzzer_execs = total_execs();
  summary_.imported_from_concolic = count_contribution(config_.mode, dirs_);
  summary_.seconds = since(started_);
  fsx::write_atomic(dirs_.summary(), summary_.to_text());
  return summary_;
}

}  // namespace

CampaignSummary run_campaign(const CampaignConfig& config, const CampaignHooks& hooks) {
  Session s(config, hooks);
  return s.run();
}

}  // namespace hfz::orch
