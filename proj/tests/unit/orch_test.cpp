#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include "hfz/common/fs.hpp"
#include "hfz/orch/campaign.hpp"
#include "hfz/orch/fuzzer.hpp"
#include "hfz/orch/protocol.hpp"
#include "hfz/orch/seed.hpp"
#include "hfz/vm/parser.hpp"
#include "support.hpp"

namespace hfz::orch {
namespace {

using test::TempDir;

// Seed names and tags

TEST(SeedNames, AflIdAndTags) {
  EXPECT_EQ(parse_afl_id("id:000042,src:3,+cov"), 42u);
  EXPECT_EQ(parse_afl_id("id:7"), 7u);
  EXPECT_FALSE(parse_afl_id("id:x"));
  EXPECT_FALSE(parse_afl_id("id:12x"));
  EXPECT_FALSE(parse_afl_id("seed"));
  EXPECT_EQ(name_tags("id:1,sync:concolic,+cov"), (std::vector<std::string>{"id:1", "sync:concolic", "+cov"}));
  EXPECT_TRUE(has_tag("id:1,+cov", "+cov"));
  EXPECT_FALSE(has_tag("id:1,+covx", "+cov"));
}

// Ranking

// Oracle keys written from the ordering rules: larger key first.
struct LfKey {
  int f, c, g;
  long double ratio;
};
bool lf_oracle(const SeedRecord& a, const SeedRecord& b) {
  const LfKey ka{a.new_function, a.new_cov, a.features_gain > 0,
                 static_cast<long double>(a.t_creation) / static_cast<long double>(a.bytes_len)};
  const LfKey kb{b.new_function, b.new_cov, b.features_gain > 0,
                 static_cast<long double>(b.t_creation) / static_cast<long double>(b.bytes_len)};
  if (ka.f != kb.f) return ka.f > kb.f;
  if (ka.c != kb.c) return ka.c > kb.c;
  if (ka.g != kb.g) return ka.g > kb.g;
  if (ka.ratio != kb.ratio) return ka.ratio > kb.ratio;
  return a.path < b.path;
}

bool afl_oracle(const SeedRecord& a, const SeedRecord& b) {
  const auto ka = std::make_tuple(int(a.new_cov), int(a.origin == Origin::Initial), -static_cast<long long>(a.bytes_len),
                                  static_cast<long long>(a.afl_id.value_or(0)));
  const auto kb = std::make_tuple(int(b.new_cov), int(b.origin == Origin::Initial), -static_cast<long long>(b.bytes_len),
                                  static_cast<long long>(b.afl_id.value_or(0)));
  if (ka != kb) return ka > kb;
  return a.path < b.path;
}

std::vector<SeedRecord> random_records(std::mt19937_64& rng, std::size_t n) {
  std::vector<SeedRecord> v;
  for (std::size_t i = 0; i < n; ++i) {
    SeedRecord r;
    r.path = "s" + std::to_string(i);
    r.bytes_len = 1 + rng() % 12;
    r.t_creation = rng() % 40;
    r.origin = static_cast<Origin>(rng() % 3);
    r.new_cov = rng() % 2;
    r.new_function = rng() % 4 == 0;
    r.features_gain = rng() % 3;
    if (rng() % 3) r.afl_id = rng() % 10;
    v.push_back(r);
  }
  return v;
}

std::vector<std::string> paths(const std::vector<SeedRecord>& v) {
  std::vector<std::string> out;
  for (auto& r : v) out.push_back(r.path);
  return out;
}

TEST(Rank, LibfuzzerExamples) {
  SeedRecord a, b;
  a.path = "a";
  b.path = "b";
  a.new_function = true;
  b.new_cov = true;
  EXPECT_EQ(paths(rank_seeds_libfuzzer_style({b, a})), (std::vector<std::string>{"a", "b"}));
  SeedRecord n, o;
  n.path = "z";
  o.path = "y";
  n.t_creation = 100;
  n.bytes_len = 4;
  o.t_creation = 50;
  o.bytes_len = 8;
  EXPECT_EQ(paths(rank_seeds_libfuzzer_style({o, n})), (std::vector<std::string>{"z", "y"}));
}

TEST(Rank, AflExamples) {
  SeedRecord cov, init;
  cov.path = "cov";
  cov.new_cov = true;
  init.path = "init";
  init.origin = Origin::Initial;
  EXPECT_EQ(paths(rank_seeds_afl_style({init, cov})), (std::vector<std::string>{"cov", "init"}));
  SeedRecord older, newer;
  older.path = "a";
  older.afl_id = 3;
  newer.path = "b";
  newer.afl_id = 9;
  EXPECT_EQ(paths(rank_seeds_afl_style({older, newer})), (std::vector<std::string>{"b", "a"}));
}

TEST(Rank, PermutationsMatchOracle) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 200; ++t) {
    auto recs = random_records(rng, 25);
    auto lf = recs, af = recs;
    std::sort(lf.begin(), lf.end(), lf_oracle);
    std::sort(af.begin(), af.end(), afl_oracle);
    for (int k = 0; k < 3; ++k) {
      std::shuffle(recs.begin(), recs.end(), rng);
      EXPECT_EQ(paths(rank_seeds_libfuzzer_style(recs)), paths(lf));
      EXPECT_EQ(paths(rank_seeds_afl_style(recs)), paths(af));
    }
  }
}

TEST(Rank, StrictTotalOrder) {
  std::mt19937_64 rng(23);
  for (auto before : {libfuzzer_before, afl_before}) {
    for (int t = 0; t < 30; ++t) {
      const auto recs = random_records(rng, 20);
      for (const auto& a : recs) {
        EXPECT_FALSE(before(a, a));
        for (const auto& b : recs) {
          if (&a != &b) {
            EXPECT_NE(before(a, b), before(b, a));
          }
          for (const auto& c : recs) {
            if (before(a, b) && before(b, c)) {
              EXPECT_TRUE(before(a, c));
            }
          }
        }
      }
    }
  }
}

TEST(Rank, RatioComparedExactly) {
  // 1/3 vs 333333333/1000000000 differ beyond double's reach at this scale.
  SeedRecord a, b;
  a.path = "b";
  a.t_creation = 1'000'000'000'000'001ULL;
  a.bytes_len = 3;
  b.path = "a";
  b.t_creation = 333'333'333'333'333ULL;
  b.bytes_len = 1;
  EXPECT_TRUE(libfuzzer_before(a, b));
}

// Protocol

TEST(Protocol, StatsRoundTrip) {
  const WorkerStats s{12, 1700000000, 3};
  const auto back = parse_stats(format_stats(s));
  ASSERT_TRUE(back);
  EXPECT_EQ(back->execs, 12u);
  EXPECT_EQ(back->last_cov_gain_unix, 1700000000u);
  EXPECT_EQ(back->pending, 3u);
}

TEST(Protocol, MalformedStats) {
  EXPECT_FALSE(parse_stats("pending = 1\n"));
  EXPECT_FALSE(parse_stats("execs = ten\n"));
  EXPECT_FALSE(parse_stats("execs 10\n"));
  EXPECT_TRUE(parse_stats("# note\nexecs=5\nextra = whatever\n"));
}

void touch(const fs::path& p, std::string_view text = "x") {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

TEST(Protocol, PollIsIncremental) {
  TempDir dir;
  WorkerDirs w{dir.path()};
  AdapterState st;
  auto r = adapter_poll(w.root, st);
  EXPECT_TRUE(r.queue.empty());
  EXPECT_TRUE(r.crashes.empty());
  EXPECT_TRUE(r.stats_stale);

  touch(w.queue() / "id:000001,+cov");
  touch(w.queue() / ".tmp-inflight");
  touch(w.crashes() / "id:000000,kind:NullDeref");
  touch(w.stats(), format_stats({40, 0, 0}));
  r = adapter_poll(w.root, st);
  ASSERT_EQ(r.queue.size(), 1u);
  EXPECT_TRUE(r.queue[0].new_cov);
  EXPECT_EQ(r.queue[0].afl_id, 1u);
  EXPECT_EQ(r.crashes.size(), 1u);
  EXPECT_EQ(r.stats.execs, 40u);
  EXPECT_FALSE(r.stats_stale);

  touch(w.stats(), "garbage");
  r = adapter_poll(w.root, st);
  EXPECT_TRUE(r.queue.empty());
  EXPECT_TRUE(r.crashes.empty());
  EXPECT_TRUE(r.stats_stale);
  EXPECT_EQ(r.stats.execs, 40u) << "stale stats are reused";
}

TEST(Protocol, ConcurrentWriterNoDuplicates) {
  TempDir dir;
  WorkerDirs w{dir.path()};
  w.create();
  constexpr int kFiles = 300;
  std::thread writer([&] {
    for (int i = 0; i < kFiles; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "id:%06d", i);
      fsx::write_atomic(w.queue() / name, "seed");
    }
  });
  AdapterState st;
  std::vector<std::string> seen;
  for (int i = 0; i < 50; ++i) {
    for (auto& e : adapter_poll(w.root, st).queue) seen.push_back(e.name);
  }
  writer.join();
  for (auto& e : adapter_poll(w.root, st).queue) seen.push_back(e.name);
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());
  EXPECT_EQ(seen.size(), static_cast<std::size_t>(kFiles));
}

// Evaluation of concolic output

TEST(Evaluate, Fates) {
  TempDir dir;
  const auto p = test::asm_program(
      "main:\n input r0, 0\n cmp r0, 1\n je one\n cmp r0, 2\n je two\n cmp r0, 3\n je spin\n exit 0\n"
      "one:\n exit 1\ntwo:\n mov r1, 0\n load r0, [r1]\n exit 2\nspin:\n jmp spin\n");
  WorkerDirs c{dir / "concolic"};
  c.create();
  GlobalBitmap global;
  std::uint64_t next = 0;
  auto eval = [&](std::uint8_t b, const char* name) {
    const auto raw = dir / name;
    fsx::write_atomic(raw, Bytes{b});
    auto ev = evaluate_concolic_seed(raw, global, p, c, next, 10'000);
    EXPECT_FALSE(fs::exists(raw));
    return ev;
  };
  auto a = eval(0, "a");
  EXPECT_EQ(a.fate, SeedFate::Queue);
  EXPECT_TRUE(has_tag(a.destination.filename().string(), "+cov"));
  EXPECT_EQ(eval(0, "dup").fate, SeedFate::Discard);
  EXPECT_EQ(eval(1, "b").fate, SeedFate::Queue);
  auto crash = eval(2, "crash");
  EXPECT_EQ(crash.fate, SeedFate::Crash);
  EXPECT_EQ(crash.destination.parent_path(), c.crashes());
  EXPECT_EQ(eval(3, "hang").fate, SeedFate::Hang);
  EXPECT_EQ(fsx::list_files(c.queue()).size(), 2u);
  EXPECT_EQ(parse_afl_id(fsx::list_files(c.queue())[0].filename().string()), 0u);
}

TEST(GlobalBitmap, Monotone) {
  const auto p = test::asm_program("main:\n input r0, 0\n cmp r0, 1\n je one\n exit 0\none:\n exit 1\n");
  GlobalBitmap g;
  std::vector<std::uint8_t> prev(g.bitmap().cells().begin(), g.bitmap().cells().end());
  for (std::uint8_t b : {0, 1, 0, 1, 1}) {
    g.merge(vm::execute(p, Bytes{b}));
    const auto cells = g.bitmap().cells();
    for (std::size_t i = 0; i < cells.size(); ++i) ASSERT_GE(cells[i], prev[i]);
    prev.assign(cells.begin(), cells.end());
  }
}

TEST(Contribution, ScriptedDirectories) {
  TempDir dir;
  SessionDirs s{dir.path()};
  EXPECT_EQ(count_contribution(Mode::AflStyle, s), 0u);
  EXPECT_EQ(count_contribution(Mode::LibFuzzerStyle, s), 0u);
  touch(s.fuzzer(0).queue() / "id:000003,sync:concolic,src:id:000000");
  touch(s.fuzzer(0).queue() / "id:000004,+cov");
  touch(s.fuzzer(1).queue() / "id:000001,sync:concolic");
  EXPECT_EQ(count_contribution(Mode::AflStyle, s), 1u);
  touch(s.reload_ledger(), "id:000000\n");
  EXPECT_EQ(count_contribution(Mode::LibFuzzerStyle, s), 1u);
}

// Fuzzer

TEST(Fuzzer, DeterministicForSeed) {
  const auto p = vm::load_program(test::target_path("branch_dense.asm"));
  TempDir a, b;
  auto run = [&](const fs::path& root) {
    HavocFuzzer f(p, WorkerDirs{root}, {9, 100'000, 256});
    f.add_seed(Bytes(40, 'A'), "orig:initial", true);
    f.run(3000);
    std::vector<std::pair<std::string, Bytes>> out;
    for (const auto& q : fsx::list_files(WorkerDirs{root}.queue())) out.emplace_back(q.filename().string(), fsx::read_file(q));
    return out;
  };
  const auto x = run(a.path()), y = run(b.path());
  EXPECT_GT(x.size(), 1u);
  EXPECT_EQ(x, y);
}

TEST(Fuzzer, SyncImportsOnlyUseful) {
  const auto p = test::asm_program("main:\n input r0, 0\n cmp r0, 0x77\n je hit\n exit 0\nhit:\n exit 1\n");
  TempDir dir;
  HavocFuzzer f(p, WorkerDirs{dir / "main"}, {});
  f.add_seed(Bytes{0}, {}, true);
  WorkerDirs other{dir / "other"};
  other.create();
  fsx::write_atomic(other.queue() / "id:000000", Bytes{1});
  fsx::write_atomic(other.queue() / "id:000001", Bytes{0x77});
  const auto got = f.sync_from(other.queue(), "other");
  EXPECT_EQ(got, (std::vector<std::string>{"id:000001"}));
  EXPECT_TRUE(f.sync_from(other.queue(), "other").empty());
  std::size_t tagged = 0;
  for (const auto& q : fsx::list_files(f.dirs().queue())) tagged += has_tag(q.filename().string(), "sync:other");
  EXPECT_EQ(tagged, 1u);
}

// Campaigns

CampaignConfig small_campaign(const fs::path& out, const char* target) {
  CampaignConfig c;
  c.target = test::target_path(target);
  c.output = out;
  c.execs_per_epoch = 500;
  c.seed = 3;
  c.budget.per_query_seconds = 2;
  c.budget.total_seconds = 10;
  c.stop.exit_on_time = 60;
  return c;
}

TEST(Campaign, SymbolicPointerCadence) {
  EXPECT_FALSE(sym_pointer_launch(24, 25));
  EXPECT_TRUE(sym_pointer_launch(25, 25));
  EXPECT_TRUE(sym_pointer_launch(50, 25));
  EXPECT_FALSE(sym_pointer_launch(0, 0));

  TempDir dir;
  auto c = small_campaign(dir / "out", "branch_dense.asm");
  c.execs_per_epoch = 20;
  c.concolic_workers = 2;
  c.stop.max_epochs = 40;
  c.sym_pointer_period = 25;
  std::vector<std::pair<std::size_t, bool>> launches;
  CampaignHooks hooks;
  hooks.on_launch = [&](std::size_t n, bool full) { launches.emplace_back(n, full); };
  const auto s = run_campaign(c, hooks);
  ASSERT_GT(launches.size(), 25u) << s.to_text();
  for (std::size_t i = 0; i < launches.size(); ++i) {
    EXPECT_EQ(launches[i].first, i + 1);
    EXPECT_EQ(launches[i].second, (i + 1) % 25 == 0);
  }
  EXPECT_EQ(s.sym_pointer_launches, launches.size() / 25);
}

TEST(Campaign, HybridSolvesMagicCheck) {
  TempDir dir;
  auto c = small_campaign(dir / "out", "magic_check.asm");
  c.stop.max_crashes = 1;
  c.stop.max_epochs = 50;
  const auto s = run_campaign(c);
  EXPECT_EQ(s.stop_reason, "max_crashes");
  EXPECT_EQ(s.unique_crashes, 1u);
  EXPECT_GE(s.imported_from_concolic, 1u);
  EXPECT_LE(s.imported_from_concolic, s.concolic_seeds);
  EXPECT_TRUE(fs::exists(dir / "out" / "summary"));
}

TEST(Campaign, LibfuzzerModeLedger) {
  TempDir dir;
  auto c = small_campaign(dir / "out", "magic_check.asm");
  c.mode = Mode::LibFuzzerStyle;
  c.stop.max_crashes = 1;
  c.stop.max_epochs = 50;
  const auto s = run_campaign(c);
  EXPECT_EQ(s.unique_crashes, 1u);
  EXPECT_GE(s.imported_from_concolic, 1u);
  EXPECT_EQ(s.imported_from_concolic, count_contribution(Mode::LibFuzzerStyle, SessionDirs{dir / "out"}));
}

TEST(Campaign, QueuePurity) {
  TempDir dir;
  auto c = small_campaign(dir / "out", "magic_check.asm");
  c.stop.max_epochs = 6;
  run_campaign(c);
  // Replaying the concolic queue in admission order, every file must add
  // coverage over the ones before it and the initial corpus.
  const auto p = vm::load_program(c.target);
  vm::CoverageBitmap seen;
  for (const auto& f : fsx::list_files(dir / "out" / "initial")) {
    auto r = vm::execute(p, fsx::read_file(f));
    seen.merge(r.coverage);
  }
  const auto queue = fsx::list_files(dir / "out" / "concolic" / "queue");
  EXPECT_FALSE(queue.empty());
  for (const auto& f : queue) {
    auto r = vm::execute(p, fsx::read_file(f));
    EXPECT_TRUE(seen.would_raise(r.coverage)) << f;
    seen.merge(r.coverage);
  }
}

TEST(Campaign, ExitOnTimeWhenSaturated) {
  TempDir dir;
  fsx::write_atomic(dir / "t.asm", "main:\n exit 0\n");
  CampaignConfig c;
  c.target = dir / "t.asm";
  c.output = dir / "out";
  c.stop.exit_on_time = 1;
  c.poll_interval = 0.2;
  c.execs_per_epoch = 200;
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = run_campaign(c);
  const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(s.stop_reason, "exit_on_time");
  EXPECT_LE(took, 1 + 1.0 + c.poll_interval);
  EXPECT_EQ(s.initial_total, 0u);
  EXPECT_EQ(s.seeds_by_origin.at("initial"), 1u) << "an empty seed is synthesized";
}

TEST(Campaign, MaxExecs) {
  TempDir dir;
  auto c = small_campaign(dir / "out", "branch_dense.asm");
  c.stop.max_execs = 1500;
  const auto s = run_campaign(c);
  EXPECT_EQ(s.stop_reason, "max_execs");
  EXPECT_GE(s.fuzzer_execs, 1500u);
  EXPECT_LT(s.fuzzer_execs, 1500u + c.execs_per_epoch);
}

TEST(Campaign, OutputCollision) {
  TempDir dir;
  touch(dir / "out" / "something");
  auto c = small_campaign(dir / "out", "magic_check.asm");
  EXPECT_THROW(run_campaign(c), std::runtime_error);
}

TEST(Campaign, BadTargetThrows) {
  TempDir dir;
  fsx::write_atomic(dir / "bad.asm", "main:\n jmp nowhere\n");
  CampaignConfig c;
  c.target = dir / "bad.asm";
  c.output = dir / "out";
  EXPECT_ANY_THROW(run_campaign(c));
}

TEST(Campaign, ModeNames) {
  EXPECT_EQ(mode_from_name("afl_style"), Mode::AflStyle);
  EXPECT_EQ(mode_from_name("libfuzzer_style"), Mode::LibFuzzerStyle);
  EXPECT_FALSE(mode_from_name("honggfuzz"));
  EXPECT_EQ(mode_name(Mode::AflStyle), "afl_style");
}

}  // namespace
}  // namespace hfz::orch
