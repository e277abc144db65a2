#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "hfz/common/fs.hpp"
#include "hfz/triage/triage.hpp"
#include "hfz/vm/parser.hpp"
#include "json.hpp"
#include "support.hpp"

namespace hfz::triage {
namespace {

using vm::CrashKind;
using vm::Frame;

std::vector<CrashReport> load_corpus() {
  std::vector<CrashReport> out;
  for (const auto& f : fsx::list_files(test::data_path("triage/reports"))) out.push_back(report_from_json(fsx::read_text(f)));
  return out;
}

nlohmann::json truth() { return nlohmann::json::parse(fsx::read_text(test::data_path("triage/truth.json"))); }

// Plain Levenshtein over frames, full matrix.
double ref_distance(const std::vector<Frame>& a, const std::vector<Frame>& b) {
  const auto n = a.size(), m = b.size();
  if (n == 0 && m == 0) return 0;
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const bool eq = a[i - 1].function == b[j - 1].function && a[i - 1].line == b[j - 1].line;
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (eq ? 0 : 1)});
    }
  }
  return static_cast<double>(d[n][m]) / static_cast<double>(std::max(n, m));
}

std::vector<Frame> random_trace(std::mt19937_64& rng) {
  static const char* fns[] = {"f", "g", "h", "k"};
  std::vector<Frame> t(rng() % 6);
  for (auto& f : t) f = {fns[rng() % 4], "x.asm", static_cast<std::uint32_t>(1 + rng() % 3)};
  return t;
}

CrashReport report(std::string id, std::vector<Frame> trace, CrashKind kind = CrashKind::DivByZero) {
  CrashReport r;
  r.id = std::move(id);
  r.stack_trace = std::move(trace);
  r.crash_kind = kind;
  r.crash_loc = {r.stack_trace.empty() ? "" : r.stack_trace[0].file, r.stack_trace.empty() ? 0 : r.stack_trace[0].line, 1};
  r.severity = estimate_severity(r);
  r.seed_path = r.id + ".seed";
  return r;
}

TEST(Severity, Table) {
  auto sev = [](CrashKind k, std::uint64_t addr = 0, std::optional<bool> ctl = std::nullopt) {
    CrashReport r;
    r.crash_kind = k;
    r.crash_address = addr;
    r.controlled_address = ctl;
    return estimate_severity(r);
  };
  EXPECT_EQ(sev(CrashKind::OobHeapWrite), Severity::Exploitable);
  EXPECT_EQ(sev(CrashKind::OobStackWrite), Severity::Exploitable);
  EXPECT_EQ(sev(CrashKind::DoubleFree), Severity::Exploitable);
  EXPECT_EQ(sev(CrashKind::StackExhaustion), Severity::ProbablyExploitable);
  EXPECT_EQ(sev(CrashKind::OobStackRead), Severity::ProbablyExploitable);
  EXPECT_EQ(sev(CrashKind::NullDeref), Severity::NotExploitable);
  EXPECT_EQ(sev(CrashKind::DivByZero), Severity::NotExploitable);
  EXPECT_EQ(sev(CrashKind::OobHeapRead), Severity::NotExploitable);
  EXPECT_EQ(sev(CrashKind::UnmappedAccess, 0x5000), Severity::NotExploitable);
  EXPECT_EQ(sev(CrashKind::UnmappedAccess, 1ULL << 40, true), Severity::ProbablyExploitable);
  EXPECT_EQ(sev(CrashKind::UnmappedAccess, 1ULL << 40, false), Severity::NotExploitable);
  EXPECT_EQ(sev(CrashKind::UnmappedAccess, 1ULL << 40), Severity::ProbablyExploitable);
  EXPECT_LT(Severity::NotExploitable, Severity::ProbablyExploitable);
  EXPECT_LT(Severity::ProbablyExploitable, Severity::Exploitable);
}

TEST(Report, DivByZeroAndBenign) {
  const auto p = test::asm_program("main:\n input r1, 0\n mov r0, 1\n div r0, r1\n exit 0\n");
  const auto r = generate_report(p, Bytes{0}, "s0");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->crash_kind, CrashKind::DivByZero);
  EXPECT_EQ(r->crash_loc.line, 4u);
  EXPECT_FALSE(r->stack_trace.empty());
  EXPECT_EQ(r->seed_path, "s0");
  EXPECT_FALSE(r->source_excerpt.empty());
  EXPECT_FALSE(generate_report(p, Bytes{1}, "s1"));
}

TEST(Report, NestedTraceCalleeFirst) {
  const auto p = test::asm_program(
      "main:\n call a\n exit 0\n"
      "a:\n call b\n ret\n"
      "b:\n call c\n ret\n"
      "c:\n mov r1, 0\n load r0, [r1]\n ret\n");
  const auto r = generate_report(p, Bytes{}, "s");
  ASSERT_TRUE(r);
  std::vector<std::string> fns;
  for (auto& f : r->stack_trace) fns.push_back(f.function);
  EXPECT_EQ(fns, (std::vector<std::string>{"c", "b", "a", "main"}));
  EXPECT_EQ(r->stack_trace[1].line, 8u);
  EXPECT_EQ(r->crash_kind, CrashKind::NullDeref);
}

TEST(Report, DeterministicId) {
  const auto p = test::asm_program("main:\n input r1, 0\n mov r0, 1\n div r0, r1\n exit 0\n");
  const auto a = generate_report(p, Bytes{0}, "x");
  const auto b = generate_report(p, Bytes{0}, "y");
  const auto c = generate_report(p, Bytes{0, 1}, "x");
  EXPECT_EQ(a->id, b->id);
  EXPECT_NE(a->id, c->id);
}

TEST(Report, ControlledAddressProbe) {
  const auto p = test::asm_program(
      "main:\n input r1, 0\n shl r1, 40\n load r0, [r1]\n exit 0\n");
  const auto r = generate_report(p, Bytes{1}, "s");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->crash_kind, CrashKind::UnmappedAccess);
  EXPECT_EQ(r->controlled_address, true);
  EXPECT_EQ(r->severity, Severity::ProbablyExploitable);
}

TEST(Json, RoundTrip) {
  const auto p = test::asm_program("main:\n mov r2, 77\n alloc r1, 8\n store [r1+8], r2\n exit 0\n");
  auto r = generate_report(p, Bytes{3}, "seed-a");
  ASSERT_TRUE(r);
  EXPECT_TRUE(r->is_write);
  EXPECT_EQ(report_from_json(report_to_json(*r)), *r);
}

TEST(Dedup, Basics) {
  const Frame f{"f", "a.asm", 3}, g{"g", "a.asm", 9}, g2{"g", "a.asm", 10};
  auto out = dedup({report("2", {f, g}), report("1", {f, g}), report("3", {f, g2})});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].id, "1");
  EXPECT_EQ(out[1].id, "3");
}

TEST(Dedup, CorpusHasNineTraces) {
  const auto corpus = load_corpus();
  ASSERT_EQ(corpus.size(), 50u);
  const auto d = dedup(corpus);
  EXPECT_EQ(d.size(), 9u);
  // Idempotent, and the surviving trace set does not depend on order.
  EXPECT_EQ(dedup(d).size(), d.size());
  auto shuffled = corpus;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(5));
  std::set<std::uint64_t> a, b;
  for (auto& r : d) a.insert(trace_hash(r.stack_trace));
  for (auto& r : dedup(shuffled)) b.insert(trace_hash(r.stack_trace));
  EXPECT_EQ(a, b);
}

TEST(Cluster, CorpusMatchesKnownPartition) {
  const auto t = truth();
  std::map<std::string, std::string> label_of;
  for (auto& [label, ids] : t["traces"].items()) {
    for (auto& id : ids) label_of[id.get<std::string>()] = label;
  }
  const auto reports = dedup(load_corpus());
  const auto cs = cluster(reports, t["threshold"].get<double>());
  std::set<std::set<std::string>> got, want;
  for (const auto& c : cs) {
    std::set<std::string> labels;
    for (const auto& id : c.members) labels.insert(label_of.at(id));
    EXPECT_EQ(labels.size(), c.members.size());
    got.insert(labels);
  }
  for (auto& group : t["clusters"]) want.insert(group.get<std::set<std::string>>());
  EXPECT_EQ(got, want);
  for (std::size_t i = 1; i < cs.size(); ++i) EXPECT_GE(cs[i - 1].size, cs[i].size);
}

TEST(Cluster, PartitionAndDiameter) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 30; ++t) {
    std::vector<CrashReport> rs;
    for (int i = 0; i < 12; ++i) {
      auto tr = random_trace(rng);
      if (tr.empty()) tr.push_back({"m", "x.asm", 1});
      rs.push_back(report("r" + std::to_string(i), tr, static_cast<CrashKind>(rng() % vm::kNumCrashKinds)));
    }
    const auto cs = cluster(rs, 0.3);
    std::map<std::string, const CrashReport*> by_id;
    for (auto& r : rs) by_id[r.id] = &r;
    std::multiset<std::string> seen;
    for (const auto& c : cs) {
      EXPECT_FALSE(c.members.empty());
      EXPECT_NE(std::find(c.members.begin(), c.members.end(), c.representative), c.members.end());
      Severity worst = Severity::NotExploitable;
      for (const auto& a : c.members) {
        seen.insert(a);
        worst = std::max(worst, by_id[a]->severity);
        for (const auto& b : c.members) {
          EXPECT_LE(ref_distance(by_id[a]->stack_trace, by_id[b]->stack_trace), 0.3 + 1e-9);
        }
      }
      EXPECT_EQ(c.severity, worst);
    }
    EXPECT_EQ(seen.size(), rs.size());
    EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), rs.size());
  }
}

TEST(Distance, Examples) {
  const Frame f{"f", "a", 1}, g{"g", "a", 2}, h{"h", "a", 3}, x{"x", "a", 4};
  const std::vector<Frame> fgh{f, g, h}, fgx{f, g, x}, other{x, x, x};
  EXPECT_DOUBLE_EQ(trace_distance(fgh, fgh), 0);
  EXPECT_DOUBLE_EQ(trace_distance(fgh, other), 1);
  EXPECT_DOUBLE_EQ(trace_distance(fgh, fgx), 1.0 / 3);
  EXPECT_DOUBLE_EQ(trace_distance({}, {}), 0);
  const std::vector<Frame> moved{{"f", "b", 1}, g, h};
  EXPECT_DOUBLE_EQ(trace_distance(moved, fgh), 0) << "file does not take part in frame equality";

  const auto cs = cluster({report("a", fgh), report("b", fgx), report("c", other)}, 0.3);
  ASSERT_EQ(cs.size(), 3u) << "1/3 is above 0.3";
  const auto loose = cluster({report("a", fgh), report("b", fgx), report("c", other)}, 0.34);
  ASSERT_EQ(loose.size(), 2u);
  EXPECT_EQ(loose[0].members, (std::vector<std::string>{"a", "b"}));
}

TEST(Distance, MetricProperties) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 1000; ++t) {
    const auto a = random_trace(rng), b = random_trace(rng), c = random_trace(rng);
    const double ab = trace_distance(a, b);
    ASSERT_DOUBLE_EQ(ab, ref_distance(a, b));
    ASSERT_DOUBLE_EQ(trace_distance(a, a), 0);
    ASSERT_DOUBLE_EQ(ab, trace_distance(b, a));
    ASSERT_GE(ab, 0);
    ASSERT_LE(ab, 1);
    ASSERT_LE(trace_distance(a, c), ab + trace_distance(b, c) + 1e-12);
  }
}

TEST(Render, Banner) {
  EXPECT_EQ(render(std::vector<Cluster>{}).substr(0, 10), "0 clusters");
  Cluster c;
  c.members = {"a", "b", "c"};
  c.size = 3;
  c.representative = "a";
  c.representative_seed = "seed-a";
  c.crash_line = {"t.asm", 4, 2};
  const auto text = render(std::vector<Cluster>{c});
  EXPECT_NE(text.find("size=3"), std::string::npos);
  EXPECT_NE(text.find("seed-a"), std::string::npos);
}

TEST(Render, CorpusGolden) {
  const auto text = render(cluster(dedup(load_corpus()), 0.3));
  EXPECT_EQ(text, fsx::read_text(test::data_path("triage/clusters.golden")));
}

TEST(RunTriage, WritesLayout) {
  const auto p = test::asm_program(
      "main:\n input r1, 0\n cmp r1, 1\n je nul\n mov r0, 1\n div r0, r1\n exit 0\n"
      "nul:\n mov r2, 0\n load r0, [r2]\n exit 0\n");
  test::TempDir dir;
  std::filesystem::create_directories(dir / "seeds");
  fsx::write_atomic(dir / "seeds" / "a", Bytes{0});
  fsx::write_atomic(dir / "seeds" / "b", Bytes{0, 5});
  fsx::write_atomic(dir / "seeds" / "c", Bytes{1});
  fsx::write_atomic(dir / "seeds" / "d", Bytes{2});
  const auto r = run_triage(p, fsx::list_files(dir / "seeds"), dir / "out");
  EXPECT_EQ(r.seeds, 4u);
  EXPECT_EQ(r.total_reports, 3u);
  EXPECT_EQ(r.reports.size(), 2u);
  ASSERT_EQ(r.clusters.size(), 2u);
  EXPECT_EQ(fsx::list_files(dir / "out" / "reports").size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "cl1" / "summary"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "summary"));
  for (const auto& [id, ok] : r.reproduces) EXPECT_TRUE(ok) << id;

  TriageOptions skip;
  skip.skip_clustering = true;
  skip.skip_rerun = true;
  const auto s = run_triage(p, fsx::list_files(dir / "seeds"), dir / "out2", skip);
  EXPECT_EQ(s.clusters.size(), 2u);
  EXPECT_TRUE(s.reproduces.empty());
}

}  // namespace
}  // namespace hfz::triage
