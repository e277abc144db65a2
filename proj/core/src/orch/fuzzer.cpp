#include "hfz/orch/fuzzer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "hfz/common/fs.hpp"
#include "hfz/orch/seed.hpp"

namespace hfz::orch {
namespace {

constexpr std::uint8_t kInteresting[] = {0x00, 0x01, 0x10, 0x20, 0x40, 0x7f, 0x80, 0xff, '0', '9', 'A', 'z'};

std::uint64_t unix_now() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count());
}

}  // namespace

HavocFuzzer::HavocFuzzer(const vm::Program& program, WorkerDirs dirs, FuzzerOptions options)
    : program_(program), dirs_(std::move(dirs)), options_(options), rng_(options.seed) {
  dirs_.create();
}

std::string HavocFuzzer::next_name(std::string_view tags) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "id:%06llu,execs:%llu", static_cast<unsigned long long>(next_id_++),
                static_cast<unsigned long long>(execs_));
  std::string name = buf;
  if (!tags.empty()) name += "," + std::string(tags);
  return name;
}

HavocFuzzer::Verdict HavocFuzzer::evaluate(const Bytes& input, std::string_view tags, bool force) {
  ++execs_;
  auto r = vm::execute(program_, input, {options_.step_budget, false, false});
  if (r.crashed()) {
    if (!crash_sites_.insert({static_cast<int>(r.crash_kind), r.crash_index}).second) return Verdict::None;
    if (first_crash_exec_ == 0) first_crash_exec_ = execs_;
    std::string t = "kind:" + std::string(vm::crash_kind_name(r.crash_kind));
    if (!tags.empty()) t += "," + std::string(tags);
    fsx::write_atomic(dirs_.crashes() / next_name(t), input);
    return Verdict::Crash;
  }
  if (r.hung()) {
    if (!hang_coverage_.merge(r.coverage)) return Verdict::None;
    fsx::write_atomic(dirs_.hangs() / next_name(tags), input);
    return Verdict::Hang;
  }
  const auto gain = coverage_.merge_cells(r.coverage, r.edges);
  const bool raised = gain.raised > 0;
  if (!raised && !force) return Verdict::None;
  std::string t(tags);
  if (gain.new_cells > 0) t = t.empty() ? "+cov" : t + ",+cov";
  if (raised) last_gain_unix_ = unix_now();
  fsx::write_atomic(dirs_.queue() / next_name(t), input);
  queue_.push_back(input);
  return Verdict::Queued;
}

bool HavocFuzzer::add_seed(const Bytes& input, std::string_view tags, bool force) {
  return evaluate(input, tags, force) == Verdict::Queued;
}

Bytes HavocFuzzer::mutate(const Bytes& base) {
  Bytes out = base;
  const int stack = 1 << (1 + rng_.below(4));
  for (int i = 0; i < stack; ++i) {
    const auto choice = rng_.below(out.empty() ? 2 : 10);
    switch (choice) {
      case 0: {  // extend with random bytes
        if (out.size() >= options_.max_input) break;
        const auto n = 1 + rng_.below(8);
        for (std::uint64_t k = 0; k < n && out.size() < options_.max_input; ++k) {
          out.push_back(static_cast<std::uint8_t>(rng_.next()));
        }
        break;
      }
      case 1: {  // splice with another queue entry
        if (queue_.empty()) break;
        const auto& other = queue_[rng_.below(queue_.size())];
        if (other.empty()) break;
        const auto cut = out.empty() ? 0 : rng_.below(out.size() + 1);
        const auto from = rng_.below(other.size());
        out.resize(cut);
        out.insert(out.end(), other.begin() + static_cast<std::ptrdiff_t>(from), other.end());
        if (out.size() > options_.max_input) out.resize(options_.max_input);
        break;
      }
      case 2: case 3:  // bit flip
        out[rng_.below(out.size())] ^= static_cast<std::uint8_t>(1u << rng_.below(8));
        break;
      case 4:  // random byte
        out[rng_.below(out.size())] = static_cast<std::uint8_t>(rng_.next());
        break;
      case 5:  // interesting byte
        out[rng_.below(out.size())] = kInteresting[rng_.below(std::size(kInteresting))];
        break;
      case 6: {  // small add/sub
        auto& b = out[rng_.below(out.size())];
        const auto d = static_cast<std::uint8_t>(1 + rng_.below(16));
        b = rng_.coin() ? static_cast<std::uint8_t>(b + d) : static_cast<std::uint8_t>(b - d);
        break;
      }
      case 7: {  // delete a block
        if (out.size() < 2) break;
        const auto at = rng_.below(out.size());
        const auto n = 1 + rng_.below(std::min<std::uint64_t>(16, out.size() - at));
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(at), out.begin() + static_cast<std::ptrdiff_t>(at + n));
        break;
      }
      case 8: {  // clone a block
        if (out.size() >= options_.max_input) break;
        const auto at = rng_.below(out.size());
        const auto n = 1 + rng_.below(std::min<std::uint64_t>(16, out.size() - at));
        const Bytes block(out.begin() + static_cast<std::ptrdiff_t>(at),
                          out.begin() + static_cast<std::ptrdiff_t>(at + n));
        const auto to = rng_.below(out.size() + 1);
        out.insert(out.begin() + static_cast<std::ptrdiff_t>(to), block.begin(), block.end());
        if (out.size() > options_.max_input) out.resize(options_.max_input);
        break;
      }
      case 9:  // truncate
        out.resize(rng_.below(out.size()));
        break;
    }
  }
  return out;
}

void HavocFuzzer::run(std::uint64_t execs, const std::atomic<bool>* cancel) {
  if (queue_.empty()) add_seed({}, {}, true);
  for (std::uint64_t i = 0; i < execs; ++i) {
    if (cancel && (i & 0xFF) == 0 && cancel->load(std::memory_order_relaxed)) break;
    const auto& base = queue_[cursor_++ % queue_.size()];
    evaluate(mutate(base), {}, false);
  }
}

std::vector<std::string> HavocFuzzer::sync_from(const fs::path& queue_dir, std::string_view source) {
  std::vector<std::string> imported;
  for (const auto& p : fsx::list_files(queue_dir)) {
    auto name = p.filename().string();
    if (!synced_.insert(name).second) continue;
    Bytes data;
    try {
      data = fsx::read_file(p);
    } catch (const std::exception&) {
      continue;
    }
    std::string tags = "sync:" + std::string(source);
    if (auto id = parse_afl_id(name)) tags += ",src:" + std::to_string(*id);
    if (evaluate(data, tags, false) == Verdict::Queued) imported.push_back(std::move(name));
  }
  return imported;
}

void HavocFuzzer::write_stats(std::uint64_t pending) const {
  fsx::write_atomic(dirs_.stats(), format_stats({execs_, last_gain_unix_, pending}));
}

}  // namespace hfz::orch
