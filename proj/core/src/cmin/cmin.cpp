#include "hfz/cmin/cmin.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "hfz/common/fs.hpp"
#include "hfz/common/log.hpp"
#include "hfz/common/parallel.hpp"
#include "hfz/vm/machine.hpp"

namespace hfz::cmin {

std::vector<Feature> features(const vm::CoverageBitmap& bitmap) {
  std::vector<Feature> out;
  for (const auto cell : bitmap.nonzero_cells()) {
    const int top = vm::bucket_level(bitmap[cell]);
    for (int l = 1; l <= top; ++l) out.push_back({cell, static_cast<std::uint8_t>(l)});
  }
  return out;
}

vm::CoverageBitmap union_coverage(const std::vector<CorpusEntry>& entries, const std::vector<std::size_t>& indices) {
  vm::CoverageBitmap u;
  for (const auto i : indices) u.merge(entries[i].bitmap);
  return u;
}

vm::CoverageBitmap union_coverage(const std::vector<CorpusEntry>& entries) {
  vm::CoverageBitmap u;
  for (const auto& e : entries) u.merge(e.bitmap);
  return u;
}

std::vector<std::size_t> minimize(const std::vector<CorpusEntry>& entries) {
  // Features are interned to dense ids so each entry is a sorted id list.
  std::map<Feature, std::uint32_t> ids;
  std::vector<std::vector<std::uint32_t>> sets(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (const auto& f : features(entries[i].bitmap)) {
      const auto [it, _] = ids.try_emplace(f, static_cast<std::uint32_t>(ids.size()));
      sets[i].push_back(it->second);
    }
  }
  std::vector<bool> covered(ids.size(), false);
  std::size_t remaining = ids.size();
  std::vector<bool> chosen(entries.size(), false);
  std::vector<std::size_t> order;

  auto weight = [&](std::size_t i) {
    std::size_t w = 0;
    for (const auto f : sets[i]) w += covered[f] ? 0 : 1;
    return w;
  };
  auto better = [&](std::size_t a, std::size_t b) {
    if (entries[a].bytes_len != entries[b].bytes_len) return entries[a].bytes_len < entries[b].bytes_len;
    return entries[a].path < entries[b].path;
  };

  while (remaining > 0) {
    std::optional<std::size_t> best;
    std::size_t best_w = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (chosen[i]) continue;
      const auto w = weight(i);
      if (w == 0) continue;
      if (!best || w > best_w || (w == best_w && better(i, *best))) {
        best = i;
        best_w = w;
      }
    }
    chosen[*best] = true;
    order.push_back(*best);
    for (const auto f : sets[*best]) {
      if (!covered[f]) {
        covered[f] = true;
        --remaining;
      }
    }
  }
  // An entry is essential if some feature it holds has no other holder among
  // the current selection. Greedy picks can become redundant later on.
  std::vector<std::uint32_t> holders(ids.size(), 0);
  for (const auto i : order) {
    for (const auto f : sets[i]) ++holders[f];
  }
  std::vector<std::size_t> kept;
  std::vector<bool> dropped(order.size(), false);
  for (std::size_t k = order.size(); k-- > 0;) {
    const auto i = order[k];
    const bool redundant = std::all_of(sets[i].begin(), sets[i].end(), [&](auto f) { return holders[f] > 1; });
    if (!redundant) continue;
    dropped[k] = true;
    for (const auto f : sets[i]) --holders[f];
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!dropped[k]) kept.push_back(order[k]);
  }
  if (kept.empty() && !entries.empty()) {
    // Nothing covered at all: keep the smallest seed so the corpus stays usable.
    std::size_t best = 0;
    for (std::size_t i = 1; i < entries.size(); ++i) {
      if (better(i, best)) best = i;
    }
    kept.push_back(best);
  }
  return kept;
}

DirectoryResult minimize_directory(const vm::Program& program, const std::vector<std::filesystem::path>& sources,
                                   const std::filesystem::path& destination, unsigned jobs,
                                   std::uint64_t step_budget) {
  std::vector<std::filesystem::path> files;
  std::set<std::string> names;
  for (const auto& dir : sources) {
    for (auto& p : fsx::list_files(dir)) {
      if (names.insert(p.filename().string()).second) files.push_back(std::move(p));
    }
  }
  std::vector<std::optional<CorpusEntry>> loaded(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    Bytes data;
    try {
      data = fsx::read_file(files[i]);
    } catch (const std::exception&) {
      return;
    }
    auto r = vm::execute(program, data, {step_budget, false, false});
    loaded[i] = CorpusEntry{files[i].filename().string(), std::move(r.coverage), data.size()};
  });
  DirectoryResult out;
  std::vector<CorpusEntry> entries;
  std::vector<std::filesystem::path> origin;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!loaded[i]) {
      log::warn("skipping unreadable seed " + files[i].string());
      ++out.skipped;
      continue;
    }
    entries.push_back(std::move(*loaded[i]));
    origin.push_back(files[i]);
  }
  out.total = entries.size();
  if (entries.empty()) return out;
  std::filesystem::create_directories(destination);
  for (const auto i : minimize(entries)) {
    const auto dest = destination / origin[i].filename();
    fsx::write_atomic(dest, fsx::read_file(origin[i]));
    out.kept.push_back(dest);
  }
  return out;
}

}  // namespace hfz::cmin
