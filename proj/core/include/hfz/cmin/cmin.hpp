#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hfz/vm/coverage.hpp"
#include "hfz/vm/program.hpp"

namespace hfz::cmin {

struct CorpusEntry {
  std::string path;
  vm::CoverageBitmap bitmap;
  std::uint64_t bytes_len = 0;
};

// A seed covers (cell, level) for every level up to its bucket level in that
// cell, so a higher hit-count bucket is something extra to preserve.
struct Feature {
  std::uint32_t cell;
  std::uint8_t level;
  auto operator<=>(const Feature&) const = default;
};
std::vector<Feature> features(const vm::CoverageBitmap& bitmap);

// Cell-wise max over the bitmaps of `entries` at `indices`.
vm::CoverageBitmap union_coverage(const std::vector<CorpusEntry>& entries, const std::vector<std::size_t>& indices);
vm::CoverageBitmap union_coverage(const std::vector<CorpusEntry>& entries);

// Greedy set cover over features followed by redundancy pruning. Returns
// indices into `entries` in selection order. The union of the selected
// bitmaps equals the union of all of them, and no selected entry can be
// dropped without losing a feature.
std::vector<std::size_t> minimize(const std::vector<CorpusEntry>& entries);

struct DirectoryResult {
  std::size_t total = 0;    // readable seeds
  std::size_t skipped = 0;  // unreadable
  std::vector<std::filesystem::path> kept;  // written into the destination
};

// Executes `program` on every file in `sources` (in parallel), minimizes and
// copies the kept seeds into `destination` under their original names.
// Duplicate names across source directories keep the first.
DirectoryResult minimize_directory(const vm::Program& program, const std::vector<std::filesystem::path>& sources,
                                   const std::filesystem::path& destination, unsigned jobs = 1,
                                   std::uint64_t step_budget = 1'000'000);

}  // namespace hfz::cmin
