#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hfz::vm {

inline constexpr std::size_t kMapSize = 65536;

// Hit count -> AFL-style bucket: 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+
// map to 1, 2, 4, 8, 16, 32, 64, 128.
std::uint8_t bucketize(std::uint32_t hits);
// Ordinal of a bucket value: 0 for an empty cell, 1..8 otherwise.
int bucket_level(std::uint8_t bucket);

// Low 16 bits of FNV-1a over the little-endian block entry index.
std::uint16_t block_hash(std::size_t block_entry_index);

// Edge cell for a transfer between two blocks; the first block of a run is
// entered from a virtual block whose hash is 0.
inline std::uint16_t edge_cell(std::uint16_t prev_hash, std::uint16_t cur_hash) {
  return static_cast<std::uint16_t>(prev_hash ^ cur_hash);
}

class CoverageBitmap {
 public:
  CoverageBitmap() : cells_(kMapSize, 0) {}

  std::uint8_t operator[](std::size_t i) const { return cells_[i]; }
  void set(std::size_t i, std::uint8_t bucket) { cells_[i] = bucket; }
  std::span<const std::uint8_t> cells() const { return cells_; }

  std::size_t count_nonzero() const;
  std::vector<std::uint32_t> nonzero_cells() const;

  // Cell-wise max. Returns true if any cell's bucket increased.
  bool merge(const CoverageBitmap& other);
  struct Gain {
    std::size_t raised = 0;     // cells whose bucket increased
    std::size_t new_cells = 0;  // of which were empty before
  };
  // merge() restricted to `cells`, the nonzero cells of `other`.
  Gain merge_cells(const CoverageBitmap& other, std::span<const std::uint16_t> cells);
  // True if merging `other` would raise at least one cell.
  bool would_raise(const CoverageBitmap& other) const;

  bool operator==(const CoverageBitmap&) const = default;

 private:
  std::vector<std::uint8_t> cells_;
};

}  // namespace hfz::vm
