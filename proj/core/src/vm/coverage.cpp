#include "hfz/vm/coverage.hpp"

#include <algorithm>

#include "hfz/common/hash.hpp"

namespace hfz::vm {

std::uint8_t bucketize(std::uint32_t hits) {
  if (hits == 0) return 0;
  if (hits <= 2) return static_cast<std::uint8_t>(hits);
  if (hits == 3) return 4;
  if (hits <= 7) return 8;
  if (hits <= 15) return 16;
  if (hits <= 31) return 32;
  if (hits <= 127) return 64;
  return 128;
}

int bucket_level(std::uint8_t bucket) {
  int level = 0;
  while (bucket != 0) {
    ++level;
    bucket >>= 1;
  }
  return level;
}

std::uint16_t block_hash(std::size_t block_entry_index) {
  return static_cast<std::uint16_t>(Fnv1a{}.u64(block_entry_index).value() & 0xFFFFu);
}

std::size_t CoverageBitmap::count_nonzero() const {
  return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](auto c) { return c != 0; }));
}

std::vector<std::uint32_t> CoverageBitmap::nonzero_cells() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < kMapSize; ++i) {
    if (cells_[i]) out.push_back(i);
  }
  return out;
}

bool CoverageBitmap::merge(const CoverageBitmap& other) {
  bool raised = false;
  for (std::size_t i = 0; i < kMapSize; ++i) {
    if (other.cells_[i] > cells_[i]) {
      cells_[i] = other.cells_[i];
      raised = true;
    }
  }
  return raised;
}

CoverageBitmap::Gain CoverageBitmap::merge_cells(const CoverageBitmap& other, std::span<const std::uint16_t> cells) {
  Gain g;
  for (const auto i : cells) {
    if (other.cells_[i] <= cells_[i]) continue;
    ++g.raised;
    if (cells_[i] == 0) ++g.new_cells;
    cells_[i] = other.cells_[i];
  }
  return g;
}

bool CoverageBitmap::would_raise(const CoverageBitmap& other) const {
  for (std::size_t i = 0; i < kMapSize; ++i) {
    if (other.cells_[i] > cells_[i]) return true;
  }
  return false;
}

}  // namespace hfz::vm
