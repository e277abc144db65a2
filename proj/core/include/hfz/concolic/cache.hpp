#pragma once

#include <cstdint>
#include <unordered_map>

#include "hfz/concolic/path.hpp"

namespace hfz::concolic {

// Per-site saturating counters. A site is retried when its context changes
// or when its counter reaches a power of two; it is abandoned at 255.
class InversionCache {
 public:
  bool should_invert(const BranchSite& site) const;
  void record_observation(const BranchSite& site);

  std::uint8_t counter(const BranchSite& site) const;
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::uint8_t counter = 0;
    std::uint64_t context = 0;
  };
  std::unordered_map<std::uint64_t, Entry> entries_;
};

inline bool should_invert(const InversionCache& cache, const BranchSite& site) { return cache.should_invert(site); }
inline void record_observation(InversionCache& cache, const BranchSite& site) { cache.record_observation(site); }

}  // namespace hfz::concolic
