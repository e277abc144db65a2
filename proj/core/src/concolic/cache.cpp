#include "hfz/concolic/cache.hpp"

#include <bit>

namespace hfz::concolic {

bool InversionCache::should_invert(const BranchSite& site) const {
  auto it = entries_.find(site.site_hash());
  if (it == entries_.end()) return true;
  const auto& e = it->second;
  if (e.counter == 255) return false;
  if (e.context != site.context_hash) return true;
  return e.counter == 0 || (e.counter != 1 && std::has_single_bit(e.counter));
}

void InversionCache::record_observation(const BranchSite& site) {
  auto& e = entries_[site.site_hash()];
  if (e.counter != 255) ++e.counter;
  e.context = site.context_hash;
}

std::uint8_t InversionCache::counter(const BranchSite& site) const {
  auto it = entries_.find(site.site_hash());
  return it == entries_.end() ? 0 : it->second.counter;
}

}  // namespace hfz::concolic
