#include "hfz/concolic/path.hpp"

#include <unordered_map>
#include <utility>

#include "hfz/common/hash.hpp"

namespace hfz::concolic {

std::uint64_t BranchSite::site_hash() const { return Fnv1a{}.u64(instr_index).value(); }

std::uint64_t extend_context(std::uint64_t context, std::size_t instr_index) {
  return Fnv1a{}.u64(context).u64(instr_index).value();
}

namespace {

class UnionFind {
 public:
  std::uint32_t find(std::uint32_t x) {
    std::uint32_t root = x;
    for (auto it = parent_.find(root); it != parent_.end() && it->second != root; it = parent_.find(root)) {
      root = it->second;
    }
    while (x != root) {
      auto it = parent_.find(x);
      x = std::exchange(it->second, root);
    }
    return root;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::unordered_map<std::uint32_t, std::uint32_t> parent_;
};

}  // namespace

std::vector<PathConstraint> slice(std::span<const PathConstraint> predicate, const PathConstraint& target) {
  const auto& tdeps = target.deps();
  if (tdeps.empty()) return {};
  UnionFind uf;
  auto link = [&uf](const sym::Deps& d) {
    for (std::size_t i = 1; i < d.size(); ++i) uf.unite(d[0], d[i]);
  };
  for (const auto& c : predicate) link(c.deps());
  link(tdeps);
  const auto root = uf.find(tdeps.front());
  std::vector<PathConstraint> out;
  for (const auto& c : predicate) {
    if (!c.deps().empty() && uf.find(c.deps().front()) == root) out.push_back(c);
  }
  return out;
}

}  // namespace hfz::concolic
