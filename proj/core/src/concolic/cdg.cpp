#include "hfz/concolic/cdg.hpp"

#include <algorithm>
#include <set>

namespace hfz::concolic {
namespace {

using Bits = std::vector<std::uint64_t>;

bool test(const Bits& b, std::size_t i) { return (b[i / 64] >> (i % 64)) & 1; }
void set(Bits& b, std::size_t i) { b[i / 64] |= std::uint64_t{1} << (i % 64); }
void reset(Bits& b, std::size_t i) { b[i / 64] &= ~(std::uint64_t{1} << (i % 64)); }

}  // namespace

std::size_t ControlDependence::terminator(std::size_t block_entry) const {
  auto it = std::upper_bound(program_.blocks.begin(), program_.blocks.end(), block_entry);
  const std::size_t end = it == program_.blocks.end() ? program_.size() : *it;
  return end - 1;
}

std::vector<std::size_t> ControlDependence::successors(std::size_t block_entry, bool& exits) const {
  using vm::Opcode;
  exits = false;
  std::vector<std::size_t> out;
  const std::size_t last = terminator(block_entry);
  const auto& ins = program_.instructions[last];
  auto fallthrough = [&] {
    if (last + 1 < program_.size()) out.push_back(last + 1);
    else exits = true;
  };
  switch (ins.op) {
    case Opcode::Jmp: out.push_back(ins.operands[0].target); break;
    case Opcode::Ret:
    case Opcode::Exit: exits = true; break;
    case Opcode::Switch: {
      const auto count = static_cast<std::size_t>(ins.operands[1].imm);
      for (std::size_t k = 0; k < count; ++k) out.push_back(program_.instructions[last + 1 + k].operands[0].target);
      out.push_back(ins.operands[2].target);
      break;
    }
    default:
      if (vm::is_conditional_jump(ins.op)) out.push_back(ins.operands[0].target);
      fallthrough();
      break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ControlDependence::Function& ControlDependence::analyze(std::size_t function_entry) {
  if (auto it = functions_.find(function_entry); it != functions_.end()) return it->second;
  Function fn;
  std::vector<std::vector<std::size_t>> succ;
  std::vector<bool> exits;
  std::vector<std::size_t> work{program_.block_of.at(function_entry)};
  fn.node_of[work.front()] = 0;
  fn.blocks.push_back(work.front());
  for (std::size_t i = 0; i < fn.blocks.size(); ++i) {
    bool ex = false;
    auto s = successors(fn.blocks[i], ex);
    std::vector<std::size_t> nodes;
    for (auto b : s) {
      auto [it, fresh] = fn.node_of.try_emplace(b, fn.blocks.size());
      if (fresh) fn.blocks.push_back(b);
      nodes.push_back(it->second);
    }
    succ.push_back(std::move(nodes));
    exits.push_back(ex);
  }

  // Postdominator sets; node n is the virtual exit.
  const std::size_t n = fn.blocks.size();
  const std::size_t words = (n + 1 + 63) / 64;
  std::vector<Bits> pdom(n + 1, Bits(words, ~std::uint64_t{0}));
  pdom[n].assign(words, 0);
  set(pdom[n], n);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t v = n; v-- > 0;) {
      Bits acc(words, ~std::uint64_t{0});
      bool any = false;
      auto meet = [&](const Bits& b) {
        for (std::size_t w = 0; w < words; ++w) acc[w] &= b[w];
        any = true;
      };
      for (auto s : succ[v]) meet(pdom[s]);
      if (exits[v]) meet(pdom[n]);
      if (!any) acc.assign(words, ~std::uint64_t{0});
      set(acc, v);
      if (acc != pdom[v]) {
        pdom[v] = std::move(acc);
        changed = true;
      }
    }
  }

  // b depends on a when b postdominates some successor of a without
  // strictly postdominating a.
  fn.parents.assign(n, {});
  for (std::size_t a = 0; a < n; ++a) {
    if (succ[a].size() + (exits[a] ? 1 : 0) < 2) continue;
    Bits dep(words, 0);
    for (auto s : succ[a]) {
      for (std::size_t w = 0; w < words; ++w) dep[w] |= pdom[s][w];
    }
    Bits strict = pdom[a];
    reset(strict, a);
    for (std::size_t b = 0; b < n; ++b) {
      if (test(dep, b) && !test(strict, b)) fn.parents[b].push_back(a);
    }
  }
  return functions_.emplace(function_entry, std::move(fn)).first->second;
}

const std::vector<std::size_t>& ControlDependence::chain(std::size_t function_entry, std::size_t index) {
  auto& fn = analyze(function_entry);
  if (auto it = fn.chains.find(index); it != fn.chains.end()) return it->second;
  std::set<std::size_t> out;
  auto start = fn.node_of.find(program_.block_of.at(index));
  if (start != fn.node_of.end()) {
    std::vector<std::size_t> work{start->second};
    std::set<std::size_t> seen{start->second};
    while (!work.empty()) {
      const auto v = work.back();
      work.pop_back();
      for (auto p : fn.parents[v]) {
        out.insert(terminator(fn.blocks[p]));
        if (seen.insert(p).second) work.push_back(p);
      }
    }
  }
  return fn.chains.emplace(index, std::vector<std::size_t>(out.begin(), out.end())).first->second;
}

std::vector<std::size_t> ControlDependence::function_blocks(std::size_t function_entry) {
  return analyze(function_entry).blocks;
}

}  // namespace hfz::concolic
