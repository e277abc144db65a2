#include "hfz/sym/solver.hpp"

#include <algorithm>
#include <bit>
#include <bitset>
#include <cmath>
#include <functional>
#include <numeric>
#include <unordered_map>

#include "hfz/common/rng.hpp"

namespace hfz::sym {
namespace {

using Domain = std::bitset<256>;

// Expression DAG flattened into a topologically ordered instruction list.
// Inputs refer to a caller-provided variable numbering.
class Flat {
 public:
  Flat(const Expr& root, const std::unordered_map<std::uint32_t, std::uint32_t>& var_of) {
    std::unordered_map<const Node*, std::uint32_t> slot_of;
    std::vector<std::pair<const Node*, bool>> stack{{root.get(), false}};
    while (!stack.empty()) {
      auto [n, expanded] = stack.back();
      stack.pop_back();
      if (slot_of.count(n)) continue;
      if (!expanded) {
        stack.push_back({n, true});
        for (const auto& k : n->kids) {
          if (!slot_of.count(k.get())) stack.push_back({k.get(), false});
        }
        continue;
      }
      Ins ins;
      ins.op = n->op;
      ins.width = n->width;
      ins.lo = n->lo;
      ins.value = n->value;
      if (!n->kids.empty()) ins.kid_width = n->kids[0]->width;
      if (n->op == Op::Input) ins.a = var_of.at(static_cast<std::uint32_t>(n->value));
      if (n->op == Op::Select) {
        ins.a = slot_of.at(n->kids[0].get());
        ins.cells_begin = static_cast<std::uint32_t>(cells_.size());
        ins.cells_count = static_cast<std::uint32_t>(n->kids.size() - 1);
        for (std::size_t i = 1; i < n->kids.size(); ++i) cells_.push_back(slot_of.at(n->kids[i].get()));
      } else {
        if (n->kids.size() > 0) ins.a = slot_of.at(n->kids[0].get());
        if (n->kids.size() > 1) {
          ins.b = slot_of.at(n->kids[1].get());
          ins.b_width = n->kids[1]->width;
        }
        if (n->kids.size() > 2) ins.c = slot_of.at(n->kids[2].get());
      }
      slot_of.emplace(n, static_cast<std::uint32_t>(ins_.size()));
      ins_.push_back(ins);
    }
    slots_.assign(ins_.size(), 0);
  }

  bool run(const std::uint8_t* vars) {
    for (std::size_t i = 0; i < ins_.size(); ++i) slots_[i] = eval(ins_[i], vars);
    return slots_.back() != 0;
  }

  double distance() const { return distance(static_cast<std::uint32_t>(ins_.size() - 1)); }

 private:
  struct Ins {
    Op op = Op::Const;
    std::uint8_t width = 0, lo = 0, kid_width = 0, b_width = 0;
    std::uint32_t a = 0, b = 0, c = 0;
    std::uint64_t value = 0;
    std::uint32_t cells_begin = 0, cells_count = 0;
  };

  std::uint64_t eval(const Ins& n, const std::uint8_t* vars) const {
    switch (n.op) {
      case Op::Input: return vars[n.a];
      case Op::Const: return n.value;
      case Op::Not: case Op::Neg: case Op::ZExt: case Op::SExt:
        return apply_unary(n.op, n.width, n.kid_width, slots_[n.a]);
      case Op::Concat: return (slots_[n.a] << n.b_width) | slots_[n.b];
      case Op::Extract: return (slots_[n.a] >> n.lo) & mask(n.width);
      case Op::Ite: return slots_[n.a] ? slots_[n.b] : slots_[n.c];
      case Op::Select: {
        const auto idx = slots_[n.a] - n.value;
        return idx < n.cells_count ? slots_[cells_[n.cells_begin + idx]] : 0;
      }
      default: return apply_binary(n.op, n.kid_width, slots_[n.a], slots_[n.b]);
    }
  }

  static double gap(std::uint64_t d) { return 1.0 + std::log2(1.0 + static_cast<double>(d)); }

  static double compare_distance(Op op, unsigned width, std::uint64_t a, std::uint64_t b) {
    if (apply_binary(op, width, a, b)) return 0;
    const auto m = mask(width);
    if (op >= Op::Slt && op <= Op::Sge) {
      // Bias signed values so unsigned ordering matches signed ordering.
      const std::uint64_t bias = width >= 64 ? (1ULL << 63) : (1ULL << (width - 1));
      a = (a + bias) & m;
      b = (b + bias) & m;
      op = static_cast<Op>(static_cast<int>(op) - static_cast<int>(Op::Slt) + static_cast<int>(Op::Ult));
    }
    switch (op) {
      case Op::Eq: {
        const auto d = std::min((a - b) & m, (b - a) & m);
        return gap(d) + 0.25 * std::popcount(a ^ b);
      }
      case Op::Ne: return 1;
      case Op::Ult: case Op::Ule: return gap(a - b);
      case Op::Ugt: case Op::Uge: return gap(b - a);
      default: return 1;
    }
  }

  double distance(std::uint32_t i) const {
    const auto& n = ins_[i];
    if (n.width == 1 && n.op == Op::And) return distance(n.a) + distance(n.b);
    if (n.width == 1 && n.op == Op::Or) return std::min(distance(n.a), distance(n.b));
    if (is_compare(n.op)) return compare_distance(n.op, n.kid_width, slots_[n.a], slots_[n.b]);
    return slots_[i] ? 0 : 1;
  }

  std::vector<Ins> ins_;
  std::vector<std::uint32_t> cells_;
  std::vector<std::uint64_t> slots_;
};

class Deadline {
 public:
  explicit Deadline(const SolveOptions& opts) {
    end_ = Clock::now() + std::chrono::duration_cast<Clock::duration>(opts.per_query);
    if (opts.deadline && *opts.deadline < end_) end_ = *opts.deadline;
  }
  // Cheap check; consults the clock every 256 calls.
  bool expired() {
    if (expired_) return true;
    if ((++calls_ & 0xFF) == 0 && Clock::now() >= end_) expired_ = true;
    return expired_;
  }
  bool expired_now() {
    if (!expired_ && Clock::now() >= end_) expired_ = true;
    return expired_;
  }

 private:
  Clock::time_point end_;
  std::uint64_t calls_ = 0;
  bool expired_ = false;
};

struct Component {
  std::vector<std::uint32_t> offsets;
  std::vector<Expr> conjuncts;
};

struct Search {
  std::vector<std::uint32_t> offsets;
  std::vector<std::vector<std::uint8_t>> allowed;  // per var, in preferred order
  std::vector<Domain> member;
  std::vector<Flat> flats;
  std::vector<std::size_t> last_var;  // per conjunct: highest var index it reads
  std::vector<std::uint8_t> values;
  std::uint64_t evaluations = 0;
};

std::uint8_t preferred(std::uint32_t offset, std::span<const std::uint8_t> hint) {
  return offset < hint.size() ? hint[offset] : 0;
}

std::vector<std::uint8_t> ordered_domain(const Domain& d, std::uint8_t start) {
  std::vector<std::uint8_t> out;
  for (unsigned k = 0; k < 256; ++k) {
    const auto v = static_cast<std::uint8_t>(start + k);
    if (d[v]) out.push_back(v);
  }
  return out;
}

Search prepare(const Component& comp, const std::map<std::uint32_t, Domain>& domains,
               std::span<const std::uint8_t> hint) {
  Search s;
  s.offsets = comp.offsets;
  std::unordered_map<std::uint32_t, std::uint32_t> var_of;
  for (std::uint32_t i = 0; i < s.offsets.size(); ++i) {
    var_of[s.offsets[i]] = i;
    s.member.push_back(domains.at(s.offsets[i]));
    s.allowed.push_back(ordered_domain(s.member.back(), preferred(s.offsets[i], hint)));
  }
  for (const auto& c : comp.conjuncts) {
    s.flats.emplace_back(c, var_of);
    std::size_t last = 0;
    for (auto off : c->deps) last = std::max<std::size_t>(last, var_of.at(off));
    s.last_var.push_back(last);
  }
  s.values.resize(s.offsets.size());
  for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = s.allowed[i].front();
  return s;
}

// Depth-first enumeration with each conjunct checked as soon as its last
// variable is assigned.
Verdict exhaustive(Search& s, Deadline& deadline) {
  const std::size_t n = s.offsets.size();
  std::vector<std::vector<std::size_t>> due(n);
  for (std::size_t c = 0; c < s.flats.size(); ++c) due[s.last_var[c]].push_back(c);
  std::vector<std::size_t> pos(n, 0);
  std::size_t depth = 0;
  while (true) {
    if (deadline.expired()) return Verdict::Unknown;
    if (pos[depth] == s.allowed[depth].size()) {
      if (depth == 0) return Verdict::Unsat;
      pos[depth] = 0;
      --depth;
      ++pos[depth];
      continue;
    }
    s.values[depth] = s.allowed[depth][pos[depth]];
    bool ok = true;
    for (auto c : due[depth]) {
      ++s.evaluations;
      if (!s.flats[c].run(s.values.data())) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      ++pos[depth];
      continue;
    }
    if (depth + 1 == n) return Verdict::Sat;
    ++depth;
  }
}

double total_distance(Search& s) {
  double total = 0;
  for (auto& f : s.flats) {
    ++s.evaluations;
    f.run(s.values.data());
    total += f.distance();
  }
  return total;
}

Verdict local_search(Search& s, Deadline& deadline, Rng& rng) {
  const std::size_t n = s.offsets.size();
  double current = total_distance(s);
  std::vector<std::uint8_t> candidates;
  std::uint64_t stagnant = 0;
  while (current > 0) {
    if (deadline.expired_now()) return Verdict::Unknown;
    double best = current;
    std::size_t best_var = n;
    std::uint8_t best_value = 0;
    for (std::size_t v = 0; v < n; ++v) {
      const auto old = s.values[v];
      const auto& dom = s.allowed[v];
      if (dom.size() == 1) continue;
      candidates.clear();
      for (int delta : {1, -1, 2, -2, 16, -16}) candidates.push_back(static_cast<std::uint8_t>(old + delta));
      for (int bit = 0; bit < 8; ++bit) candidates.push_back(static_cast<std::uint8_t>(old ^ (1u << bit)));
      candidates.push_back(dom[rng.below(dom.size())]);
      candidates.push_back(dom[rng.below(dom.size())]);
      for (auto c : candidates) {
        if (c == old || !s.member[v][c]) continue;
        s.values[v] = c;
        const double d = total_distance(s);
        if (d < best) {
          best = d;
          best_var = v;
          best_value = c;
        }
        if (deadline.expired()) break;
      }
      s.values[v] = old;
    }
    if (best_var < n) {
      s.values[best_var] = best_value;
      current = best;
      stagnant = 0;
      continue;
    }
    // Local minimum: perturb a few variables, or everything after repeated failures.
    ++stagnant;
    const std::size_t touch = stagnant % 8 == 0 ? n : 1 + rng.below(std::max<std::size_t>(1, n / 2));
    for (std::size_t k = 0; k < touch; ++k) {
      const auto v = touch == n ? k : rng.below(n);
      const auto& dom = s.allowed[v];
      s.values[v] = dom[rng.below(dom.size())];
    }
    current = total_distance(s);
  }
  return Verdict::Sat;
}

}  // namespace

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Sat: return "sat";
    case Verdict::Unsat: return "unsat";
    case Verdict::Unknown: return "unknown";
  }
  return "?";
}

std::vector<Expr> normalize(std::span<const Expr> conjuncts) {
  std::vector<Expr> out;
  std::vector<Expr> work(conjuncts.rbegin(), conjuncts.rend());
  while (!work.empty()) {
    Expr e = work.back();
    work.pop_back();
    if (e->is_true()) continue;
    if (e->width == 1 && e->op == Op::And) {
      work.push_back(e->kids[1]);
      work.push_back(e->kids[0]);
      continue;
    }
    if (e->op == Op::Eq && e->kids[1]->is_const()) {
      const auto& lhs = e->kids[0];
      const auto c = e->kids[1]->value;
      if (lhs->op == Op::Concat) {
        const auto& hi = lhs->kids[0];
        const auto& lo = lhs->kids[1];
        work.push_back(eq(lo, constant(c, lo->width)));
        work.push_back(eq(hi, constant(c >> lo->width, hi->width)));
        continue;
      }
      if (lhs->op == Op::ZExt) {
        const auto& inner = lhs->kids[0];
        work.push_back((c & ~mask(inner->width)) ? bool_const(false) : eq(inner, constant(c, inner->width)));
        continue;
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

Bytes apply_model(std::span<const std::uint8_t> base, const Model& model) {
  Bytes out(base.begin(), base.end());
  for (const auto& [off, v] : model) {
    if (off >= out.size()) out.resize(off + 1, 0);
    out[off] = v;
  }
  return out;
}

bool satisfies(std::span<const Expr> conjuncts, std::span<const std::uint8_t> input) {
  return std::all_of(conjuncts.begin(), conjuncts.end(), [&](const Expr& c) { return evaluate(c, input) != 0; });
}

SolveResult solve(std::span<const Expr> conjuncts_in, const SolveOptions& opts) {
  const auto started = Clock::now();
  Deadline deadline(opts);
  SolveResult result;
  auto done = [&](Verdict v, SolveResult::Method m) {
    result.verdict = v;
    result.method = m;
    result.seconds = std::chrono::duration<double>(Clock::now() - started).count();
    if (v != Verdict::Sat) result.model.clear();
    return result;
  };

  const auto conjuncts = normalize(conjuncts_in);
  for (const auto& c : conjuncts) {
    if (c->width != 1) throw std::logic_error("solve: conjunct is not boolean");
    if (c->is_false()) return done(Verdict::Unsat, SolveResult::Method::Fold);
  }
  if (conjuncts.empty()) return done(Verdict::Sat, SolveResult::Method::Fold);

  // Byte domains from single-input conjuncts.
  std::map<std::uint32_t, Domain> domains;
  for (const auto& c : conjuncts) {
    for (auto off : c->deps) domains.try_emplace(off, Domain{}.set());
  }
  std::vector<Expr> multi;
  for (const auto& c : conjuncts) {
    if (c->deps.size() != 1) {
      multi.push_back(c);
      continue;
    }
    const auto off = c->deps.front();
    std::unordered_map<std::uint32_t, std::uint32_t> var_of{{off, 0}};
    Flat flat(c, var_of);
    auto& dom = domains[off];
    for (unsigned v = 0; v < 256; ++v) {
      if (!dom[v]) continue;
      const auto byte = static_cast<std::uint8_t>(v);
      ++result.evaluations;
      if (!flat.run(&byte)) dom.reset(v);
    }
    if (dom.none()) return done(Verdict::Unsat, SolveResult::Method::Domain);
  }

  // Independent components of the multi-input conjuncts.
  std::map<std::uint32_t, std::uint32_t> parent;
  std::function<std::uint32_t(std::uint32_t)> find = [&](std::uint32_t x) {
    auto it = parent.find(x);
    if (it == parent.end() || it->second == x) return x;
    return it->second = find(it->second);
  };
  for (const auto& c : multi) {
    for (auto off : c->deps) parent.try_emplace(off, off);
    for (std::size_t i = 1; i < c->deps.size(); ++i) {
      const auto a = find(c->deps[0]), b = find(c->deps[i]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::map<std::uint32_t, Component> components;
  for (const auto& [off, _] : parent) components[find(off)].offsets.push_back(off);
  for (const auto& c : multi) components[find(c->deps.front())].conjuncts.push_back(c);

  for (const auto& [off, dom] : domains) {
    if (parent.count(off)) continue;
    const auto want = preferred(off, opts.hint);
    result.model[off] = dom[want] ? want : ordered_domain(dom, 0).front();
  }

  auto method = multi.empty() ? SolveResult::Method::Domain : SolveResult::Method::Exhaustive;
  Rng rng(opts.seed);
  for (auto& [root, comp] : components) {
    Search s = prepare(comp, domains, opts.hint);
    long double space = 1;
    for (const auto& a : s.allowed) space *= static_cast<long double>(a.size());
    Verdict v;
    if (space <= static_cast<long double>(opts.exhaustive_limit)) {
      v = exhaustive(s, deadline);
    } else {
      method = SolveResult::Method::LocalSearch;
      v = local_search(s, deadline, rng);
    }
    result.evaluations += s.evaluations;
    if (v == Verdict::Unsat) return done(Verdict::Unsat, SolveResult::Method::Exhaustive);
    if (v == Verdict::Unknown) return done(Verdict::Unknown, SolveResult::Method::None);
    for (std::size_t i = 0; i < s.offsets.size(); ++i) result.model[s.offsets[i]] = s.values[i];
  }
  return done(Verdict::Sat, method);
}

}  // namespace hfz::sym
