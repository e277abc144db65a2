#include "hfz/concolic/invert.hpp"

#include <algorithm>

namespace hfz::concolic {

bool strong_optimistic_keeps(const PathConstraint& c, const TargetContext& t) {
  if (c.frame_serial == t.frame_serial) {
    return std::binary_search(t.control_chain.begin(), t.control_chain.end(), c.site.instr_index);
  }
  return std::binary_search(t.caller_serials.begin(), t.caller_serials.end(), c.frame_serial);
}

std::vector<Candidate> solve_goal(std::span<const PathConstraint> sliced, const PathConstraint& target,
                                  const Expr& goal, std::span<const std::uint8_t> base_input,
                                  const InvertOptions& opts, InvertStats* stats) {
  InvertStats local;
  auto& st = stats ? *stats : local;
  auto solve_opts = opts.solve;
  solve_opts.hint = base_input;
  auto run = [&](const std::vector<Expr>& conj) {
    ++st.queries;
    auto r = sym::solve(conj, solve_opts);
    if (r.verdict == sym::Verdict::Unknown) ++st.timeouts;
    if (r.verdict == sym::Verdict::Unsat) ++st.unsat;
    return r;
  };

  std::vector<const PathConstraint*> prefix;
  for (const auto& c : sliced) {
    if (c.seq != target.seq || c.site.instr_index != target.site.instr_index) prefix.push_back(&c);
  }
  std::vector<Expr> full;
  for (const auto* c : prefix) full.push_back(c->expr);
  full.push_back(goal);
  std::vector<Candidate> out;
  auto exact = run(full);
  if (exact.verdict == sym::Verdict::Sat) {
    out.push_back({sym::apply_model(base_input, exact.model), Candidate::Kind::Exact});
    return out;
  }
  if (exact.verdict == sym::Verdict::Unknown || prefix.empty()) return out;

  auto optimistic = run({goal});
  if (optimistic.verdict != sym::Verdict::Sat) return out;
  out.push_back({sym::apply_model(base_input, optimistic.model), Candidate::Kind::Optimistic});

  std::vector<Expr> strong;
  if (opts.context) {
    for (const auto* c : prefix) {
      if (strong_optimistic_keeps(*c, *opts.context)) strong.push_back(c->expr);
    }
  }
  // Keeping nothing gives the optimistic predicate; keeping everything gives
  // the sliced one, already known to be unsatisfiable.
  if (strong.empty() || strong.size() == prefix.size()) return out;
  strong.push_back(goal);
  auto so = run(strong);
  if (so.verdict == sym::Verdict::Sat) {
    auto seed = sym::apply_model(base_input, so.model);
    if (seed != out.front().seed) out.push_back({std::move(seed), Candidate::Kind::StrongOptimistic});
  }
  return out;
}

std::vector<Candidate> invert_branch(std::span<const PathConstraint> sliced, const PathConstraint& target,
                                     std::span<const std::uint8_t> base_input, const InvertOptions& opts,
                                     InvertStats* stats) {
  return solve_goal(sliced, target, sym::lnot(target.expr), base_input, opts, stats);
}

}  // namespace hfz::concolic
