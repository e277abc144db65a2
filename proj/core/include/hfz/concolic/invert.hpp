#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hfz/common/bytes.hpp"
#include "hfz/concolic/path.hpp"
#include "hfz/sym/solver.hpp"

namespace hfz::concolic {

struct Candidate {
  enum class Kind : std::uint8_t { Exact, Optimistic, StrongOptimistic };
  Bytes seed;
  Kind kind = Kind::Exact;
};

// What the strong-optimistic predicate keeps: constraints recorded in a
// caller activation that is still live at the target, and constraints in the
// target's own activation at branches the target is control dependent on.
struct TargetContext {
  std::uint64_t frame_serial = 0;
  std::vector<std::uint64_t> caller_serials;  // live callers, sorted
  std::vector<std::size_t> control_chain;     // branch instruction indices, sorted
};

bool strong_optimistic_keeps(const PathConstraint& c, const TargetContext& target);

struct InvertStats {
  std::size_t queries = 0;
  std::size_t timeouts = 0;
  std::size_t unsat = 0;
  bool budget_exhausted = false;
};

struct InvertOptions {
  sym::SolveOptions solve;
  std::optional<TargetContext> context;
};

// Solves for an input satisfying `goal` under the sliced prefix, falling
// back to the optimistic and strong-optimistic predicates when the sliced
// predicate is unsatisfiable. Bytes outside the model are copied from
// `base_input`.
std::vector<Candidate> solve_goal(std::span<const PathConstraint> sliced, const PathConstraint& target,
                                  const Expr& goal, std::span<const std::uint8_t> base_input,
                                  const InvertOptions& opts, InvertStats* stats = nullptr);

// solve_goal with goal = ¬target.
std::vector<Candidate> invert_branch(std::span<const PathConstraint> sliced, const PathConstraint& target,
                                     std::span<const std::uint8_t> base_input, const InvertOptions& opts,
                                     InvertStats* stats = nullptr);

}  // namespace hfz::concolic
