#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hfz/sym/expr.hpp"
#include "hfz/vm/program.hpp"

namespace hfz::concolic {

using sym::Expr;

struct BranchSite {
  std::size_t instr_index = 0;
  vm::SourceLoc loc;
  // Rolling hash of the symbolic branch sites executed before this one.
  std::uint64_t context_hash = 0;

  // Identity of the static site, independent of context.
  std::uint64_t site_hash() const;
};

// Rolling context update: context' = H(context, site).
std::uint64_t extend_context(std::uint64_t context, std::size_t instr_index);

struct PathConstraint {
  enum class Kind : std::uint8_t {
    Branch,     // conditional jump, invertible
    Switch,     // SWITCH dispatch, invertible per case
    Intrinsic,  // side condition of an intrinsic summary
  };

  Expr expr;  // width 1, true under the producing input
  BranchSite site;
  bool taken = false;
  Kind kind = Kind::Branch;
  std::size_t seq = 0;            // position in the path predicate
  std::uint64_t frame_serial = 0; // activation the constraint was recorded in

  const sym::Deps& deps() const { return expr->deps; }
};

// Constraints of `predicate` transitively data-dependent on `target`, in
// predicate order. A constraint belongs to the slice when its input offsets
// intersect the target's, or those of another member.
std::vector<PathConstraint> slice(std::span<const PathConstraint> predicate, const PathConstraint& target);

}  // namespace hfz::concolic
