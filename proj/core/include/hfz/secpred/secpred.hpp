#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hfz/common/bytes.hpp"
#include "hfz/concolic/path.hpp"
#include "hfz/sym/solver.hpp"
#include "hfz/vm/machine.hpp"

namespace hfz::secpred {

using sym::Expr;

enum class FindingKind : std::uint8_t { NullDeref, DivByZero, IntOverflow, OutOfBounds };
std::string_view finding_kind_name(FindingKind kind);
std::optional<FindingKind> finding_kind_from_name(std::string_view name);

enum class Signedness : std::uint8_t { Unknown, Signed, Unsigned };
std::string_view signedness_name(Signedness s);

struct SecurityFinding {
  FindingKind kind = FindingKind::NullDeref;
  vm::SourceLoc source_loc;
  std::optional<vm::SourceLoc> sink_loc;  // IntOverflow only
  Bytes seed;
  bool verified = false;
  std::optional<Signedness> signedness;   // IntOverflow only
  std::size_t source_index = 0;
};

struct OverflowSource {
  std::size_t instr_index = 0;
  vm::SourceLoc loc;
  Expr result_expr;
  Expr cf_expr;
  Expr of_expr;
  Signedness signedness = Signedness::Unknown;
  bool checked = false;

  // Latches the first definite hint; later hints are ignored.
  void hint(Signedness s) {
    if (signedness == Signedness::Unknown) signedness = s;
  }
};

enum class SinkKind : std::uint8_t { Branch, Deref, CallArg };

// Signedness implied by a conditional jump: JL/JLE/JG/JGE signed,
// JB/JBE/JA/JAE unsigned, anything else no information.
Signedness jump_signedness(vm::Opcode op);

struct CheckContext {
  std::span<const concolic::PathConstraint> sliced;
  std::span<const std::uint8_t> base_input;
  sym::SolveOptions solve;
  sym::SolveResult* last = nullptr;  // receives the raw solver result when set
};

// Error predicates. Each is a width-1 expression true exactly on the
// faulting values.
Expr null_deref_predicate(const Expr& addr);
Expr div_zero_predicate(const Expr& divisor);
// Bounds come from the object enclosing `concrete_addr`: a live heap object,
// a freed object (every access faults), or a stack frame region. Without an
// enclosing object the predicate is "outside every valid region".
Expr oob_predicate(const Expr& addr, unsigned width, const vm::ExecState& state, std::uint64_t concrete_addr);
Expr overflow_predicate(const OverflowSource& source);

// Solves sliced ∧ predicate; the finding's seed is the model over base_input.
std::optional<SecurityFinding> check_predicate(FindingKind kind, const Expr& predicate, const vm::SourceLoc& loc,
                                               const CheckContext& ctx);

std::optional<SecurityFinding> check_null_deref(const Expr& addr, const vm::SourceLoc& loc, const CheckContext& ctx);
std::optional<SecurityFinding> check_div_zero(const Expr& divisor, const vm::SourceLoc& loc, const CheckContext& ctx);
std::optional<SecurityFinding> check_oob(const Expr& addr, unsigned width, const vm::ExecState& state,
                                         std::uint64_t concrete_addr, const vm::SourceLoc& loc,
                                         const CheckContext& ctx);
std::optional<SecurityFinding> check_int_overflow(OverflowSource& source, SinkKind sink, const vm::SourceLoc& sink_loc,
                                                  const CheckContext& ctx);

// Sanitizer replay. A finding is verified when its seed reports the predicted
// diagnostic at the source location, or any (kind, location) diagnostic the
// baseline seed does not.
std::vector<SecurityFinding> verify_findings(std::vector<SecurityFinding> findings, const vm::Program& program,
                                             std::span<const std::uint8_t> baseline_seed,
                                             std::uint64_t step_budget = 1'000'000);

// One finding per (kind, file, line, column), first seen wins. Verified
// findings take precedence over unverified ones at the same key.
std::vector<SecurityFinding> dedup_findings(const std::vector<SecurityFinding>& findings);

// Findings as JSON text (an array of records); seeds are referenced by file name.
std::string findings_to_json(const std::vector<SecurityFinding>& findings, const std::vector<std::string>& seed_names);

}  // namespace hfz::secpred
