#include "hfz/secpred/secpred.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "json.hpp"

namespace hfz::secpred {
namespace {

using namespace sym;

constexpr std::array<std::string_view, 4> kKindNames = {"NullDeref", "DivByZero", "IntOverflow", "OutOfBounds"};
constexpr std::size_t kMaxRegionTerms = 64;

Expr c64(std::uint64_t v) { return constant(v, 64); }

// addr ∉ [lo, hi - width], written without wrapping.
Expr outside(const Expr& addr, unsigned width, std::uint64_t lo, std::uint64_t hi) {
  if (hi < lo + width) return bool_const(true);
  return lor(compare(Op::Ult, addr, c64(lo)), compare(Op::Ugt, addr, c64(hi - width)));
}

bool reports(const vm::ExecResult& r, FindingKind kind, const vm::SourceLoc& loc) {
  return std::any_of(r.diagnostics.begin(), r.diagnostics.end(), [&](const vm::Diagnostic& d) {
    if (d.loc != loc) return false;
    switch (kind) {
      case FindingKind::NullDeref: return d.kind == vm::DiagKind::NullDeref;
      case FindingKind::DivByZero: return d.kind == vm::DiagKind::DivByZero;
      case FindingKind::IntOverflow: return d.kind == vm::DiagKind::IntOverflow;
      case FindingKind::OutOfBounds: return d.kind == vm::DiagKind::OobRead || d.kind == vm::DiagKind::OobWrite;
    }
    return false;
  });
}

}  // namespace

std::string_view finding_kind_name(FindingKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<FindingKind> finding_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<FindingKind>(i);
  }
  return std::nullopt;
}

std::string_view signedness_name(Signedness s) {
  switch (s) {
    case Signedness::Signed: return "signed";
    case Signedness::Unsigned: return "unsigned";
    case Signedness::Unknown: return "unknown";
  }
  return "unknown";
}

Signedness jump_signedness(vm::Opcode op) {
  using vm::Opcode;
  switch (op) {
    case Opcode::Jl: case Opcode::Jle: case Opcode::Jg: case Opcode::Jge: return Signedness::Signed;
    case Opcode::Jb: case Opcode::Jbe: case Opcode::Ja: case Opcode::Jae: return Signedness::Unsigned;
    default: return Signedness::Unknown;
  }
}

Expr null_deref_predicate(const Expr& addr) { return compare(Op::Ult, addr, c64(vm::kNullLimit)); }

Expr div_zero_predicate(const Expr& divisor) { return eq(divisor, constant(0, divisor->width)); }

Expr oob_predicate(const Expr& addr, unsigned width, const vm::ExecState& state, std::uint64_t concrete_addr) {
  // Addresses in the null page belong to the null-dereference checker.
  const Expr mapped = compare(Op::Uge, addr, c64(vm::kNullLimit));
  if (auto obj = vm::enclosing_object(state, concrete_addr)) {
    if (obj->kind == vm::MemoryObject::Kind::FreedHeap) return mapped;
    return land(mapped, outside(addr, width, obj->base, obj->end()));
  }
  std::vector<Expr> terms{mapped};
  for (const auto& region : vm::stack_regions(state)) terms.push_back(outside(addr, width, region.base, region.end()));
  for (const auto& [base, size] : state.heap_objects) {
    if (terms.size() >= kMaxRegionTerms) break;
    terms.push_back(outside(addr, width, base, base + size));
  }
  return all_of(terms);
}

Expr overflow_predicate(const OverflowSource& source) {
  switch (source.signedness) {
    case Signedness::Signed: return source.of_expr;
    case Signedness::Unsigned: return source.cf_expr;
    case Signedness::Unknown: return lor(source.cf_expr, source.of_expr);
  }
  return lor(source.cf_expr, source.of_expr);
}

std::optional<SecurityFinding> check_predicate(FindingKind kind, const Expr& predicate, const vm::SourceLoc& loc,
                                               const CheckContext& ctx) {
  if (predicate->is_false()) return std::nullopt;
  std::vector<Expr> conj;
  conj.reserve(ctx.sliced.size() + 1);
  for (const auto& c : ctx.sliced) conj.push_back(c.expr);
  conj.push_back(predicate);
  auto opts = ctx.solve;
  opts.hint = ctx.base_input;
  auto r = solve(conj, opts);
  if (ctx.last) *ctx.last = r;
  if (r.verdict != Verdict::Sat) return std::nullopt;
  SecurityFinding f;
  f.kind = kind;
  f.source_loc = loc;
  f.seed = apply_model(ctx.base_input, r.model);
  return f;
}

std::optional<SecurityFinding> check_null_deref(const Expr& addr, const vm::SourceLoc& loc, const CheckContext& ctx) {
  if (!addr->symbolic()) return std::nullopt;
  return check_predicate(FindingKind::NullDeref, null_deref_predicate(addr), loc, ctx);
}

std::optional<SecurityFinding> check_div_zero(const Expr& divisor, const vm::SourceLoc& loc, const CheckContext& ctx) {
  if (!divisor->symbolic()) return std::nullopt;
  return check_predicate(FindingKind::DivByZero, div_zero_predicate(divisor), loc, ctx);
}

std::optional<SecurityFinding> check_oob(const Expr& addr, unsigned width, const vm::ExecState& state,
                                         std::uint64_t concrete_addr, const vm::SourceLoc& loc,
                                         const CheckContext& ctx) {
  if (!addr->symbolic()) return std::nullopt;
  return check_predicate(FindingKind::OutOfBounds, oob_predicate(addr, width, state, concrete_addr), loc, ctx);
}

std::optional<SecurityFinding> check_int_overflow(OverflowSource& source, SinkKind, const vm::SourceLoc& sink_loc,
                                                  const CheckContext& ctx) {
  source.checked = true;
  auto f = check_predicate(FindingKind::IntOverflow, overflow_predicate(source), source.loc, ctx);
  if (!f) return std::nullopt;
  f->sink_loc = sink_loc;
  f->signedness = source.signedness;
  f->source_index = source.instr_index;
  return f;
}

std::vector<SecurityFinding> verify_findings(std::vector<SecurityFinding> findings, const vm::Program& program,
                                             std::span<const std::uint8_t> baseline_seed, std::uint64_t step_budget) {
  vm::ExecOptions opts;
  opts.sanitizer = true;
  opts.step_budget = step_budget;
  const auto baseline = vm::execute(program, baseline_seed, opts);
  std::set<std::pair<vm::DiagKind, vm::SourceLoc>> known;
  for (const auto& d : baseline.diagnostics) known.insert({d.kind, d.loc});
  for (auto& f : findings) {
    const auto replay = vm::execute(program, f.seed, opts);
    if (replay.hung()) {
      f.verified = false;
      continue;
    }
    bool fresh = std::any_of(replay.diagnostics.begin(), replay.diagnostics.end(),
                             [&](const vm::Diagnostic& d) { return !known.count({d.kind, d.loc}); });
    f.verified = reports(replay, f.kind, f.source_loc) || fresh;
  }
  return findings;
}

std::vector<SecurityFinding> dedup_findings(const std::vector<SecurityFinding>& findings) {
  using Key = std::tuple<FindingKind, std::string, std::uint32_t, std::uint32_t>;
  std::map<Key, std::size_t> slot;
  std::vector<SecurityFinding> out;
  for (const auto& f : findings) {
    const Key key{f.kind, f.source_loc.file, f.source_loc.line, f.source_loc.column};
    auto it = slot.find(key);
    if (it == slot.end()) {
      slot.emplace(key, out.size());
      out.push_back(f);
    } else if (!out[it->second].verified && f.verified) {
      out[it->second] = f;
    }
  }
  return out;
}

std::string findings_to_json(const std::vector<SecurityFinding>& findings, const std::vector<std::string>& seed_names) {
  auto loc_json = [](const vm::SourceLoc& l) {
    return nlohmann::ordered_json{{"file", l.file}, {"line", l.line}, {"column", l.column}};
  };
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < findings.size(); ++i) {
    const auto& f = findings[i];
    nlohmann::ordered_json j;
    j["kind"] = finding_kind_name(f.kind);
    j["file"] = f.source_loc.file;
    j["line"] = f.source_loc.line;
    j["column"] = f.source_loc.column;
    j["seed"] = i < seed_names.size() ? seed_names[i] : "";
    j["verified"] = f.verified;
    if (f.sink_loc) j["sink"] = loc_json(*f.sink_loc);
    if (f.signedness) j["signedness"] = signedness_name(*f.signedness);
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

}  // namespace hfz::secpred
