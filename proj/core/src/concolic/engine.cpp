#include "hfz/concolic/engine.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <limits>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_set>

#include "hfz/common/hash.hpp"
#include "hfz/concolic/cdg.hpp"
#include "hfz/common/log.hpp"

namespace hfz::concolic {
namespace {

using namespace sym;
using vm::Opcode;
using SteadyClock = std::chrono::steady_clock;

constexpr std::uint32_t kMaxDepth = 512;
constexpr std::size_t kMaxOverflowSources = 256;
constexpr std::uint64_t kMaxInputOffset = 1u << 20;

double seconds_since(SteadyClock::time_point t) {
  return std::chrono::duration<double>(SteadyClock::now() - t).count();
}

Expr c64(std::uint64_t v) { return constant(v, 64); }
Expr bit63(const Expr& e) { return extract(e, 63, 63); }

// Concrete results keep the shadow empty; overly deep terms are concretized so
// recursion over them stays bounded.
Expr keep(const Expr& e) {
  if (!e || !e->symbolic() || e->depth > kMaxDepth) return nullptr;
  return e;
}

Op binop_for(Opcode op) {
  switch (op) {
    case Opcode::Add: return Op::Add;
    case Opcode::Sub: case Opcode::Cmp: return Op::Sub;
    case Opcode::Mul: return Op::Mul;
    case Opcode::Div: return Op::UDiv;
    case Opcode::Idiv: return Op::SDiv;
    case Opcode::And: return Op::And;
    case Opcode::Or: return Op::Or;
    case Opcode::Xor: return Op::Xor;
    case Opcode::Shl: return Op::Shl;
    case Opcode::Shr: return Op::LShr;
    case Opcode::Sar: return Op::AShr;
    default: throw std::logic_error("no expression operator for opcode");
  }
}

// Flag-producing operation whose operands were at least partly symbolic.
struct SymFlags {
  bool symbolic = false;
  Opcode op = Opcode::Cmp;
  Expr a, b, r;
};

Expr carry_flag(const SymFlags& f) {
  switch (f.op) {
    case Opcode::Add: return compare(Op::Ult, f.r, f.a);
    case Opcode::Sub: case Opcode::Cmp: return compare(Op::Ult, f.a, f.b);
    case Opcode::Mul:
      return land(compare(Op::Ne, f.a, c64(0)), compare(Op::Ne, binary(Op::UDiv, f.r, f.a), f.b));
    default: return bool_const(false);
  }
}

Expr overflow_flag(const SymFlags& f) {
  switch (f.op) {
    case Opcode::Add: return bit63(land(binary(Op::Xor, f.a, f.r), binary(Op::Xor, f.b, f.r)));
    case Opcode::Sub: case Opcode::Cmp: return bit63(land(binary(Op::Xor, f.a, f.b), binary(Op::Xor, f.a, f.r)));
    case Opcode::Mul: {
      const auto min = c64(1ULL << 63), minus1 = c64(~0ULL);
      return lor(land(compare(Op::Ne, f.a, c64(0)), compare(Op::Ne, binary(Op::SDiv, f.r, f.a), f.b)),
                 land(eq(f.a, minus1), eq(f.b, min)));
    }
    case Opcode::Idiv: return land(eq(f.a, c64(1ULL << 63)), eq(f.b, c64(~0ULL)));
    default: return bool_const(false);
  }
}

Expr jump_condition(Opcode jcc, const SymFlags& f) {
  if (f.op == Opcode::Cmp || f.op == Opcode::Sub) {
    switch (jcc) {
      case Opcode::Je: return compare(Op::Eq, f.a, f.b);
      case Opcode::Jne: return compare(Op::Ne, f.a, f.b);
      case Opcode::Jl: return compare(Op::Slt, f.a, f.b);
      case Opcode::Jle: return compare(Op::Sle, f.a, f.b);
      case Opcode::Jg: return compare(Op::Sgt, f.a, f.b);
      case Opcode::Jge: return compare(Op::Sge, f.a, f.b);
      case Opcode::Jb: return compare(Op::Ult, f.a, f.b);
      case Opcode::Jbe: return compare(Op::Ule, f.a, f.b);
      case Opcode::Ja: return compare(Op::Ugt, f.a, f.b);
      case Opcode::Jae: return compare(Op::Uge, f.a, f.b);
      default: break;
    }
  }
  const Expr zf = eq(f.r, c64(0));
  const Expr sf = bit63(f.r);
  const Expr cf = carry_flag(f);
  const Expr of = overflow_flag(f);
  const Expr lt = binary(Op::Xor, sf, of);
  switch (jcc) {
    case Opcode::Je: return zf;
    case Opcode::Jne: return lnot(zf);
    case Opcode::Jl: return lt;
    case Opcode::Jle: return lor(zf, lt);
    case Opcode::Jg: return land(lnot(zf), lnot(lt));
    case Opcode::Jge: return lnot(lt);
    case Opcode::Jb: return cf;
    case Opcode::Jbe: return lor(cf, zf);
    case Opcode::Ja: return land(lnot(cf), lnot(zf));
    case Opcode::Jae: return lnot(cf);
    default: return bool_const(true);
  }
}

struct Job {
  enum class Kind : std::uint8_t { Invert, Case, Address, Check };
  Kind kind = Kind::Invert;
  std::size_t seq = 0;
  std::vector<PathConstraint> sliced;
  PathConstraint target;
  Expr goal;
  std::optional<TargetContext> context;
  // Check
  secpred::FindingKind finding = secpred::FindingKind::NullDeref;
  vm::SourceLoc loc;
  std::optional<vm::SourceLoc> sink_loc;
  std::optional<secpred::Signedness> signedness;
  std::size_t source_index = 0;
};

struct JobOutput {
  std::vector<Candidate> seeds;
  std::optional<secpred::SecurityFinding> finding;
};

// Bounded FIFO between the tracer and the solver workers. `pending` counts
// queued plus running jobs.
class JobQueue {
 public:
  void push(Job job) {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(job));
    ++pending_;
    ready_.notify_one();
  }
  bool pop(Job& out) {
    std::unique_lock lock(mu_);
    ready_.wait(lock, [&] { return closed_ || !queue_.empty(); });
    if (queue_.empty()) return false;
    out = std::move(queue_.front());
    queue_.pop_front();
    return true;
  }
  void done() {
    std::lock_guard lock(mu_);
    --pending_;
    if (pending_ == 0) drained_.notify_all();
  }
  void wait_empty() {
    std::unique_lock lock(mu_);
    drained_.wait(lock, [&] { return pending_ == 0; });
  }
  std::size_t pending() {
    std::lock_guard lock(mu_);
    return pending_;
  }
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    ready_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable ready_, drained_;
  std::deque<Job> queue_;
  std::size_t pending_ = 0;
  bool closed_ = false;
};

class Engine {
 public:
  Engine(const vm::Program& program, std::span<const std::uint8_t> input, InversionCache& cache,
         const SolveBudget& budget, const Modes& modes, const RunOptions& options)
      : program_(program),
        input_(input.begin(), input.end()),
        cache_(cache),
        budget_(budget),
        modes_(modes),
        options_(options),
        machine_(program, input, vm::ExecOptions{options.step_budget, false, false}),
        cdg_(program) {}

  RunResult run();

 private:
  // Tracing.
  void trace();
  void before(std::size_t idx, const vm::Instruction& ins);
  void after_branch(std::size_t idx, const vm::Instruction& ins, const Expr& cond);
  void after_switch(std::size_t idx, const vm::Instruction& ins, const Expr& x, std::uint64_t v);
  void symbolic_access(std::size_t idx, const Expr& addr, std::uint64_t concrete, unsigned width);
  void arith(std::size_t idx, const vm::Instruction& ins);
  void add_constraint(PathConstraint c) {
    c.seq = predicate_.size();
    ++result_.stats.constraints;
    predicate_.push_back(std::move(c));
  }
  BranchSite site(std::size_t idx) const {
    return {idx, program_.instructions[idx].loc, context_};
  }
  TargetContext target_context(std::size_t idx);
  PathConstraint pseudo_target(const Expr& goal, std::size_t idx) const;
  void submit(Job job);

  // Security.
  void check(secpred::FindingKind kind, const Expr& predicate, std::size_t idx,
             std::optional<vm::SourceLoc> sink = {}, std::optional<secpred::Signedness> sign = {},
             std::size_t source_index = 0);
  void sink(const std::vector<Expr>& exprs, std::size_t idx);
  void signedness_hints(Opcode jcc, const std::vector<Expr>& operands);

  // Solving.
  void worker();
  JobOutput execute(Job& job);
  std::optional<sym::SolveOptions> reserve_budget();
  void charge(double seconds);

  const vm::Program& program_;
  Bytes input_;
  InversionCache& cache_;
  SolveBudget budget_;
  Modes modes_;
  RunOptions options_;
  vm::Machine machine_;
  ControlDependence cdg_;

  SymState sym_;
  SymFlags flags_;
  struct PendingLoad {
    bool active = false;
    int reg = 0;
    Expr value;
  } pending_load_;
  struct PendingStore {
    bool active = false;
    std::uint64_t addr = 0;
    Expr value;
    unsigned width = 8;
  } pending_store_;
  std::optional<IntrinsicSummary> pending_intrinsic_;
  std::optional<Expr> access_addr_;  // set for LOAD/STORE, null Expr when concrete
  std::vector<PathConstraint> predicate_;
  std::uint64_t context_ = 0;
  std::set<std::pair<int, std::size_t>> checked_sites_;
  std::unordered_set<std::size_t> fuzzed_addresses_;
  std::vector<secpred::OverflowSource> sources_;
  std::unordered_map<const Node*, secpred::Signedness> node_hints_;

  JobQueue queue_;
  std::size_t next_job_ = 0;
  std::mutex out_mu_;
  std::vector<std::pair<std::size_t, JobOutput>> outputs_;
  std::size_t address_models_ = 0;  // guarded by out_mu_
  double solver_used_ = 0;          // guarded by out_mu_
  std::size_t queries_ = 0, timeouts_ = 0, skipped_ = 0;
  double max_query_ = 0;

  RunResult result_;
};

TargetContext Engine::target_context(std::size_t idx) {
  TargetContext t;
  const auto& stack = machine_.state().call_stack;
  t.frame_serial = stack.back().serial;
  for (std::size_t k = 0; k + 1 < stack.size(); ++k) t.caller_serials.push_back(stack[k].serial);
  std::sort(t.caller_serials.begin(), t.caller_serials.end());
  t.control_chain = cdg_.chain(stack.back().function_entry, idx);
  return t;
}

PathConstraint Engine::pseudo_target(const Expr& goal, std::size_t idx) const {
  PathConstraint t;
  t.expr = goal;
  t.site = site(idx);
  t.seq = predicate_.size();
  t.frame_serial = machine_.frame().serial;
  return t;
}

void Engine::submit(Job job) {
  if (queue_.pending() >= budget_.queue_threshold) {
    ++result_.stats.suspensions;
    if (options_.hooks.on_suspend) options_.hooks.on_suspend(queue_.pending());
    queue_.wait_empty();
    if (options_.hooks.on_resume) options_.hooks.on_resume(queue_.pending());
  }
  job.seq = next_job_++;
  queue_.push(std::move(job));
  const auto pending = queue_.pending();
  result_.stats.max_pending = std::max(result_.stats.max_pending, pending);
  if (options_.hooks.on_push) options_.hooks.on_push(pending);
}

void Engine::check(secpred::FindingKind kind, const Expr& predicate, std::size_t idx, std::optional<vm::SourceLoc> sink,
                   std::optional<secpred::Signedness> sign, std::size_t source_index) {
  if (predicate->is_false()) return;
  const std::size_t at = kind == secpred::FindingKind::IntOverflow ? source_index : idx;
  if (!checked_sites_.insert({static_cast<int>(kind), at}).second) return;
  Job job;
  job.kind = Job::Kind::Check;
  job.goal = predicate;
  job.sliced = slice(predicate_, pseudo_target(predicate, idx));
  job.finding = kind;
  job.loc = program_.instructions[at].loc;
  job.sink_loc = std::move(sink);
  job.signedness = sign;
  job.source_index = source_index;
  submit(std::move(job));
}

void Engine::signedness_hints(Opcode jcc, const std::vector<Expr>& operands) {
  const auto s = secpred::jump_signedness(jcc);
  if (s == secpred::Signedness::Unknown) return;
  for (const auto& e : operands) {
    if (!e || !e->symbolic()) continue;
    node_hints_.try_emplace(e.get(), s);
    for (auto& src : sources_) {
      if (src.checked || src.signedness != secpred::Signedness::Unknown) continue;
      if (deps_intersect(src.result_expr->deps, e->deps) && contains(e, src.result_expr.get())) src.hint(s);
    }
  }
}

void Engine::sink(const std::vector<Expr>& exprs, std::size_t idx) {
  if (!modes_.check_security) return;
  for (auto& src : sources_) {
    if (src.checked) continue;
    for (const auto& e : exprs) {
      if (!e || !e->symbolic() || !deps_intersect(src.result_expr->deps, e->deps)) continue;
      if (!contains(e, src.result_expr.get())) continue;
      src.checked = true;
      check(secpred::FindingKind::IntOverflow, secpred::overflow_predicate(src), idx,
            program_.instructions[idx].loc, src.signedness, src.instr_index);
      break;
    }
  }
}

void Engine::arith(std::size_t idx, const vm::Instruction& ins) {
  const auto& o0 = ins.operands[0];
  const auto& o1 = ins.operands[1];
  const Expr sa = sym_.regs[o0.reg];
  const Expr sb = o1.kind == vm::Operand::Kind::Reg ? sym_.regs[o1.reg] : nullptr;
  if (!sa && !sb) {
    if (ins.op != Opcode::Cmp) sym_.regs[o0.reg] = nullptr;
    flags_.symbolic = false;
    return;
  }
  const Expr a = sa ? sa : c64(machine_.state().regs[o0.reg]);
  const Expr b = sb ? sb : c64(machine_.value(o1));
  if ((ins.op == Opcode::Div || ins.op == Opcode::Idiv) && sb && modes_.check_security) {
    check(secpred::FindingKind::DivByZero, secpred::div_zero_predicate(sb), idx);
  }
  const Expr r = binary(binop_for(ins.op), a, b);
  flags_ = {true, ins.op, a, b, r};
  if (ins.op == Opcode::Cmp) return;
  if (modes_.check_security && r->symbolic() &&
      (ins.op == Opcode::Add || ins.op == Opcode::Sub || ins.op == Opcode::Mul)) {
    secpred::OverflowSource src;
    src.instr_index = idx;
    src.loc = ins.loc;
    src.result_expr = r;
    src.cf_expr = carry_flag(flags_);
    src.of_expr = overflow_flag(flags_);
    for (const auto* operand : {sa.get(), sb.get()}) {
      if (!operand) continue;
      if (auto it = node_hints_.find(operand); it != node_hints_.end()) src.hint(it->second);
    }
    if (!src.cf_expr->is_false() || !src.of_expr->is_false()) {
      if (sources_.size() >= kMaxOverflowSources) sources_.erase(sources_.begin());
      sources_.push_back(std::move(src));
    }
  }
  sym_.regs[o0.reg] = keep(r);
}

void Engine::symbolic_access(std::size_t idx, const Expr& addr, std::uint64_t concrete, unsigned width) {
  if (!modes_.check_security) return;
  check(secpred::FindingKind::NullDeref, secpred::null_deref_predicate(addr), idx);
  check(secpred::FindingKind::OutOfBounds, secpred::oob_predicate(addr, width, machine_.state(), concrete), idx);
  sink({addr}, idx);
}

void Engine::before(std::size_t idx, const vm::Instruction& ins) {
  const auto& o0 = ins.operands[0];
  const auto& o1 = ins.operands[1];
  const auto& o2 = ins.operands[2];
  const auto& regs = machine_.state().regs;
  switch (ins.op) {
    case Opcode::Mov:
      sym_.regs[o0.reg] = o1.kind == vm::Operand::Kind::Reg ? sym_.regs[o1.reg] : nullptr;
      break;
    case Opcode::Add: case Opcode::Sub: case Opcode::Mul: case Opcode::Div: case Opcode::Idiv:
    case Opcode::And: case Opcode::Or: case Opcode::Xor: case Opcode::Shl: case Opcode::Shr:
    case Opcode::Sar: case Opcode::Cmp:
      arith(idx, ins);
      break;
    case Opcode::Load: case Opcode::Store: {
      const bool write = ins.op == Opcode::Store;
      const auto& mem = write ? o0 : o1;
      const unsigned width = ins.num_operands == 3 ? static_cast<unsigned>(o2.imm) : 8;
      const auto concrete = machine_.effective_address(mem);
      Expr addr;
      if (sym_.regs[mem.reg]) addr = keep(add(sym_.regs[mem.reg], c64(static_cast<std::uint64_t>(mem.imm))));
      access_addr_ = addr;
      Expr loaded;
      bool via_select = false;
      if (addr) {
        symbolic_access(idx, addr, concrete, width);
        if (!write && modes_.sym_pointers) {
          if (auto obj = vm::enclosing_object(machine_.state(), concrete)) {
            if (auto e = read_symbolic_memory(addr, *obj, sym_, machine_, width)) {
              loaded = keep(*e);
              via_select = true;
            }
          }
        }
        if (!via_select && modes_.fuzz_addresses && options_.address.per_run > 0 &&
            fuzzed_addresses_.insert(idx).second) {
          Job job;
          job.kind = Job::Kind::Address;
          job.goal = addr;
          job.sliced = slice(predicate_, pseudo_target(addr, idx));
          submit(std::move(job));
        }
      }
      if (write) {
        const Expr value = o1.kind == vm::Operand::Kind::Reg ? sym_.regs[o1.reg] : nullptr;
        pending_store_ = {true, concrete, value, width};
      } else {
        pending_load_ = {true, o0.reg, via_select ? loaded : sym_.read(machine_, concrete, width)};
      }
      break;
    }
    case Opcode::Alloc: sym_.regs[o0.reg] = nullptr; break;
    case Opcode::Push: {
      const Expr value = o0.kind == vm::Operand::Kind::Reg ? sym_.regs[o0.reg] : nullptr;
      pending_store_ = {true, regs[vm::kStackPointer] - 8, value, 8};
      break;
    }
    case Opcode::Pop: pending_load_ = {true, o0.reg, sym_.read(machine_, regs[vm::kStackPointer], 8)}; break;
    case Opcode::Call: sink({sym_.regs[0], sym_.regs[1], sym_.regs[2]}, idx); break;
    case Opcode::Input: {
      const auto i = machine_.value(o1);
      // Bytes past the end read as 0 but stay symbolic, so short seeds can grow.
      sym_.regs[o0.reg] = i < kMaxInputOffset ? zext(input_byte(static_cast<std::uint32_t>(i)), 64) : nullptr;
      break;
    }
    case Opcode::Len: sym_.regs[o0.reg] = nullptr; break;
    case Opcode::Intrin: {
      auto summary = intrinsic_summary(static_cast<vm::Intrinsic>(o0.imm), sym_, machine_);
      pending_intrinsic_ = std::move(summary);
      break;
    }
    default: break;
  }
  sym_.regs[vm::kStackPointer] = nullptr;
}

void Engine::after_branch(std::size_t idx, const vm::Instruction& ins, const Expr& cond) {
  const auto target = ins.operands[0].target;
  if (target == idx + 1) return;
  const bool taken = machine_.pc() == target;
  PathConstraint c;
  c.expr = taken ? cond : lnot(cond);
  c.site = site(idx);
  c.taken = taken;
  c.kind = PathConstraint::Kind::Branch;
  c.frame_serial = machine_.frame().serial;
  ++result_.stats.branches_seen;
  if (modes_.invert_branches && cache_.should_invert(c.site)) {
    Job job;
    job.kind = Job::Kind::Invert;
    c.seq = predicate_.size();
    job.target = c;
    job.goal = lnot(c.expr);
    job.sliced = slice(predicate_, c);
    job.context = target_context(idx);
    submit(std::move(job));
  }
  cache_.record_observation(c.site);
  context_ = extend_context(context_, idx);
  add_constraint(std::move(c));
}

void Engine::after_switch(std::size_t idx, const vm::Instruction& ins, const Expr& x, std::uint64_t v) {
  const auto count = static_cast<std::uint64_t>(ins.operands[1].imm);
  PathConstraint c;
  c.expr = v < count ? eq(x, c64(v)) : compare(Op::Uge, x, c64(count));
  if (c.expr->is_const()) return;
  c.site = site(idx);
  c.taken = true;
  c.kind = PathConstraint::Kind::Switch;
  c.frame_serial = machine_.frame().serial;
  ++result_.stats.branches_seen;
  if (modes_.invert_branches && cache_.should_invert(c.site)) {
    c.seq = predicate_.size();
    const auto sliced = slice(predicate_, c);
    const auto ctx = target_context(idx);
    std::vector<Expr> goals;
    for (std::uint64_t k = 0; k < count && goals.size() < options_.max_switch_cases; ++k) {
      if (k != v) goals.push_back(eq(x, c64(k)));
    }
    if (v < count) goals.push_back(compare(Op::Uge, x, c64(count)));
    for (auto& g : goals) {
      if (g->is_false()) continue;
      Job job;
      job.kind = Job::Kind::Case;
      job.target = c;
      job.goal = g;
      job.sliced = sliced;
      job.context = ctx;
      submit(std::move(job));
    }
  }
  cache_.record_observation(c.site);
  context_ = extend_context(context_, idx);
  add_constraint(std::move(c));
}

void Engine::trace() {
  const auto started = SteadyClock::now();
  std::uint64_t tick = 0;
  while (machine_.running()) {
    if ((++tick & 0x3FF) == 0) {
      if (options_.cancel && options_.cancel->load(std::memory_order_relaxed)) {
        result_.stats.cancelled = true;
        break;
      }
      if (seconds_since(started) > budget_.run_seconds) {
        result_.stats.aborted_time = true;
        break;
      }
      if (sym::live_nodes() * sym::kApproxNodeBytes > budget_.memory_bytes) {
        result_.stats.aborted_memory = true;
        break;
      }
    }
    const std::size_t idx = machine_.pc();
    if (idx >= program_.size()) {
      machine_.step();
      break;
    }
    if (machine_.state().steps >= options_.step_budget) {
      machine_.step();
      break;
    }
    const auto& ins = program_.instructions[idx];
    pending_load_.active = pending_store_.active = false;
    pending_intrinsic_.reset();
    access_addr_.reset();

    Expr cond;
    Expr switch_x;
    std::uint64_t switch_v = 0;
    if (vm::is_conditional_jump(ins.op) && flags_.symbolic) {
      cond = jump_condition(ins.op, flags_);
      if (cond->is_const()) {
        cond = nullptr;
      } else if (modes_.check_security) {
        const std::vector<Expr> operands{flags_.a, flags_.b, flags_.r};
        signedness_hints(ins.op, operands);
        sink(operands, idx);
      }
    } else if (ins.op == Opcode::Switch && sym_.regs[ins.operands[0].reg]) {
      switch_x = sym_.regs[ins.operands[0].reg];
      switch_v = machine_.state().regs[ins.operands[0].reg];
    } else {
      before(idx, ins);
    }

    if (machine_.step() == vm::Machine::Status::Crashed) {
      if (access_addr_) result_.crash_address_deps = *access_addr_ ? (*access_addr_)->deps : sym::Deps{};
      break;
    }

    if (cond) after_branch(idx, ins, cond);
    if (switch_x) after_switch(idx, ins, switch_x, switch_v);
    if (pending_store_.active) sym_.write(pending_store_.addr, pending_store_.value, pending_store_.width);
    if (pending_load_.active) sym_.regs[pending_load_.reg] = keep(pending_load_.value);
    if (pending_intrinsic_) {
      sym_.regs[0] = keep(pending_intrinsic_->value);
      for (auto& side : pending_intrinsic_->side_conditions) {
        if (side->is_const()) continue;
        PathConstraint c;
        c.expr = side;
        c.site = site(idx);
        c.taken = true;
        c.kind = PathConstraint::Kind::Intrinsic;
        c.frame_serial = machine_.frame().serial;
        add_constraint(std::move(c));
      }
    } else if (ins.op == Opcode::Intrin) {
      sym_.regs[0] = nullptr;
    }
  }
  result_.stats.steps = machine_.state().steps;
}

std::optional<sym::SolveOptions> Engine::reserve_budget() {
  std::lock_guard lock(out_mu_);
  const double remaining = budget_.total_seconds - solver_used_;
  if (remaining <= 0) return std::nullopt;
  sym::SolveOptions o;
  o.per_query = std::chrono::duration<double>(std::min(budget_.per_query_seconds, remaining));
  o.deadline = SteadyClock::now() + std::chrono::duration_cast<SteadyClock::duration>(
                                        std::chrono::duration<double>(remaining));
  o.seed = options_.rng_seed;
  return o;
}

void Engine::charge(double seconds) {
  std::lock_guard lock(out_mu_);
  solver_used_ += seconds;
}

JobOutput Engine::execute(Job& job) {
  JobOutput out;
  auto opts = reserve_budget();
  if (!opts || (options_.cancel && options_.cancel->load(std::memory_order_relaxed))) {
    std::lock_guard lock(out_mu_);
    ++skipped_;
    return out;
  }
  const auto started = SteadyClock::now();
  InvertStats st;
  switch (job.kind) {
    case Job::Kind::Invert:
    case Job::Kind::Case: {
      InvertOptions io;
      io.solve = *opts;
      io.context = job.context;
      out.seeds = solve_goal(job.sliced, job.target, job.goal, input_, io, &st);
      break;
    }
    case Job::Kind::Address: {
      auto so = *opts;
      so.per_query = std::min(so.per_query, std::chrono::duration<double>(options_.address.query_seconds));
      std::size_t used;
      {
        std::lock_guard lock(out_mu_);
        used = address_models_;
      }
      const auto before = used;
      for (auto& s : fuzz_symbolic_address(job.goal, job.sliced, input_, options_.address, so, used)) {
        out.seeds.push_back({std::move(s), Candidate::Kind::Exact});
      }
      std::lock_guard lock(out_mu_);
      address_models_ += used - before;
      break;
    }
    case Job::Kind::Check: {
      sym::SolveResult last;
      secpred::CheckContext ctx{job.sliced, input_, *opts, &last};
      out.finding = secpred::check_predicate(job.finding, job.goal, job.loc, ctx);
      st.queries = 1;
      if (last.verdict == sym::Verdict::Unknown) st.timeouts = 1;
      if (out.finding) {
        out.finding->sink_loc = job.sink_loc;
        out.finding->signedness = job.signedness;
        out.finding->source_index = job.source_index;
      }
      break;
    }
  }
  const double took = seconds_since(started);
  charge(took);
  std::lock_guard lock(out_mu_);
  queries_ += st.queries;
  timeouts_ += st.timeouts;
  max_query_ = std::max(max_query_, st.queries == 1 ? took : 0.0);
  return out;
}

void Engine::worker() {
  Job job;
  while (queue_.pop(job)) {
    auto out = execute(job);
    {
      std::lock_guard lock(out_mu_);
      outputs_.emplace_back(job.seq, std::move(out));
    }
    queue_.done();
  }
}

RunResult Engine::run() {
  const auto started = SteadyClock::now();
  std::vector<std::jthread> workers;
  for (unsigned i = 0; i < std::max(1u, budget_.solver_threads); ++i) workers.emplace_back([this] { worker(); });
  trace();
  queue_.close();
  workers.clear();  // joins after the queue drains

  result_.exec = machine_.finish();
  std::sort(outputs_.begin(), outputs_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::set<Bytes> seen{input_};
  for (auto& [seq, out] : outputs_) {
    bool produced = false;
    for (auto& cand : out.seeds) {
      if (!seen.insert(cand.seed).second) continue;
      produced = true;
      if (cand.kind == Candidate::Kind::Optimistic) ++result_.stats.optimistic_seeds;
      if (cand.kind == Candidate::Kind::StrongOptimistic) ++result_.stats.strong_optimistic_seeds;
      result_.seed_kinds.push_back(cand.kind);
      result_.new_seeds.push_back(std::move(cand.seed));
    }
    if (produced) ++result_.stats.branches_inverted;
    if (out.finding) result_.findings.push_back(std::move(*out.finding));
  }
  auto& st = result_.stats;
  st.seeds_generated = result_.new_seeds.size();
  st.findings = result_.findings.size();
  st.jobs = next_job_;
  st.jobs_skipped = skipped_;
  st.solver_queries = queries_;
  st.timeouts = timeouts_;
  st.solver_seconds = solver_used_;
  st.max_query_seconds = max_query_;
  st.address_models = address_models_;
  st.run_seconds = seconds_since(started);
  if (options_.keep_predicate) result_.predicate = predicate_;
  return std::move(result_);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> RunStats::entries() const {
  auto n = [](auto v) { return std::to_string(v); };
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  return {
      {"seeds_generated", n(seeds_generated)},
      {"branches_seen", n(branches_seen)},
      {"branches_inverted", n(branches_inverted)},
      {"optimistic_seeds", n(optimistic_seeds)},
      {"timeouts", n(timeouts)},
      {"suspensions", n(suspensions)},
      {"strong_optimistic_seeds", n(strong_optimistic_seeds)},
      {"jobs", n(jobs)},
      {"jobs_skipped", n(jobs_skipped)},
      {"solver_queries", n(solver_queries)},
      {"max_pending", n(max_pending)},
      {"address_models", n(address_models)},
      {"findings", n(findings)},
      {"constraints", n(constraints)},
      {"steps", n(steps)},
      {"aborted_time", n(aborted_time ? 1 : 0)},
      {"aborted_memory", n(aborted_memory ? 1 : 0)},
      {"cancelled", n(cancelled ? 1 : 0)},
      {"solver_seconds", f(solver_seconds)},
      {"max_query_seconds", f(max_query_seconds)},
      {"run_seconds", f(run_seconds)},
  };
}

std::string RunStats::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + "=" + v + "\n";
  return out;
}

RunResult run_concolic(const vm::Program& program, std::span<const std::uint8_t> input, InversionCache& cache,
                       const SolveBudget& budget, const Modes& modes, const RunOptions& options) {
  Engine engine(program, input, cache, budget, modes, options);
  return engine.run();
}

// ---------------------------------------------------------------------------

Expr SymState::reg_or_const(const vm::Machine& m, int r) const {
  return regs[r] ? regs[r] : c64(m.state().regs[r]);
}

Expr SymState::byte_or_const(const vm::Machine& m, std::uint64_t addr) const {
  auto it = memory.find(addr);
  return it != memory.end() ? it->second : constant(m.peek_byte(addr), 8);
}

Expr SymState::read(const vm::Machine& m, std::uint64_t addr, unsigned width) const {
  bool any = false;
  for (unsigned i = 0; i < width; ++i) any = any || memory.count(addr + i);
  if (!any) return nullptr;
  Expr v = byte_or_const(m, addr + width - 1);
  for (unsigned i = width - 1; i-- > 0;) v = concat(v, byte_or_const(m, addr + i));
  return zext(v, 64);
}

void SymState::write(std::uint64_t addr, const Expr& value, unsigned width) {
  for (unsigned i = 0; i < width; ++i) {
    if (value) {
      auto b = extract(value, 8 * i + 7, 8 * i);
      if (b->symbolic()) {
        memory[addr + i] = std::move(b);
        continue;
      }
    }
    memory.erase(addr + i);
  }
}

std::vector<Bytes> fuzz_symbolic_address(const Expr& addr, std::span<const PathConstraint> sliced,
                                         std::span<const std::uint8_t> base_input, const AddressLimits& limits,
                                         const sym::SolveOptions& solve_opts, std::size_t& run_models) {
  std::vector<Bytes> out;
  if (!addr->symbolic() || run_models >= limits.per_run || limits.per_address == 0) return out;
  std::vector<Expr> base;
  for (const auto& c : sliced) base.push_back(c.expr);
  auto opts = solve_opts;
  opts.hint = base_input;
  auto query = [&](std::vector<Expr> extra) -> std::optional<Bytes> {
    auto conj = base;
    for (auto& e : extra) conj.push_back(std::move(e));
    auto r = solve(conj, opts);
    if (r.verdict != Verdict::Sat) return std::nullopt;
    return apply_model(base_input, r.model);
  };
  auto value_of = [&](const Bytes& seed) { return evaluate(addr, seed); };

  auto first = query({});
  if (!first) return out;
  // Binary search for the extreme feasible addresses.
  auto extreme = [&](bool lowest) {
    Bytes best = *first;
    std::uint64_t lo = 0, hi = ~0ULL;
    if (lowest) hi = value_of(best);
    else lo = value_of(best);
    while (lo < hi) {
      const std::uint64_t mid = lowest ? lo + (hi - lo) / 2 : hi - (hi - lo) / 2;
      auto s = query({compare(lowest ? Op::Ule : Op::Uge, addr, c64(mid))});
      if (s) {
        best = *s;
        if (lowest) hi = value_of(best);
        else lo = value_of(best);
      } else if (lowest) {
        lo = mid + 1;
      } else {
        hi = mid - 1;
      }
    }
    return best;
  };
  std::vector<std::uint64_t> seen;
  auto emit = [&](Bytes seed) {
    if (out.size() >= limits.per_address || run_models >= limits.per_run) return false;
    const auto v = value_of(seed);
    if (std::find(seen.begin(), seen.end(), v) != seen.end()) return true;
    seen.push_back(v);
    out.push_back(std::move(seed));
    ++run_models;
    return true;
  };
  const Bytes lowest = extreme(true);
  const Bytes highest = extreme(false);
  const std::uint64_t min = value_of(lowest), max = value_of(highest);
  if (!emit(lowest) || !emit(highest)) return out;
  const std::uint64_t span = max - min;
  for (std::size_t k = 1; out.size() < limits.per_address && run_models < limits.per_run && k < 4 * limits.per_address;
       ++k) {
    const std::uint64_t t = min + static_cast<std::uint64_t>(static_cast<long double>(span) * k / limits.per_address);
    std::vector<Expr> extra{compare(Op::Uge, addr, c64(t))};
    for (auto v : seen) extra.push_back(compare(Op::Ne, addr, c64(v)));
    auto s = query(extra);
    if (!s) {
      // Nothing new above t; look anywhere else.
      extra.erase(extra.begin());
      s = query(extra);
      if (!s) break;
    }
    emit(std::move(*s));
  }
  return out;
}

std::optional<Expr> read_symbolic_memory(const Expr& addr, const vm::MemoryObject& region, const SymState& sym,
                                         const vm::Machine& m, unsigned width, std::uint64_t cap) {
  if (region.size > cap || region.size == 0) return std::nullopt;
  std::vector<Expr> cells;
  cells.reserve(region.size);
  for (std::uint64_t i = 0; i < region.size; ++i) cells.push_back(sym.byte_or_const(m, region.base + i));
  const auto id = static_cast<std::uint32_t>(Fnv1a{}.u64(region.base).value());
  Expr v;
  for (unsigned i = width; i-- > 0;) {
    auto b = select(id, region.base, add(addr, c64(i)), cells);
    v = v ? concat(v, b) : b;
  }
  return zext(v, 64);
}

std::optional<IntrinsicSummary> intrinsic_summary(vm::Intrinsic id, const SymState& sym, const vm::Machine& m) {
  const auto& regs = m.state().regs;
  constexpr std::uint64_t kMaxBytes = 1u << 16;
  if (id == vm::Intrinsic::CmpMem) {
    if (sym.regs[0] || sym.regs[1] || sym.regs[2]) return std::nullopt;
    const auto a = regs[0], b = regs[1], n = std::min<std::uint64_t>(regs[2], kMaxBytes);
    bool any = false;
    for (std::uint64_t k = 0; k < n && !any; ++k) any = sym.memory.count(a + k) || sym.memory.count(b + k);
    if (!any) return std::nullopt;
    std::vector<Expr> eqs;
    for (std::uint64_t k = 0; k < n; ++k) eqs.push_back(eq(sym.byte_or_const(m, a + k), sym.byte_or_const(m, b + k)));
    return IntrinsicSummary{zext(all_of(eqs), 64), {}};
  }
  if (sym.regs[0] || sym.regs[1]) return std::nullopt;
  const auto p = regs[0], n = std::min<std::uint64_t>(regs[1], kMaxBytes);
  bool any = false;
  for (std::uint64_t k = 0; k < std::min<std::uint64_t>(n, kParseIntSymbolicBytes + 1) && !any; ++k) {
    any = sym.memory.count(p + k);
  }
  if (!any) return std::nullopt;
  auto is_digit = [](const Expr& b) { return compare(Op::Ule, sub(b, constant('0', 8)), constant(9, 8)); };
  std::uint64_t prefix = 0;
  while (prefix < n) {
    const auto c = m.peek_byte(p + prefix);
    if (c < '0' || c > '9') break;
    ++prefix;
  }
  const std::uint64_t window = std::min<std::uint64_t>(n, kParseIntSymbolicBytes);
  if (n <= kParseIntSymbolicBytes || prefix < window) {
    // value_{k+1} = stopped_k ? value_k : value_k * 10 + digit_k
    Expr value = c64(0);
    Expr stopped = bool_const(false);
    for (std::uint64_t k = 0; k < window; ++k) {
      const auto b = sym.byte_or_const(m, p + k);
      stopped = lor(stopped, lnot(is_digit(b)));
      const auto next = add(binary(Op::Mul, value, c64(10)), zext(sub(b, constant('0', 8)), 64));
      value = ite(stopped, value, next);
    }
    return IntrinsicSummary{value, {}};
  }
  // Digit run longer than the modeled window: keep the concrete value and pin
  // the prefix length.
  std::uint64_t v = 0;
  for (std::uint64_t k = 0; k < prefix; ++k) v = v * 10 + (m.peek_byte(p + k) - '0');
  IntrinsicSummary s{c64(v), {}};
  for (std::uint64_t k = 0; k < prefix; ++k) {
    const auto b = sym.byte_or_const(m, p + k);
    s.side_conditions.push_back(eq(b, constant(m.peek_byte(p + k), 8)));
  }
  if (prefix < n) s.side_conditions.push_back(lnot(is_digit(sym.byte_or_const(m, p + prefix))));
  return s;
}

}  // namespace hfz::concolic
