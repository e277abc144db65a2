#include "hfz/vm/machine.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace hfz::vm {
namespace {

constexpr std::array<std::string_view, kNumCrashKinds> kCrashNames = {
    "DivByZero", "NullDeref", "OobHeapRead", "OobHeapWrite", "OobStackRead",
    "OobStackWrite", "UnmappedAccess", "DoubleFree", "StackExhaustion",
};

constexpr std::uint64_t kMaxIntrinsicBytes = 1u << 16;

DiagKind diag_for_crash(CrashKind kind, bool write) {
  switch (kind) {
    case CrashKind::DivByZero: return DiagKind::DivByZero;
    case CrashKind::NullDeref: return DiagKind::NullDeref;
    case CrashKind::OobHeapRead:
    case CrashKind::OobStackRead: return DiagKind::OobRead;
    case CrashKind::OobHeapWrite:
    case CrashKind::OobStackWrite:
    case CrashKind::DoubleFree:
    case CrashKind::StackExhaustion: return DiagKind::OobWrite;
    case CrashKind::UnmappedAccess: return write ? DiagKind::OobWrite : DiagKind::OobRead;
  }
  return DiagKind::OobRead;
}

bool in_stack_region(std::uint64_t addr) { return addr >= kStackBase && addr < kStackTop; }
bool in_heap_region(std::uint64_t addr) { return addr >= kHeapBase && addr < kHeapLimit; }

}  // namespace

std::string_view crash_kind_name(CrashKind kind) { return kCrashNames[static_cast<std::size_t>(kind)]; }

std::optional<CrashKind> crash_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kCrashNames.size(); ++i) {
    if (kCrashNames[i] == name) return static_cast<CrashKind>(i);
  }
  return std::nullopt;
}

std::string_view diag_kind_name(DiagKind kind) {
  switch (kind) {
    case DiagKind::IntOverflow: return "IntOverflow";
    case DiagKind::OobRead: return "OobRead";
    case DiagKind::OobWrite: return "OobWrite";
    case DiagKind::NullDeref: return "NullDeref";
    case DiagKind::DivByZero: return "DivByZero";
  }
  return "?";
}

std::vector<MemoryObject> stack_regions(const ExecState& state) {
  std::vector<MemoryObject> out;
  const auto& stack = state.call_stack;
  for (std::size_t k = 0; k < stack.size(); ++k) {
    const std::uint64_t hi = stack[k].base;
    const std::uint64_t lo = k + 1 < stack.size() ? stack[k + 1].base + kReturnSlot : state.regs[kStackPointer];
    if (lo < hi) out.push_back({MemoryObject::Kind::StackFrame, lo, hi - lo});
  }
  return out;
}

std::optional<MemoryObject> enclosing_object(const ExecState& state, std::uint64_t addr) {
  if (in_heap_region(addr)) {
    auto find_in = [addr](const std::map<std::uint64_t, std::uint64_t>& objs) -> std::optional<std::pair<std::uint64_t, std::uint64_t>> {
      auto it = objs.upper_bound(addr);
      if (it == objs.begin()) return std::nullopt;
      --it;
      if (addr < it->first + std::max<std::uint64_t>(it->second, 1)) return *it;
      return std::nullopt;
    };
    if (auto live = find_in(state.heap_objects)) return MemoryObject{MemoryObject::Kind::Heap, live->first, live->second};
    if (auto dead = find_in(state.freed_objects)) return MemoryObject{MemoryObject::Kind::FreedHeap, dead->first, dead->second};
    return std::nullopt;
  }
  if (in_stack_region(addr)) {
    for (const auto& region : stack_regions(state)) {
      if (addr >= region.base && addr < region.end()) return region;
    }
  }
  return std::nullopt;
}

std::optional<CrashKind> classify_access(const ExecState& state, std::uint64_t addr, unsigned width, bool write) {
  if (addr < kNullLimit) return CrashKind::NullDeref;
  if (addr > std::numeric_limits<std::uint64_t>::max() - width) return CrashKind::UnmappedAccess;
  const std::uint64_t end = addr + width;
  if (in_stack_region(addr)) {
    for (const auto& region : stack_regions(state)) {
      if (addr >= region.base && end <= region.end()) return std::nullopt;
    }
    return write ? CrashKind::OobStackWrite : CrashKind::OobStackRead;
  }
  if (in_heap_region(addr)) {
    auto it = state.heap_objects.upper_bound(addr);
    if (it != state.heap_objects.begin()) {
      --it;
      if (addr >= it->first && end <= it->first + it->second) return std::nullopt;
    }
    return write ? CrashKind::OobHeapWrite : CrashKind::OobHeapRead;
  }
  return CrashKind::UnmappedAccess;
}

Machine::Machine(const Program& program, std::span<const std::uint8_t> input, ExecOptions opts)
    : program_(program), opts_(opts), hits_(kMapSize, 0) {
  state_.input.assign(input.begin(), input.end());
  state_.regs[kStackPointer] = kStackTop;
  state_.call_stack.push_back({program.entry, program.entry_index, 0, kStackTop, next_serial_++});
  if (opts_.collect_lines) executed_.assign(program.size(), false);
  pc_ = program.entry_index;
  if (program.size() == 0) {
    status_ = Status::Exited;
    return;
  }
  enter_block(pc_);
}

void Machine::enter_block(std::size_t index) {
  const auto cur = block_hash(index);
  const auto idx = edge_cell(prev_hash_, cur);
  auto& cell = hits_[idx];
  if (cell == 0) touched_.push_back(idx);
  if (cell != 0xFF) ++cell;
  prev_hash_ = cur;
}

std::uint8_t Machine::peek_byte(std::uint64_t addr) const {
  auto it = state_.memory.find(addr);
  return it == state_.memory.end() ? 0 : it->second;
}

std::uint64_t Machine::peek(std::uint64_t addr, unsigned width) const {
  std::uint64_t v = 0;
  for (unsigned i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(peek_byte(addr + i)) << (8 * i);
  return v;
}

void Machine::write_mem(std::uint64_t addr, std::uint64_t value, unsigned width) {
  for (unsigned i = 0; i < width; ++i) state_.memory[addr + i] = static_cast<std::uint8_t>(value >> (8 * i));
}

std::uint64_t Machine::value(const Operand& operand) const {
  switch (operand.kind) {
    case Operand::Kind::Reg: return state_.regs[operand.reg];
    case Operand::Kind::Imm: return static_cast<std::uint64_t>(operand.imm);
    default: return 0;
  }
}

std::uint64_t Machine::effective_address(const Operand& mem) const {
  return state_.regs[mem.reg] + static_cast<std::uint64_t>(mem.imm);
}

void Machine::diagnose(DiagKind kind, std::size_t index) {
  if (!opts_.sanitizer) return;
  const auto& loc = program_.instructions[index].loc;
  for (const auto& d : diagnostics_) {
    if (d.kind == kind && d.instr_index == index) return;
  }
  diagnostics_.push_back({kind, loc, index});
}

void Machine::crash(CrashKind kind, std::uint64_t addr, bool write) {
  status_ = Status::Crashed;
  crash_kind_ = kind;
  crash_index_ = pc_;
  crash_address_ = addr;
  crash_write_ = write;
  diagnose(diag_for_crash(kind, write), pc_);
  const auto& stack = state_.call_stack;
  crash_trace_.clear();
  const auto& loc = program_.instructions[pc_].loc;
  crash_trace_.push_back({stack.back().function, loc.file, loc.line});
  for (std::size_t k = stack.size() - 1; k > 0; --k) {
    const auto& call_loc = program_.instructions[stack[k].return_index - 1].loc;
    crash_trace_.push_back({stack[k - 1].function, call_loc.file, call_loc.line});
  }
}

bool Machine::check_access(std::uint64_t addr, unsigned width, bool write) {
  if (auto kind = classify_access(state_, addr, width, write)) {
    crash(*kind, addr, write);
    return false;
  }
  return true;
}

void Machine::do_exit(std::int64_t code) {
  status_ = Status::Exited;
  exit_code_ = code;
}

std::uint64_t Machine::arith(Opcode op, std::uint64_t a, std::uint64_t b, bool& overflow) {
  auto& f = state_.flags;
  std::uint64_t r = 0;
  overflow = false;
  switch (op) {
    case Opcode::Add:
      r = a + b;
      f.cf = r < a;
      f.of = (((a ^ r) & (b ^ r)) >> 63) != 0;
      overflow = f.cf || f.of;
      break;
    case Opcode::Sub:
    case Opcode::Cmp:
      r = a - b;
      f.cf = a < b;
      f.of = (((a ^ b) & (a ^ r)) >> 63) != 0;
      overflow = f.cf || f.of;
      break;
    case Opcode::Mul: {
      std::int64_t sr = 0;
      f.cf = __builtin_mul_overflow(a, b, &r);
      f.of = __builtin_mul_overflow(static_cast<std::int64_t>(a), static_cast<std::int64_t>(b), &sr);
      overflow = f.cf || f.of;
      break;
    }
    case Opcode::Div:
      r = a / b;
      f.cf = f.of = false;
      break;
    case Opcode::Idiv: {
      const auto sa = static_cast<std::int64_t>(a);
      const auto sb = static_cast<std::int64_t>(b);
      if (sa == std::numeric_limits<std::int64_t>::min() && sb == -1) {
        r = a;
        f.of = true;
        overflow = true;
      } else {
        r = static_cast<std::uint64_t>(sa / sb);
        f.of = false;
      }
      f.cf = false;
      break;
    }
    case Opcode::And: r = a & b; f.cf = f.of = false; break;
    case Opcode::Or: r = a | b; f.cf = f.of = false; break;
    case Opcode::Xor: r = a ^ b; f.cf = f.of = false; break;
    case Opcode::Shl: r = b >= 64 ? 0 : a << b; f.cf = f.of = false; break;
    case Opcode::Shr: r = b >= 64 ? 0 : a >> b; f.cf = f.of = false; break;
    case Opcode::Sar: {
      const auto sa = static_cast<std::int64_t>(a);
      r = static_cast<std::uint64_t>(b >= 64 ? (sa < 0 ? -1 : 0) : sa >> b);
      f.cf = f.of = false;
      break;
    }
    default: break;
  }
  f.zf = r == 0;
  f.sf = (r >> 63) != 0;
  return r;
}

bool Machine::condition(Opcode op) const {
  const auto& f = state_.flags;
  switch (op) {
    case Opcode::Je: return f.zf;
    case Opcode::Jne: return !f.zf;
    case Opcode::Jl: return f.sf != f.of;
    case Opcode::Jle: return f.zf || f.sf != f.of;
    case Opcode::Jg: return !f.zf && f.sf == f.of;
    case Opcode::Jge: return f.sf == f.of;
    case Opcode::Jb: return f.cf;
    case Opcode::Jbe: return f.cf || f.zf;
    case Opcode::Ja: return !f.cf && !f.zf;
    case Opcode::Jae: return !f.cf;
    default: return true;
  }
}

Machine::Status Machine::step() {
  if (status_ != Status::Running) return status_;
  if (pc_ >= program_.size()) {
    do_exit(0);
    return status_;
  }
  if (state_.steps >= opts_.step_budget) {
    status_ = Status::StepLimit;
    return status_;
  }
  ++state_.steps;
  const std::size_t idx = pc_;
  const Instruction& ins = program_.instructions[idx];
  if (opts_.collect_lines) executed_[idx] = true;
  auto& regs = state_.regs;
  std::size_t next = idx + 1;
  const auto& o0 = ins.operands[0];
  const auto& o1 = ins.operands[1];
  const auto& o2 = ins.operands[2];

  switch (ins.op) {
    case Opcode::Mov: regs[o0.reg] = value(o1); break;
    case Opcode::Div:
    case Opcode::Idiv:
      if (value(o1) == 0) {
        crash(CrashKind::DivByZero);
        return status_;
      }
      [[fallthrough]];
    case Opcode::Add: case Opcode::Sub: case Opcode::Mul:
    case Opcode::And: case Opcode::Or: case Opcode::Xor:
    case Opcode::Shl: case Opcode::Shr: case Opcode::Sar: {
      bool overflow = false;
      regs[o0.reg] = arith(ins.op, regs[o0.reg], value(o1), overflow);
      if (overflow) diagnose(DiagKind::IntOverflow, idx);
      break;
    }
    case Opcode::Cmp: {
      bool overflow = false;
      arith(Opcode::Cmp, regs[o0.reg], value(o1), overflow);
      break;
    }
    case Opcode::Jmp: next = o0.target; break;
    case Opcode::Je: case Opcode::Jne: case Opcode::Jl: case Opcode::Jle:
    case Opcode::Jg: case Opcode::Jge: case Opcode::Jb: case Opcode::Jbe:
    case Opcode::Ja: case Opcode::Jae:
      if (condition(ins.op)) next = o0.target;
      break;
    case Opcode::Switch: {
      const auto v = regs[o0.reg];
      const auto count = static_cast<std::uint64_t>(o1.imm);
      if (v < count) {
        const auto entry = idx + 1 + v;
        if (opts_.collect_lines) executed_[entry] = true;
        next = program_.instructions[entry].operands[0].target;
      } else {
        next = o2.target;
      }
      break;
    }
    case Opcode::Load: {
      const unsigned width = ins.num_operands == 3 ? static_cast<unsigned>(o2.imm) : 8;
      const auto addr = effective_address(o1);
      if (!check_access(addr, width, false)) return status_;
      regs[o0.reg] = peek(addr, width);
      break;
    }
    case Opcode::Store: {
      const unsigned width = ins.num_operands == 3 ? static_cast<unsigned>(o2.imm) : 8;
      const auto addr = effective_address(o0);
      if (!check_access(addr, width, true)) return status_;
      write_mem(addr, value(o1), width);
      break;
    }
    case Opcode::Alloc: {
      const auto size = value(o1);
      const auto room = kHeapLimit - state_.heap_next;
      if (size > room || ((size + 15) & ~std::uint64_t{15}) + kHeapRedzone > room) {
        regs[o0.reg] = 0;
        break;
      }
      const auto base = state_.heap_next;
      state_.heap_objects[base] = size;
      state_.heap_next += ((size + 15) & ~std::uint64_t{15}) + kHeapRedzone;
      regs[o0.reg] = base;
      break;
    }
    case Opcode::Free: {
      const auto ptr = regs[o0.reg];
      if (ptr == 0) break;
      auto it = state_.heap_objects.find(ptr);
      if (it == state_.heap_objects.end()) {
        crash(CrashKind::DoubleFree, ptr, true);
        return status_;
      }
      state_.freed_objects.insert(*it);
      state_.heap_objects.erase(it);
      break;
    }
    case Opcode::Push: {
      const auto v = value(o0);
      const auto sp = regs[kStackPointer];
      if (sp < kStackBase + 8 || sp > kStackTop) {
        crash(CrashKind::StackExhaustion, sp - 8, true);
        return status_;
      }
      regs[kStackPointer] = sp - 8;
      if (!check_access(sp - 8, 8, true)) return status_;
      write_mem(sp - 8, v, 8);
      break;
    }
    case Opcode::Pop: {
      const auto sp = regs[kStackPointer];
      if (!check_access(sp, 8, false)) return status_;
      regs[o0.reg] = peek(sp, 8);
      regs[kStackPointer] = sp + 8;
      break;
    }
    case Opcode::Call: {
      const auto sp = regs[kStackPointer];
      if (sp < kStackBase + kReturnSlot || sp > kStackTop) {
        crash(CrashKind::StackExhaustion, sp - kReturnSlot, true);
        return status_;
      }
      regs[kStackPointer] = sp - kReturnSlot;
      state_.call_stack.push_back({o0.label, o0.target, idx + 1, sp - kReturnSlot, next_serial_++});
      next = o0.target;
      break;
    }
    case Opcode::Ret: {
      if (state_.call_stack.size() == 1) {
        do_exit(static_cast<std::int64_t>(regs[0]));
        return status_;
      }
      const auto frame = state_.call_stack.back();
      state_.call_stack.pop_back();
      regs[kStackPointer] = frame.base + kReturnSlot;
      next = frame.return_index;
      break;
    }
    case Opcode::Input: {
      const auto i = value(o1);
      regs[o0.reg] = i < state_.input.size() ? state_.input[i] : 0;
      break;
    }
    case Opcode::Len: regs[o0.reg] = state_.input.size(); break;
    case Opcode::Intrin: {
      const auto id = static_cast<Intrinsic>(o0.imm);
      if (id == Intrinsic::CmpMem) {
        const auto a = regs[0], b = regs[1];
        const auto n = std::min(regs[2], kMaxIntrinsicBytes);
        bool equal = true;
        for (std::uint64_t k = 0; k < n; ++k) {
          if (!check_access(a + k, 1, false) || !check_access(b + k, 1, false)) return status_;
          if (peek_byte(a + k) != peek_byte(b + k)) equal = false;
        }
        regs[0] = equal ? 1 : 0;
      } else {
        const auto p = regs[0];
        const auto n = std::min(regs[1], kMaxIntrinsicBytes);
        std::uint64_t v = 0;
        for (std::uint64_t k = 0; k < n; ++k) {
          if (!check_access(p + k, 1, false)) return status_;
          const auto c = peek_byte(p + k);
          if (c < '0' || c > '9') break;
          v = v * 10 + (c - '0');
        }
        regs[0] = v;
      }
      break;
    }
    case Opcode::Exit:
      do_exit(static_cast<std::int64_t>(value(o0)));
      return status_;
  }

  if (next >= program_.size()) {
    pc_ = next;
    do_exit(0);
    return status_;
  }
  if (program_.block_start[next]) enter_block(next);
  pc_ = next;
  return status_;
}

ExecResult Machine::finish() {
  ExecResult r;
  switch (status_) {
    case Status::Exited: r.outcome = Outcome::Exit; break;
    case Status::Crashed: r.outcome = Outcome::Crash; break;
    case Status::StepLimit: r.outcome = Outcome::StepLimit; break;
    case Status::Running: r.outcome = Outcome::StepLimit; break;
  }
  r.exit_code = exit_code_;
  if (status_ == Status::Crashed) {
    r.crash_kind = crash_kind_;
    r.crash_index = crash_index_;
    r.crash_loc = program_.instructions[crash_index_].loc;
    r.crash_address = crash_address_;
    r.crash_is_write = crash_write_;
    r.stack_trace = crash_trace_;
  }
  for (const auto i : touched_) r.coverage.set(i, bucketize(hits_[i]));
  r.edges = touched_;
  r.diagnostics = diagnostics_;
  r.regs = state_.regs;
  r.flags = state_.flags;
  r.steps = state_.steps;
  r.executed = executed_;
  return r;
}

ExecResult execute(const Program& program, std::span<const std::uint8_t> input, const ExecOptions& opts) {
  Machine m(program, input, opts);
  while (m.step() == Machine::Status::Running) {
  }
  return m.finish();
}

}  // namespace hfz::vm
