#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hfz/common/bytes.hpp"
#include "hfz/vm/coverage.hpp"
#include "hfz/vm/program.hpp"

namespace hfz::vm {

// Address space layout.
inline constexpr std::uint64_t kNullLimit = 4096;
inline constexpr std::uint64_t kStackBase = 1ULL << 32;
inline constexpr std::uint64_t kStackSize = 1ULL << 20;
inline constexpr std::uint64_t kStackTop = kStackBase + kStackSize;
inline constexpr std::uint64_t kHeapBase = 1ULL << 33;
inline constexpr std::uint64_t kHeapLimit = 1ULL << 34;
inline constexpr std::uint64_t kHeapRedzone = 16;
// Slot between a caller's frame and the callee's frame base. It holds no
// data; touching it is a stack out-of-bounds access.
inline constexpr std::uint64_t kReturnSlot = 8;

enum class CrashKind : std::uint8_t {
  DivByZero, NullDeref, OobHeapRead, OobHeapWrite, OobStackRead, OobStackWrite,
  UnmappedAccess, DoubleFree, StackExhaustion,
};
inline constexpr std::size_t kNumCrashKinds = 9;
std::string_view crash_kind_name(CrashKind kind);
std::optional<CrashKind> crash_kind_from_name(std::string_view name);

enum class DiagKind : std::uint8_t { IntOverflow, OobRead, OobWrite, NullDeref, DivByZero };
std::string_view diag_kind_name(DiagKind kind);

struct Diagnostic {
  DiagKind kind;
  SourceLoc loc;
  std::size_t instr_index = 0;
  auto operator<=>(const Diagnostic&) const = default;
};

struct Frame {
  std::string function;
  std::string file;
  std::uint32_t line = 0;
  bool operator==(const Frame&) const = default;
};

struct Flags {
  bool cf = false, of = false, zf = false, sf = false;
  bool operator==(const Flags&) const = default;
};

struct CallFrame {
  std::string function;
  std::size_t function_entry = 0;
  std::size_t return_index = 0;
  std::uint64_t base = 0;
  std::uint64_t serial = 0;  // unique per activation within one run
};

struct ExecState {
  std::array<std::uint64_t, kNumRegs> regs{};
  Flags flags;
  std::unordered_map<std::uint64_t, std::uint8_t> memory;
  std::vector<CallFrame> call_stack;
  std::map<std::uint64_t, std::uint64_t> heap_objects;   // live: base -> size
  std::map<std::uint64_t, std::uint64_t> freed_objects;  // base -> size
  Bytes input;
  std::uint64_t steps = 0;
  std::uint64_t heap_next = kHeapBase;
};

struct MemoryObject {
  enum class Kind : std::uint8_t { Heap, FreedHeap, StackFrame };
  Kind kind;
  std::uint64_t base = 0;
  std::uint64_t size = 0;
  std::uint64_t end() const { return base + size; }
};

// Valid stack regions, outermost frame first. The innermost region spans
// [sp, frame base); an outer one spans [inner base + return slot, its base).
std::vector<MemoryObject> stack_regions(const ExecState& state);
// Heap object (live or freed) or stack region containing `addr`.
std::optional<MemoryObject> enclosing_object(const ExecState& state, std::uint64_t addr);
// Trap rule for an access of `width` bytes at `addr`.
std::optional<CrashKind> classify_access(const ExecState& state, std::uint64_t addr, unsigned width, bool write);

struct ExecOptions {
  std::uint64_t step_budget = 1'000'000;
  bool sanitizer = false;
  bool collect_lines = false;
};

enum class Outcome : std::uint8_t { Exit, Crash, StepLimit };

struct ExecResult {
  Outcome outcome = Outcome::Exit;
  std::int64_t exit_code = 0;

  // Valid when outcome == Crash.
  CrashKind crash_kind = CrashKind::DivByZero;
  SourceLoc crash_loc;
  std::size_t crash_index = 0;
  std::uint64_t crash_address = 0;
  bool crash_is_write = false;
  std::vector<Frame> stack_trace;  // innermost first

  CoverageBitmap coverage;
  std::vector<std::uint16_t> edges;  // nonzero coverage cells, first-hit order
  std::vector<Diagnostic> diagnostics;  // unique per (kind, instruction), first-seen order
  std::array<std::uint64_t, kNumRegs> regs{};
  Flags flags;
  std::uint64_t steps = 0;
  std::vector<bool> executed;  // per instruction, when collect_lines is set

  bool crashed() const { return outcome == Outcome::Crash; }
  bool hung() const { return outcome == Outcome::StepLimit; }
};

// Steppable concrete executor. The concolic tracer drives it one
// instruction at a time and inspects state in between.
class Machine {
 public:
  enum class Status : std::uint8_t { Running, Exited, Crashed, StepLimit };

  Machine(const Program& program, std::span<const std::uint8_t> input, ExecOptions opts = {});

  Status step();
  Status status() const { return status_; }
  bool running() const { return status_ == Status::Running; }
  std::size_t pc() const { return pc_; }
  const ExecState& state() const { return state_; }
  const Program& program() const { return program_; }

  std::uint64_t value(const Operand& operand) const;
  std::uint64_t effective_address(const Operand& mem) const;
  // Concrete little-endian read without trap checks; unwritten bytes are 0.
  std::uint64_t peek(std::uint64_t addr, unsigned width) const;
  std::uint8_t peek_byte(std::uint64_t addr) const;
  const CallFrame& frame() const { return state_.call_stack.back(); }

  ExecResult finish();

 private:
  void enter_block(std::size_t index);
  void crash(CrashKind kind, std::uint64_t addr = 0, bool write = false);
  bool check_access(std::uint64_t addr, unsigned width, bool write);
  void diagnose(DiagKind kind, std::size_t index);
  void write_mem(std::uint64_t addr, std::uint64_t value, unsigned width);
  std::uint64_t arith(Opcode op, std::uint64_t a, std::uint64_t b, bool& overflow);
  bool condition(Opcode op) const;
  void do_exit(std::int64_t code);

  const Program& program_;
  ExecOptions opts_;
  ExecState state_;
  Status status_ = Status::Running;
  std::size_t pc_ = 0;
  std::uint16_t prev_hash_ = 0;
  std::vector<std::uint8_t> hits_;
  std::vector<std::uint16_t> touched_;
  std::vector<bool> executed_;
  std::vector<Diagnostic> diagnostics_;
  std::uint64_t next_serial_ = 0;

  std::int64_t exit_code_ = 0;
  CrashKind crash_kind_ = CrashKind::DivByZero;
  std::size_t crash_index_ = 0;
  std::uint64_t crash_address_ = 0;
  bool crash_write_ = false;
  std::vector<Frame> crash_trace_;
};

ExecResult execute(const Program& program, std::span<const std::uint8_t> input, const ExecOptions& opts = {});

}  // namespace hfz::vm
