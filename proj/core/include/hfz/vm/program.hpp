#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hfz::vm {

enum class Opcode : std::uint8_t {
  Mov, Add, Sub, Mul, Div, Idiv, And, Or, Xor, Shl, Shr, Sar, Cmp,
  Jmp, Je, Jne, Jl, Jle, Jg, Jge, Jb, Jbe, Ja, Jae, Switch,
  Load, Store, Alloc, Free, Push, Pop, Call, Ret,
  Input, Len, Intrin, Exit,
};

std::string_view mnemonic(Opcode op);
std::optional<Opcode> opcode_from_mnemonic(std::string_view name);

bool is_conditional_jump(Opcode op);
// Conditional jumps, JMP, SWITCH, CALL, RET and EXIT end a basic block.
bool is_control_transfer(Opcode op);
bool is_arithmetic(Opcode op);

enum class Intrinsic : std::uint8_t { CmpMem, ParseInt };
std::string_view intrinsic_name(Intrinsic id);

inline constexpr int kNumRegs = 8;
inline constexpr int kStackPointer = 7;

struct SourceLoc {
  std::string file;
  std::uint32_t line = 0;
  std::uint32_t column = 0;

  auto operator<=>(const SourceLoc&) const = default;
  std::string str() const;
};

struct Operand {
  enum class Kind : std::uint8_t { None, Reg, Imm, Label, Mem };

  Kind kind = Kind::None;
  std::uint8_t reg = 0;   // Reg, and the base register of Mem
  std::int64_t imm = 0;   // Imm, and the displacement of Mem
  std::string label;      // Label
  std::size_t target = 0; // resolved instruction index of Label

  static Operand make_reg(int r) { Operand o; o.kind = Kind::Reg; o.reg = static_cast<std::uint8_t>(r); return o; }
  static Operand make_imm(std::int64_t v) { Operand o; o.kind = Kind::Imm; o.imm = v; return o; }
  static Operand make_label(std::string name) { Operand o; o.kind = Kind::Label; o.label = std::move(name); return o; }
  static Operand make_mem(int base, std::int64_t disp) {
    Operand o; o.kind = Kind::Mem; o.reg = static_cast<std::uint8_t>(base); o.imm = disp; return o;
  }
};

struct Instruction {
  Opcode op = Opcode::Exit;
  std::array<Operand, 3> operands{};
  std::uint8_t num_operands = 0;
  SourceLoc loc;
  // Set on the JMP entries that follow a SWITCH; they are dispatch-table
  // data and never execute as instructions.
  bool table_entry = false;

  const Operand& operand(std::size_t i) const { return operands[i]; }
  std::string str() const;
};

struct Program {
  std::vector<Instruction> instructions;
  std::map<std::string, std::size_t> labels;
  // Function labels: the entry plus every CALL target.
  std::map<std::string, std::size_t> functions;
  std::string entry = "main";
  std::size_t entry_index = 0;

  // Basic-block structure, computed once at parse time.
  std::vector<bool> block_start;        // per instruction
  std::vector<std::size_t> block_of;    // instruction -> index of its block's first instruction
  std::vector<std::size_t> blocks;      // sorted block entry indices

  std::string file;                     // name used in SourceLoc::file
  std::vector<std::string> source_lines;

  std::size_t size() const { return instructions.size(); }
  const Instruction& at(std::size_t i) const { return instructions.at(i); }

  // Name of the function whose entry is `index`, if any.
  std::optional<std::string> function_at(std::size_t index) const;
  bool uses_input() const;
  // Source lines that carry at least one executable instruction.
  std::vector<std::uint32_t> instruction_lines() const;
};

}  // namespace hfz::vm
