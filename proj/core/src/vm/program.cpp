#include "hfz/vm/program.hpp"

#include <algorithm>
#include <set>

namespace hfz::vm {
namespace {

constexpr std::array<std::string_view, 37> kMnemonics = {
    "mov", "add", "sub", "mul", "div", "idiv", "and", "or", "xor", "shl", "shr", "sar", "cmp",
    "jmp", "je", "jne", "jl", "jle", "jg", "jge", "jb", "jbe", "ja", "jae", "switch",
    "load", "store", "alloc", "free", "push", "pop", "call", "ret",
    "input", "len", "intrin", "exit",
};

}  // namespace

std::string_view mnemonic(Opcode op) { return kMnemonics[static_cast<std::size_t>(op)]; }

std::optional<Opcode> opcode_from_mnemonic(std::string_view name) {
  for (std::size_t i = 0; i < kMnemonics.size(); ++i) {
    if (kMnemonics[i] == name) return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

bool is_conditional_jump(Opcode op) { return op >= Opcode::Je && op <= Opcode::Jae; }

bool is_control_transfer(Opcode op) {
  return (op >= Opcode::Jmp && op <= Opcode::Switch) || op == Opcode::Call || op == Opcode::Ret ||
         op == Opcode::Exit;
}

bool is_arithmetic(Opcode op) { return op >= Opcode::Add && op <= Opcode::Sar; }

std::string_view intrinsic_name(Intrinsic id) {
  return id == Intrinsic::CmpMem ? "cmpmem" : "parseint";
}

std::string SourceLoc::str() const {
  return file + ":" + std::to_string(line) + ":" + std::to_string(column);
}

std::string Instruction::str() const {
  std::string out(mnemonic(op));
  for (std::size_t i = 0; i < num_operands; ++i) {
    out += i == 0 ? " " : ", ";
    const auto& o = operands[i];
    switch (o.kind) {
      case Operand::Kind::Reg: out += "r" + std::to_string(o.reg); break;
      case Operand::Kind::Imm:
        if (op == Opcode::Intrin) out += intrinsic_name(static_cast<Intrinsic>(o.imm));
        else out += std::to_string(o.imm);
        break;
      case Operand::Kind::Label: out += o.label; break;
      case Operand::Kind::Mem:
        out += "[r" + std::to_string(o.reg) + (o.imm < 0 ? "-" : "+") +
               std::to_string(o.imm < 0 ? -o.imm : o.imm) + "]";
        break;
      case Operand::Kind::None: break;
    }
  }
  return out;
}

std::optional<std::string> Program::function_at(std::size_t index) const {
  for (const auto& [name, idx] : functions) {
    if (idx == index) return name;
  }
  return std::nullopt;
}

bool Program::uses_input() const {
  return std::any_of(instructions.begin(), instructions.end(), [](const Instruction& ins) {
    return ins.op == Opcode::Input || ins.op == Opcode::Len;
  });
}

std::vector<std::uint32_t> Program::instruction_lines() const {
  std::set<std::uint32_t> lines;
  for (const auto& ins : instructions) lines.insert(ins.loc.line);
  return {lines.begin(), lines.end()};
}

}  // namespace hfz::vm
