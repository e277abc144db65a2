#include "hfz/vm/parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "hfz/common/fs.hpp"

namespace hfz::vm {

ParseError::ParseError(Kind kind, std::uint32_t line, std::uint32_t column, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
      kind_(kind),
      line_(line),
      column_(column) {}

namespace {

constexpr unsigned kR = 1, kI = 2, kL = 4, kM = 8, kN = 16;

struct Signature {
  std::uint8_t min_ops;
  std::uint8_t max_ops;
  std::array<unsigned, 3> allowed;
};

Signature signature(Opcode op) {
  switch (op) {
    case Opcode::Mov: case Opcode::Add: case Opcode::Sub: case Opcode::Mul:
    case Opcode::Div: case Opcode::Idiv: case Opcode::And: case Opcode::Or:
    case Opcode::Xor: case Opcode::Shl: case Opcode::Shr: case Opcode::Sar:
    case Opcode::Cmp: case Opcode::Alloc: case Opcode::Input:
      return {2, 2, {kR, kR | kI, 0}};
    case Opcode::Jmp: case Opcode::Je: case Opcode::Jne: case Opcode::Jl:
    case Opcode::Jle: case Opcode::Jg: case Opcode::Jge: case Opcode::Jb:
    case Opcode::Jbe: case Opcode::Ja: case Opcode::Jae: case Opcode::Call:
      return {1, 1, {kL, 0, 0}};
    case Opcode::Switch: return {3, 3, {kR, kI, kL}};
    case Opcode::Load: return {2, 3, {kR, kM, kI}};
    case Opcode::Store: return {2, 3, {kM, kR | kI, kI}};
    case Opcode::Free: case Opcode::Pop: case Opcode::Len: return {1, 1, {kR, 0, 0}};
    case Opcode::Push: case Opcode::Exit: return {1, 1, {kR | kI, 0, 0}};
    case Opcode::Ret: return {0, 0, {0, 0, 0}};
    case Opcode::Intrin: return {1, 1, {kN, 0, 0}};
  }
  return {0, 0, {0, 0, 0}};
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

struct Token {
  std::string_view text;
  std::uint32_t column;
};

class LineParser {
 public:
  LineParser(std::string_view text, std::uint32_t line) : text_(text), line_(line) {}

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r')) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }
  std::uint32_t column() const { return static_cast<std::uint32_t>(pos_ + 1); }
  char peek() { skip_ws(); return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  bool accept(char c) {
    if (peek() != c) return false;
    ++pos_;
    return true;
  }

  Token ident() {
    skip_ws();
    const auto start = pos_;
    if (pos_ >= text_.size() || !is_ident_start(text_[pos_])) fail("expected identifier");
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    return {text_.substr(start, pos_ - start), static_cast<std::uint32_t>(start + 1)};
  }

  std::int64_t integer() {
    skip_ws();
    const auto start = pos_;
    bool neg = false;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) {
      neg = text_[pos_] == '-';
      ++pos_;
    }
    int base = 10;
    if (pos_ + 1 < text_.size() && text_[pos_] == '0' && (text_[pos_ + 1] == 'x' || text_[pos_ + 1] == 'X')) {
      base = 16;
      pos_ += 2;
    }
    std::uint64_t value = 0;
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    auto [ptr, ec] = std::from_chars(first, last, value, base);
    if (ec != std::errc() || ptr == first) {
      pos_ = start;
      fail("bad integer literal");
    }
    pos_ += static_cast<std::size_t>(ptr - first);
    if (pos_ < text_.size() && is_ident_char(text_[pos_])) fail("bad integer literal");
    return neg ? static_cast<std::int64_t>(0 - value) : static_cast<std::int64_t>(value);
  }

  [[noreturn]] void fail(const std::string& msg, ParseError::Kind kind = ParseError::Kind::Syntax) {
    throw ParseError(kind, line_, column(), msg);
  }
  [[noreturn]] void fail_at(std::uint32_t col, const std::string& msg, ParseError::Kind kind) {
    throw ParseError(kind, line_, col, msg);
  }

  std::size_t pos_ = 0;
  std::string_view text_;
  std::uint32_t line_;
};

// Returns a register index for tokens shaped like r<digits> (or sp), -1 for
// other identifiers.
int register_index(LineParser& lp, const Token& tok) {
  const auto t = lower(tok.text);
  if (t == "sp") return kStackPointer;
  if (t.size() >= 2 && t[0] == 'r' &&
      std::all_of(t.begin() + 1, t.end(), [](unsigned char c) { return std::isdigit(c); })) {
    int idx = 0;
    std::from_chars(t.data() + 1, t.data() + t.size(), idx);
    if (t.size() > 3 || idx >= kNumRegs) {
      lp.fail_at(tok.column, "bad register '" + std::string(tok.text) + "'", ParseError::Kind::BadRegister);
    }
    return idx;
  }
  return -1;
}

struct RawOperand {
  Operand op;
  unsigned cls;
  std::uint32_t column;
};

RawOperand parse_operand(LineParser& lp) {
  const char c = lp.peek();
  const auto col = lp.column();
  if (c == '[') {
    lp.expect('[');
    const auto tok = lp.ident();
    const int reg = register_index(lp, tok);
    if (reg < 0) lp.fail_at(tok.column, "memory operand needs a base register", ParseError::Kind::Syntax);
    std::int64_t disp = 0;
    if (lp.peek() == '+' || lp.peek() == '-') {
      const bool neg = lp.peek() == '-';
      ++lp.pos_;
      disp = lp.integer();
      if (neg) disp = -disp;
    }
    lp.expect(']');
    return {Operand::make_mem(reg, disp), kM, col};
  }
  if (c == '-' || c == '+' || std::isdigit(static_cast<unsigned char>(c))) {
    return {Operand::make_imm(lp.integer()), kI, col};
  }
  const auto tok = lp.ident();
  const int reg = register_index(lp, tok);
  if (reg >= 0) return {Operand::make_reg(reg), kR, col};
  return {Operand::make_label(std::string(tok.text)), kL | kN, col};
}

struct PendingRef {
  std::size_t instr;
  std::size_t operand;
  std::uint32_t line;
  std::uint32_t column;
};

void compute_blocks(Program& p) {
  const auto n = p.instructions.size();
  p.block_start.assign(n, false);
  if (n == 0) return;
  p.block_start[0] = true;
  for (const auto& [name, idx] : p.labels) {
    if (idx < n) p.block_start[idx] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (is_control_transfer(p.instructions[i].op) && i + 1 < n) p.block_start[i + 1] = true;
  }
  p.block_of.assign(n, 0);
  p.blocks.clear();
  std::size_t current = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p.block_start[i]) {
      current = i;
      p.blocks.push_back(i);
    }
    p.block_of[i] = current;
  }
}

}  // namespace

Program parse_program(std::string_view source, std::string file_name) {
  Program prog;
  prog.file = std::move(file_name);
  std::vector<PendingRef> refs;
  std::map<std::string, std::uint32_t> label_lines;
  std::optional<std::pair<std::string, std::uint32_t>> entry_directive;
  struct SwitchCheck { std::size_t instr; std::int64_t count; std::uint32_t line; };
  std::vector<SwitchCheck> switches;

  std::uint32_t line_no = 0;
  std::size_t start = 0;
  while (start <= source.size()) {
    auto end = source.find('\n', start);
    if (end == std::string_view::npos) end = source.size();
    std::string_view raw = source.substr(start, end - start);
    ++line_no;
    prog.source_lines.emplace_back(raw);
    if (!raw.empty() && raw.back() == '\r') prog.source_lines.back().pop_back();

    std::string_view text = raw;
    if (auto semi = text.find(';'); semi != std::string_view::npos) text = text.substr(0, semi);
    LineParser lp(text, line_no);

    if (!lp.at_end()) {
      if (lp.peek() == '.') {
        const auto directive = lp.ident();
        if (lower(directive.text) != ".entry") {
          lp.fail_at(directive.column, "unknown directive '" + std::string(directive.text) + "'",
                     ParseError::Kind::Syntax);
        }
        const auto name = lp.ident();
        entry_directive = {std::string(name.text), name.column};
        if (!lp.at_end()) lp.fail("trailing characters");
      } else {
        auto tok = lp.ident();
        if (lp.accept(':')) {
          const std::string name(tok.text);
          if (register_index(lp, tok) >= 0) {
            lp.fail_at(tok.column, "register name used as label", ParseError::Kind::Syntax);
          }
          if (prog.labels.count(name)) {
            lp.fail_at(tok.column, "duplicate label '" + name + "'", ParseError::Kind::DuplicateLabel);
          }
          prog.labels[name] = prog.instructions.size();
          label_lines[name] = line_no;
          if (!lp.at_end()) tok = lp.ident();
          else tok = Token{};
        }
        if (!tok.text.empty()) {
          const auto op = opcode_from_mnemonic(lower(tok.text));
          if (!op) {
            lp.fail_at(tok.column, "unknown mnemonic '" + std::string(tok.text) + "'", ParseError::Kind::Syntax);
          }
          Instruction ins;
          ins.op = *op;
          ins.loc = SourceLoc{prog.file, line_no, tok.column};
          const auto sig = signature(*op);
          std::vector<RawOperand> ops;
          if (!lp.at_end()) {
            do {
              if (ops.size() == 3) lp.fail("too many operands");
              ops.push_back(parse_operand(lp));
            } while (lp.accept(','));
            if (!lp.at_end()) lp.fail("unexpected characters after operands");
          }
          if (ops.size() < sig.min_ops || ops.size() > sig.max_ops) {
            lp.fail_at(tok.column, "wrong operand count for '" + std::string(mnemonic(*op)) + "'",
                       ParseError::Kind::Syntax);
          }
          for (std::size_t i = 0; i < ops.size(); ++i) {
            if ((ops[i].cls & sig.allowed[i]) == 0) {
              lp.fail_at(ops[i].column, "operand " + std::to_string(i + 1) + " has the wrong kind",
                         ParseError::Kind::Syntax);
            }
            ins.operands[i] = ops[i].op;
            if (ops[i].op.kind == Operand::Kind::Label && sig.allowed[i] == kN) {
              Intrinsic id;
              const auto name = lower(ins.operands[i].label);
              if (name == "cmpmem") id = Intrinsic::CmpMem;
              else if (name == "parseint") id = Intrinsic::ParseInt;
              else lp.fail_at(ops[i].column, "unknown intrinsic '" + name + "'", ParseError::Kind::Syntax);
              ins.operands[i] = Operand::make_imm(static_cast<std::int64_t>(id));
            } else if (ops[i].op.kind == Operand::Kind::Label) {
              refs.push_back({prog.instructions.size(), i, line_no, ops[i].column});
            }
          }
          ins.num_operands = static_cast<std::uint8_t>(ops.size());
          if ((*op == Opcode::Load || *op == Opcode::Store) && ops.size() == 3) {
            const auto w = ins.operands[2].imm;
            if (w != 1 && w != 2 && w != 4 && w != 8) {
              lp.fail_at(ops[2].column, "access width must be 1, 2, 4 or 8", ParseError::Kind::Syntax);
            }
          }
          if (*op == Opcode::Switch) {
            const auto count = ins.operands[1].imm;
            if (count <= 0 || count > 4096) {
              lp.fail_at(ops[1].column, "switch case count must be in 1..4096", ParseError::Kind::Syntax);
            }
            switches.push_back({prog.instructions.size(), count, line_no});
          }
          prog.instructions.push_back(std::move(ins));
        }
      }
    }
    if (end == source.size()) break;
    start = end + 1;
  }

  for (const auto& sw : switches) {
    for (std::int64_t k = 0; k < sw.count; ++k) {
      const auto idx = sw.instr + 1 + static_cast<std::size_t>(k);
      if (idx >= prog.instructions.size() || prog.instructions[idx].op != Opcode::Jmp) {
        throw ParseError(ParseError::Kind::Syntax, sw.line, 1,
                         "switch needs " + std::to_string(sw.count) + " 'jmp' table entries after it");
      }
      prog.instructions[idx].table_entry = true;
    }
  }

  for (const auto& ref : refs) {
    auto& operand = prog.instructions[ref.instr].operands[ref.operand];
    auto it = prog.labels.find(operand.label);
    if (it == prog.labels.end() || it->second >= prog.instructions.size()) {
      throw ParseError(ParseError::Kind::UndefinedLabel, ref.line, ref.column,
                       "undefined label '" + operand.label + "'");
    }
    operand.target = it->second;
  }

  if (entry_directive) prog.entry = entry_directive->first;
  auto entry = prog.labels.find(prog.entry);
  if (entry == prog.labels.end() || entry->second >= prog.instructions.size()) {
    throw ParseError(ParseError::Kind::MissingEntry, entry_directive ? line_no : 1, 1,
                     "entry label '" + prog.entry + "' is not defined");
  }
  prog.entry_index = entry->second;
  prog.functions[prog.entry] = prog.entry_index;
  for (const auto& ins : prog.instructions) {
    if (ins.op == Opcode::Call) prog.functions[ins.operands[0].label] = ins.operands[0].target;
  }
  compute_blocks(prog);
  return prog;
}

Program load_program(const std::filesystem::path& path) {
  return parse_program(fsx::read_text(path), path.filename().string());
}

}  // namespace hfz::vm
