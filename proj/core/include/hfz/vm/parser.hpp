#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "hfz/vm/program.hpp"

namespace hfz::vm {

class ParseError : public std::runtime_error {
 public:
  enum class Kind { Syntax, UndefinedLabel, BadRegister, DuplicateLabel, MissingEntry };

  ParseError(Kind kind, std::uint32_t line, std::uint32_t column, const std::string& what);

  Kind kind() const { return kind_; }
  std::uint32_t line() const { return line_; }
  std::uint32_t column() const { return column_; }

 private:
  Kind kind_;
  std::uint32_t line_;
  std::uint32_t column_;
};

// Assembly grammar, one statement per line:
//
//   line     := [label ':'] [mnemonic [operand {',' operand}]] [';' comment]
//   operand  := 'r'0..7 | integer | label | '[' 'r'N [('+'|'-') integer] ']'
//   integer  := decimal | '-'decimal | '0x'hex
//
// `.entry name` selects the entry function (default `main`). A SWITCH
// `switch rN, count, default` must be followed by exactly `count` `jmp label`
// lines forming its dispatch table.
Program parse_program(std::string_view source, std::string file_name = "input.asm");
Program load_program(const std::filesystem::path& path);

}  // namespace hfz::vm
