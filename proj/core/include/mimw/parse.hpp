#pragma once

#include <string>
#include <variant>

#include "mimw/ir.hpp"

namespace mimw {

struct ParseError {
  int line = 0;
  int col = 0;
  std::string message;

  std::string str() const {
    return "parse error at " + std::to_string(line) + ":" +
           std::to_string(col) + ": " + message;
  }
};

using ParseResult = std::variant<KernelProgram, ParseError>;

// Parses the textual kernel format. Purely structural: undeclared names,
// shape mismatches etc. are the validator's job.
ParseResult parse_kernel(const std::string &text);

// Convenience for tests/tools: throws std::runtime_error on failure.
KernelProgram parse_kernel_or_throw(const std::string &text);

}  // namespace mimw
