#pragma once

#include <string>

#include "mimw/ir.hpp"

namespace mimw {

// Canonical textual form. Deterministic: identical programs print to
// identical bytes. `stage` names the pipeline stage that produced `p` and
// appears only in the header comment line.
std::string print_ir(const KernelProgram &p, const std::string &stage = "");

std::string print_operand(const Operand &o);
std::string print_instruction(const Instruction &ins, int indent = 0);
std::string format_number(double v);

}  // namespace mimw
