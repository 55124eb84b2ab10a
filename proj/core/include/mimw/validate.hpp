#pragma once

#include <string>
#include <vector>

#include "mimw/ir.hpp"

namespace mimw {

inline constexpr std::int64_t kDefaultSharedCapacityBytes = 232 * 1024;

struct ValidationError {
  int instr_id = -1;  // -1 for program-level violations
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationError> errors;
  bool ok() const { return errors.empty(); }
  std::string str() const;
};

ValidationReport validate(
    const KernelProgram &p,
    std::int64_t shared_capacity_bytes = kDefaultSharedCapacityBytes);

// Expands replicate(k) regions into k single-replica regions carrying
// replica ids, and renumbers all instruction ids. Run after validate.
KernelProgram expand_replicas(const KernelProgram &p);

}  // namespace mimw
