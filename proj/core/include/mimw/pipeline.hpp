#pragma once

#include <optional>
#include <string>

#include "mimw/ir.hpp"
#include "mimw/layout.hpp"

namespace mimw {

// Pass pipeline: parse -> validate -> expand replicas -> insert_constraints
// -> backward -> forward -> resolve -> legalize_cluster.
struct PipelineOptions {
  LayoutOptions layout;
  std::int64_t shared_capacity_bytes = 232 * 1024;
  // One of: parse, validate, insert, resolve, legalize (empty = no dump).
  std::string dump_after;
  bool color = false;
};

struct PipelineResult {
  bool ok = false;
  std::optional<KernelProgram> program;  // present when ok
  std::string errors;                    // rendered diagnostics
  std::string dump;                      // IR after the requested stage
};

PipelineResult run_pipeline(const std::string &source,
                            const PipelineOptions &opts = {});

}  // namespace mimw
