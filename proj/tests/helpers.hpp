#pragma once

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mimw/case.hpp"
#include "mimw/oracles.hpp"
#include "mimw/pipeline.hpp"
#include "mimw/print.hpp"
#include "mimw/sim.hpp"

namespace mimw::test {

inline std::string slurp(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string kernels_dir() { return MIMW_KERNELS_DIR; }
inline std::string golden_dir() { return MIMW_GOLDEN_DIR; }

// Runs the full pass pipeline on a source string and throws on diagnostics.
inline KernelProgram compile(const std::string &source) {
  auto res = run_pipeline(source, {});
  if (!res.ok) throw std::runtime_error("pipeline failed:\n" + res.errors);
  return *res.program;
}

inline KernelProgram compile_file(const std::string &name) {
  return compile(slurp(kernels_dir() + "/" + name));
}

// Deletes the n-th barrier_wait (0-based, program order) from every body.
// Returns the number of barrier_wait instructions found before deletion.
inline int delete_nth_barrier_wait(KernelProgram &p, int n) {
  int seen = 0;
  std::function<void(std::vector<Instruction> &)> walk =
      [&](std::vector<Instruction> &body) {
        for (size_t i = 0; i < body.size(); ++i) {
          if (body[i].op == Opcode::BarrierWait) {
            if (seen == n) body.erase(body.begin() + static_cast<long>(i--));
            ++seen;
            continue;
          }
          walk(body[i].body);
          walk(body[i].else_body);
        }
      };
  walk(p.prologue);
  for (auto &t : p.tasks) walk(t.body);
  return seen;
}

inline int count_barrier_waits(const KernelProgram &p) {
  int n = 0;
  for_each_instruction(p, [&](const Instruction &ins) {
    if (ins.op == Opcode::BarrierWait) ++n;
  });
  return n;
}

// Minimal persistent CLC kernel: every CTA loops issuing one request and
// consuming one response per round until it observes the -1 sentinel.
inline std::string clc_sweep_source(int tiles, int ctas, int stages) {
  return "kernel clc_sweep grid(" + std::to_string(ctas) +
         " 1 1) cluster(1 1 1) warps(4) tiles(" + std::to_string(tiles) +
         ")\n"
         "prologue {\n"
         "  %ctx = clc_context stages(" +
         std::to_string(stages) +
         ") consumers(1)\n"
         "  %one = const 1\n"
         "  %zero = const 0\n"
         "}\n"
         "task default {\n"
         "  %run = copy %one\n"
         "  while %run {\n"
         "    clc_producer %ctx\n"
         "    %tile = clc_consumer %ctx\n"
         "    %stop = eq %tile -1\n"
         "    if %stop {\n"
         "      %run = copy %zero\n"
         "    }\n"
         "  }\n"
         "}\n";
}

// Generated multicast kernel: rank 0 async-copies one 64-element tile of x
// into every CTA's shared ring slot in a single multicast issue; each CTA
// then stores its copy to its own slice of y.
inline std::string multicast_source(int k) {
  std::string ranks;
  for (int r = 0; r < k; ++r) ranks += (r ? " " : "") + std::to_string(r);
  return "kernel mc grid(" + std::to_string(k) + " 1 1) cluster(" +
         std::to_string(k) +
         " 1 1) warps(4) tiles(1)\n"
         "param in x shape(64)\n"
         "param out y shape(" +
         std::to_string(64 * k) +
         ")\n"
         "buffer xb shape(64) f32 stages(1) storage(smem_cluster)\n"
         "barrier full count(1) arrive(1)\n"
         "prologue {\n  %rank = cta_rank\n}\n"
         "task default {\n"
         "  barrier_expect full[0] bytes(256)\n"
         "  barrier_arrive full[0]\n"
         "  %is0 = eq %rank 0\n"
         "  if %is0 {\n"
         "    %v = view xb stage(0)\n"
         "    async_copy x %v full[0] offset(0) multicast(" +
         ranks +
         ")\n"
         "  }\n"
         "  barrier_wait full[0] phase(0)\n"
         "  %v2 = view xb stage(0)\n"
         "  %t = local_load %v2\n"
         "  %off = mul %rank 64\n"
         "  global_store y %t offset(%off)\n"
         "}\n";
}

// Two-CTA collective dot: each rank contributes its 16-row slice of A and
// receives its slice of the product.
inline const char *kCollectiveDot =
    R"(kernel coll grid(2 1 1) cluster(2 1 1) warps(4) tiles(1)
param in a shape(32 16)
param in b shape(16 24)
param out c shape(32 24)
prologue {
  %rank = cta_rank
}
task default {
  %moff = mul %rank 16
  %af = global_load a shape(16 16) offset(%moff 0)
  %bf = global_load b shape(16 24) offset(0 0)
  %acc = splat 0 shape(16 24)
  %r = collective_dot %af %bf %acc group(0 1) axis(0)
  global_store c %r offset(%moff 0)
}
)";

// Same collective, but only rank 0 ever issues it.
inline const char *kCollectiveDotOneSided =
    R"(kernel coll1 grid(2 1 1) cluster(2 1 1) warps(4) tiles(1)
param in a shape(32 16)
param in b shape(16 24)
param out c shape(32 24)
prologue {
  %rank = cta_rank
}
task default {
  %is0 = eq %rank 0
  if %is0 {
    %af = global_load a shape(16 16) offset(0 0)
    %bf = global_load b shape(16 24) offset(0 0)
    %acc = splat 0 shape(16 24)
    %r = collective_dot %af %bf %acc group(0 1) axis(0)
    global_store c %r offset(0 0)
  }
}
)";

}  // namespace mimw::test
