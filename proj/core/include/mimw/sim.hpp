#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mimw/ir.hpp"

namespace mimw {

// Dense f32 tile (also used for global tensors and simulator I/O).
struct Tile {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tile() = default;
  Tile(std::vector<std::int64_t> s, float fill = 0.0f) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(elems()), fill);
  }
  std::int64_t elems() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

struct SimConfig {
  std::uint64_t seed = 0;
  enum class Scheduler { RoundRobin, SeededRandom };
  Scheduler scheduler = Scheduler::RoundRobin;
  int async_copy_latency = 2;
  int clc_latency = 3;
  int remote_arrive_delay = 1;
  int mma_latency = 2;
  std::int64_t shared_capacity_bytes = 232 * 1024;
  bool race_detector = true;
  bool trace_enabled = true;
};

struct SimFaultInfo {
  enum class Kind {
    Deadlock,
    RaceDetected,
    CollectiveMismatch,
    CapacityExceeded,
    UninitializedBarrier,
    ArriveOverflow,
    Runtime,
  };
  Kind kind = Kind::Runtime;
  std::string message;
};

struct SimResult {
  bool ok = true;                     // no halting fault
  std::vector<SimFaultInfo> faults;   // halting faults (at most one)
  std::vector<SimFaultInfo> races;    // reported, non-halting
  std::map<std::string, Tile> outputs;
  std::string trace;    // newline-delimited JSON records
  std::string summary;  // the final summary record (also last trace line)

  // Per-CTA tile ids delivered by CLC responses, in delivery order.
  std::map<int, std::vector<std::int64_t>> clc_dispatch;
  // Per-element global load counts per input tensor.
  std::map<std::string, std::vector<std::int64_t>> global_load_counts;
  std::int64_t bank_conflicts = 0;
  std::map<std::string, std::int64_t> barrier_flips;  // "cta<k>.<name>"
  std::map<std::string, std::int64_t> task_steps;     // "cta<k>.<label>"
};

// Executes a validated, legalized, layout-resolved program. Deterministic
// for fixed (program, inputs, scalars, config).
SimResult simulate(const KernelProgram &p,
                   const std::map<std::string, Tile> &inputs,
                   const std::map<std::string, double> &scalars,
                   const SimConfig &cfg);

}  // namespace mimw
