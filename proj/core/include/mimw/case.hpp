#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mimw/sim.hpp"

namespace mimw {

// One corpus entry, loaded from a `*.case` sidecar in key=value form:
//   kernel = gemm_pipeline.mimw
//   oracle = gemm
//   seed = 7
//   tolerance = 1e-4
//   fuzz = true            # include in the schedule-independence suite
//   scalar.eps = 1e-5      # scalar parameter bindings
// Lines starting with '#' are comments.
struct KernelCase {
  std::string name;         // case file stem
  std::string kernel_path;  // resolved relative to the case file
  std::string oracle;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  bool fuzz = true;
  std::map<std::string, double> scalars;
};

std::optional<KernelCase> load_case(const std::string &path,
                                    std::string *error = nullptr);

// All *.case files in a directory, sorted by name.
std::vector<KernelCase> load_corpus(const std::string &dir,
                                    std::string *error = nullptr);

// Seeded input tensors for a program: uniform [-1, 1], one derived seed per
// input parameter in declaration order.
std::map<std::string, Tile> make_inputs(const KernelProgram &p,
                                        std::uint64_t seed);

// max_i |a_i - b_i| / max(max_i |b_i|, 1e-30)
double rel_error(const Tile &a, const Tile &b);

}  // namespace mimw
