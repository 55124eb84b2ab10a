#pragma once

#include <map>
#include <optional>
#include <string>

#include "mimw/sim.hpp"

namespace mimw {

// Pure dense reference implementations, simulator-independent.

Tile oracle_vector_scale(const Tile &x, double a);

// C = A.B, fixed ascending-k reduction order.
Tile oracle_gemm(const Tile &a, const Tile &b);

// mean = sum(x)/N; var = sum((x-mean)^2)/N; rstd = 1/sqrt(var+eps);
// y = (x - mean) * rstd * w + b.
void oracle_layernorm(const Tile &x, const Tile &w, const Tile &b, double eps,
                      Tile *y, Tile *mean = nullptr, Tile *rstd = nullptr);

// Gathered matmul: A = [a0 | a1] (columns), B = [b0 ; b1] (rows).
Tile oracle_multi_device_gemm(const Tile &a0, const Tile &a1, const Tile &b0,
                              const Tile &b1);

// Trilinear attention with asymmetric causal windows:
//   s[i,j1,j2] = scale * sum_d q[i,d]*k1[j1,d]*k2[j2,d]
// over j1 in [i-w1+1, i], j2 in [i-w2+1, i] (clamped at 0); softmax over the
// joint window; o[i] = sum p * (v1[j1] (.) v2[j2]); lse[i] = logsumexp(s[i]).
void oracle_simplicial_attention(const Tile &q, const Tile &k1, const Tile &v1,
                                 const Tile &k2, const Tile &v2, int w1,
                                 int w2, double scale, Tile *o, Tile *lse);

// Standard windowed softmax attention (the w1 = 1 / all-ones degeneration).
void oracle_attention(const Tile &q, const Tile &k, const Tile &v, int w,
                      double scale, Tile *o);

// Corpus dispatcher: maps an oracle name to the expected output tensors,
// keyed by the kernel's output parameter names. `sim` provides dispatch
// information for kernels whose outputs depend on CLC assignment.
std::optional<std::map<std::string, Tile>> run_oracle(
    const std::string &name, const std::map<std::string, Tile> &inputs,
    const std::map<std::string, double> &scalars, const SimResult *sim);

}  // namespace mimw
