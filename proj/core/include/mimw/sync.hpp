#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimw/ir.hpp"

namespace mimw {

// Pure mbarrier state machine. One instance models one barrier slot of one
// CTA: a phase parity bit, a pending-arrival count and an outstanding
// transaction byte count. The phase flips exactly when both the pending
// count and the transaction count reach zero, at which point the pending
// count reloads to the configured arrive count.
struct MbarrierState {
  enum class Status { Ok, NotInitialized, ArriveOverflow, TxUnderflow };

  bool initialized = false;
  int arrive_count = 0;
  int pending = 0;
  int phase = 0;
  std::int64_t tx_bytes = 0;
  std::int64_t flips = 0;

  void init(int count, int start_phase = 0) {
    initialized = true;
    arrive_count = count;
    pending = count;
    phase = start_phase;
    tx_bytes = 0;
  }

  // Returns Ok and sets *flipped when the arrival completes a phase.
  Status arrive(int n = 1, bool *flipped = nullptr);
  Status expect(std::int64_t bytes);
  // Async completion: retires transaction bytes without arriving.
  Status complete_tx(std::int64_t bytes, bool *flipped = nullptr);

  // True when a wait on `parity` would return immediately.
  bool try_wait(int parity) const { return initialized && phase != parity; }

 private:
  bool maybe_flip();
};

struct SyncDiagnostic {
  std::string code;  // "C001"
  std::string message;
  int instr_id = -1;
  std::string render(bool color = false) const;
};

struct LegalizeResult {
  bool ok = true;
  std::vector<SyncDiagnostic> diagnostics;
  bool inserted_cluster_barrier = false;
};

// Cluster legality pass:
//  * barrier_wait carrying a rank(...) attr is rejected with C001 — waits
//    are local-only ("arrive remote, wait local").
//  * when the cluster is wider than one CTA and the kernel uses any
//    remote-capable operation, a cluster_barrier is inserted at the top of
//    the prologue unless one is already present, so no CTA touches a peer's
//    shared memory before every barrier in the cluster is initialized.
LegalizeResult legalize_cluster(KernelProgram &p);

// True if the kernel contains any op that can touch a peer CTA's state.
bool uses_remote_ops(const KernelProgram &p);

}  // namespace mimw
