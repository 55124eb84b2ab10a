#include "mimw/sync.hpp"

#include <sstream>

namespace mimw {

bool MbarrierState::maybe_flip() {
  if (pending == 0 && tx_bytes == 0) {
    phase ^= 1;
    pending = arrive_count;
    ++flips;
    return true;
  }
  return false;
}

MbarrierState::Status MbarrierState::arrive(int n, bool *flipped) {
  if (!initialized) return Status::NotInitialized;
  if (n > pending) return Status::ArriveOverflow;
  pending -= n;
  bool f = maybe_flip();
  if (flipped) *flipped = f;
  return Status::Ok;
}

MbarrierState::Status MbarrierState::expect(std::int64_t bytes) {
  if (!initialized) return Status::NotInitialized;
  tx_bytes += bytes;
  return Status::Ok;
}

MbarrierState::Status MbarrierState::complete_tx(std::int64_t bytes,
                                                 bool *flipped) {
  if (!initialized) return Status::NotInitialized;
  if (bytes > tx_bytes) return Status::TxUnderflow;
  tx_bytes -= bytes;
  bool f = maybe_flip();
  if (flipped) *flipped = f;
  return Status::Ok;
}

std::string SyncDiagnostic::render(bool color) const {
  std::ostringstream os;
  const char *red = color ? "\033[31m" : "";
  const char *reset = color ? "\033[0m" : "";
  os << red << "error[" << code << "]" << reset << ": " << message;
  if (instr_id >= 0) os << " (instr " << instr_id << ")";
  return os.str();
}

bool uses_remote_ops(const KernelProgram &p) {
  bool found = false;
  for_each_instruction(p, [&](const Instruction &ins) {
    if (found) return;
    switch (ins.op) {
      case Opcode::RemoteView:
      case Opcode::AsyncRemoteStore:
      case Opcode::CollectiveDot:
        found = true;
        break;
      case Opcode::BarrierArrive:
        if (ins.has_attr("rank")) found = true;
        break;
      case Opcode::AsyncCopy:
        if (ins.has_attr("multicast")) found = true;
        break;
      default:
        break;
    }
  });
  return found;
}

LegalizeResult legalize_cluster(KernelProgram &p) {
  LegalizeResult res;
  for_each_instruction(p, [&](const Instruction &ins) {
    if (ins.op == Opcode::BarrierWait && ins.has_attr("rank")) {
      res.ok = false;
      res.diagnostics.push_back(
          {"C001",
           "barrier_wait on a remote CTA is not legal; waits are local-only "
           "(arrive remote, wait local)",
           ins.id});
    }
  });
  if (!res.ok) return res;

  if (p.cluster_size() > 1 && uses_remote_ops(p)) {
    bool have = false;
    for (auto &ins : p.prologue)
      if (ins.op == Opcode::ClusterBarrier) have = true;
    if (!have) {
      Instruction cb;
      cb.id = p.fresh_id();
      cb.op = Opcode::ClusterBarrier;
      p.prologue.insert(p.prologue.begin(), std::move(cb));
      res.inserted_cluster_barrier = true;
    }
  }
  return res;
}

}  // namespace mimw
