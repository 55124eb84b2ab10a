#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mimw/ir.hpp"

namespace mimw {

// Lattice element attached to a value during propagation.
struct LayoutFact {
  enum class State { Any, Known, Conflict };
  State state = State::Any;
  LayoutEncoding enc;
  std::set<int> provenance;  // indices into the constraint list

  static LayoutFact any() { return {}; }
  static LayoutFact known(LayoutEncoding e, std::set<int> prov = {}) {
    return {State::Known, e, std::move(prov)};
  }

  bool is_any() const { return state == State::Any; }
  bool is_known() const { return state == State::Known; }
  bool is_conflict() const { return state == State::Conflict; }
  bool operator==(const LayoutFact &o) const {
    return state == o.state && (state != State::Known || enc == o.enc) &&
           provenance == o.provenance;
  }
};

LayoutFact meet(const LayoutFact &a, const LayoutFact &b);

enum class ConstraintPriority : int {
  HeuristicDefault = 1,
  UserRequested = 2,
  OperationRequired = 3,
};

struct LayoutConstraint {
  std::string key;  // value key: "buf:<name>" or "reg:<name>"
  LayoutEncoding enc;
  ConstraintPriority priority = ConstraintPriority::HeuristicDefault;
  int site = -1;  // instruction id; -1 for declaration sites
  std::string site_desc;
};

struct LayoutDiagnostic {
  std::string code;  // "L001" or "L002"
  std::string message;
  std::vector<LayoutConstraint> sites;
  std::string render(bool color = false) const;
};

struct LayoutOptions {
  // Heuristic default for async-copy destinations.
  LayoutEncoding copy_default = LayoutEncoding::swizzled(128);
};

using FactMap = std::map<std::string, LayoutFact>;

// Value keys.
inline std::string buf_key(const std::string &name) { return "buf:" + name; }
inline std::string reg_key(const std::string &name) { return "reg:" + name; }

// Materializes require_layout ops for user annotations on values and for
// layout-demanding opcodes. Idempotent.
void insert_constraints(KernelProgram &p, const LayoutOptions &opts = {});

// Collects every constraint: require_layout sites plus buffer declarations.
std::vector<LayoutConstraint> gather_constraints(const KernelProgram &p);

FactMap propagate_backward(const KernelProgram &p,
                           const std::vector<LayoutConstraint> &constraints,
                           const std::vector<int> *edge_order = nullptr);
FactMap propagate_forward(const KernelProgram &p,
                          const std::vector<LayoutConstraint> &constraints,
                          const FactMap &backward,
                          const std::vector<int> *edge_order = nullptr);

// Union-find closure over local_alias declarations; each entry is one group
// with >= 2 members.
std::vector<std::set<std::string>> alias_groups(const KernelProgram &p);

struct ResolveResult {
  bool ok = true;
  std::vector<LayoutDiagnostic> diagnostics;
  int conversions_inserted = 0;
};

// Assigns one concrete encoding to every allocation and inserts
// layout_convert ops for defeated constraint sites. Mutates p.
ResolveResult resolve(KernelProgram &p,
                      const std::vector<LayoutConstraint> &constraints,
                      const FactMap &facts);

// Convenience: insert + backward + forward + resolve.
ResolveResult run_layout_pipeline(KernelProgram &p,
                                  const LayoutOptions &opts = {});

// Post-resolution soundness scan: every dot operand whose def chain reaches
// local storage carries the MmaOperand encoding of the right role.
bool verify_mma_roles(const KernelProgram &p, std::string *why = nullptr);

// Number of dataflow edges (exposed for the confluence property test).
int layout_edge_count(const KernelProgram &p);

}  // namespace mimw
