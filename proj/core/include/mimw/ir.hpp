#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mimw {

// ---------------------------------------------------------------------------
// Layout encodings
// ---------------------------------------------------------------------------

struct LayoutEncoding {
  enum class Kind { RowMajor, ColMajor, Swizzled, MmaOperand };
  enum class Role { A, B, Acc };

  Kind kind = Kind::RowMajor;
  int swizzle_width = 0;  // bytes, one of 32/64/128 when kind == Swizzled
  Role role = Role::A;    // valid when kind == MmaOperand

  static LayoutEncoding row_major() { return {Kind::RowMajor, 0, Role::A}; }
  static LayoutEncoding col_major() { return {Kind::ColMajor, 0, Role::A}; }
  static LayoutEncoding swizzled(int width) {
    return {Kind::Swizzled, width, Role::A};
  }
  static LayoutEncoding mma(Role r) { return {Kind::MmaOperand, 0, r}; }

  bool operator==(const LayoutEncoding &o) const {
    if (kind != o.kind) return false;
    if (kind == Kind::Swizzled) return swizzle_width == o.swizzle_width;
    if (kind == Kind::MmaOperand) return role == o.role;
    return true;
  }
  bool operator!=(const LayoutEncoding &o) const { return !(*this == o); }
  bool operator<(const LayoutEncoding &o) const {
    if (kind != o.kind) return kind < o.kind;
    if (kind == Kind::Swizzled) return swizzle_width < o.swizzle_width;
    if (kind == Kind::MmaOperand) return role < o.role;
    return false;
  }

  std::string str() const;
};

// Parses "row_major", "col_major", "swizzled_128", "mma_a", "mma_b", "mma_acc".
std::optional<LayoutEncoding> parse_layout_encoding(const std::string &text);

// ---------------------------------------------------------------------------
// Instructions
// ---------------------------------------------------------------------------

enum class Opcode {
  // scalar producers
  Const,
  CtaRank,
  ClusterId,
  ReplicaId,
  NumCtas,
  Copy,
  // arithmetic (scalar or tile, broadcasting)
  Add,
  Sub,
  Mul,
  Div,
  Mod,
  Max,
  Eq,
  Ne,
  Lt,
  Le,
  Gt,
  Ge,
  // tile producers / transforms
  Splat,
  Iota,
  Reshape,
  Transpose,
  ReduceSum,
  ReduceMax,
  Rsqrt,
  Exp,
  Log,
  // matrix multiply
  Dot,
  AsyncDot,
  AsyncDotWait,
  CollectiveDot,
  // memory
  GlobalLoad,
  GlobalStore,
  View,
  RemoteView,
  LocalLoad,
  LocalStore,
  AsyncCopy,
  AsyncRemoteStore,
  // barriers
  BarrierArrive,
  BarrierWait,
  BarrierExpect,
  ClusterBarrier,
  // cluster launch control
  ClcContext,
  ClcProducer,
  ClcConsumer,
  // layout compiler ops
  RequireLayout,
  ReleaseLayout,
  LocalAlias,
  LayoutConvert,
  // structured control flow
  For,
  While,
  If,
};

const char *opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(const std::string &name);

struct Operand {
  enum class Kind { Reg, Imm, Ident, Barrier };

  Kind kind = Kind::Imm;
  std::string text;  // register name (no '%'), identifier, or barrier name
  double imm = 0.0;

  // Barrier index: either an immediate or a register.
  bool idx_is_reg = false;
  std::string idx_reg;
  std::int64_t idx_imm = 0;

  static Operand reg(std::string name) {
    Operand o;
    o.kind = Kind::Reg;
    o.text = std::move(name);
    return o;
  }
  static Operand immediate(double v) {
    Operand o;
    o.kind = Kind::Imm;
    o.imm = v;
    return o;
  }
  static Operand ident(std::string name) {
    Operand o;
    o.kind = Kind::Ident;
    o.text = std::move(name);
    return o;
  }
  static Operand barrier(std::string name, std::int64_t idx) {
    Operand o;
    o.kind = Kind::Barrier;
    o.text = std::move(name);
    o.idx_imm = idx;
    return o;
  }
  static Operand barrier_reg(std::string name, std::string idx) {
    Operand o;
    o.kind = Kind::Barrier;
    o.text = std::move(name);
    o.idx_is_reg = true;
    o.idx_reg = std::move(idx);
    return o;
  }

  bool operator==(const Operand &o) const {
    if (kind != o.kind) return false;
    switch (kind) {
      case Kind::Reg:
      case Kind::Ident:
        return text == o.text;
      case Kind::Imm:
        return imm == o.imm;
      case Kind::Barrier:
        return text == o.text && idx_is_reg == o.idx_is_reg &&
               (idx_is_reg ? idx_reg == o.idx_reg : idx_imm == o.idx_imm);
    }
    return false;
  }
};

struct Instruction {
  int id = -1;  // unique within a program, assigned by the parser/builder
  Opcode op = Opcode::Const;
  std::string result;  // empty when the op produces no value
  std::vector<Operand> args;

  // Keyword attributes, e.g. shape(...), stage(...), rank(...). Keys are the
  // literal attribute names; canonical print order is fixed in print.cpp.
  std::map<std::string, std::vector<Operand>> attrs;

  // Structured control flow bodies.
  std::vector<Instruction> body;
  std::vector<Instruction> else_body;

  bool has_attr(const std::string &k) const { return attrs.count(k) != 0; }
  const std::vector<Operand> *attr(const std::string &k) const {
    auto it = attrs.find(k);
    return it == attrs.end() ? nullptr : &it->second;
  }

  bool operator==(const Instruction &o) const;
};

// ---------------------------------------------------------------------------
// Program
// ---------------------------------------------------------------------------

struct TensorParam {
  std::string name;
  std::vector<std::int64_t> shape;
  bool is_output = false;
  bool operator==(const TensorParam &o) const {
    return name == o.name && shape == o.shape && is_output == o.is_output;
  }
};

struct ScalarParam {
  std::string name;
  bool operator==(const ScalarParam &o) const { return name == o.name; }
};

struct BufferDecl {
  enum class Storage { Smem, SmemCluster };
  std::string name;
  std::vector<std::int64_t> shape;
  int stages = 1;
  Storage storage = Storage::Smem;
  std::optional<LayoutEncoding> layout;  // user annotation and/or resolved

  std::int64_t elems_per_stage() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  std::int64_t total_bytes() const {
    return static_cast<std::int64_t>(stages) * elems_per_stage() * 4;
  }
  bool operator==(const BufferDecl &o) const {
    return name == o.name && shape == o.shape && stages == o.stages &&
           storage == o.storage && layout == o.layout;
  }
};

struct BarrierDecl {
  std::string name;
  int count = 1;
  int arrive_count = 1;
  bool operator==(const BarrierDecl &o) const {
    return name == o.name && count == o.count && arrive_count == o.arrive_count;
  }
};

struct TaskRegion {
  enum class Kind { Default, Explicit };
  Kind kind = Kind::Default;
  int num_warps = 0;  // explicit regions only; default absorbs remainder
  int replicate = 1;
  std::optional<int> registers;   // recorded, inert
  std::optional<int> replica_id;  // set on expanded replicas
  std::vector<Instruction> body;

  bool operator==(const TaskRegion &o) const {
    return kind == o.kind && num_warps == o.num_warps &&
           replicate == o.replicate && registers == o.registers &&
           replica_id == o.replica_id && body == o.body;
  }
};

struct KernelProgram {
  std::string name;
  std::array<std::int64_t, 3> grid = {1, 1, 1};
  std::array<std::int64_t, 3> cluster = {1, 1, 1};
  int num_warps = 4;
  // Work-queue depth for CLC; defaults to the grid CTA count.
  std::optional<std::int64_t> tiles;

  std::vector<TensorParam> tensor_params;
  std::vector<ScalarParam> scalar_params;
  std::vector<BufferDecl> buffers;
  std::vector<BarrierDecl> barriers;
  std::vector<Instruction> prologue;
  std::vector<TaskRegion> tasks;

  int next_instr_id = 0;

  std::int64_t grid_ctas() const { return grid[0] * grid[1] * grid[2]; }
  std::int64_t cluster_size() const {
    return cluster[0] * cluster[1] * cluster[2];
  }
  std::int64_t total_tiles() const { return tiles ? *tiles : grid_ctas(); }

  const BufferDecl *find_buffer(const std::string &n) const {
    for (auto &b : buffers)
      if (b.name == n) return &b;
    return nullptr;
  }
  BufferDecl *find_buffer(const std::string &n) {
    for (auto &b : buffers)
      if (b.name == n) return &b;
    return nullptr;
  }
  const BarrierDecl *find_barrier(const std::string &n) const {
    for (auto &b : barriers)
      if (b.name == n) return &b;
    return nullptr;
  }
  const TensorParam *find_tensor(const std::string &n) const {
    for (auto &t : tensor_params)
      if (t.name == n) return &t;
    return nullptr;
  }

  int fresh_id() { return next_instr_id++; }

  // Structural equality ignores instruction ids.
  bool equals(const KernelProgram &o) const;
};

// Walks every instruction (prologue + all task bodies), recursing into
// control-flow bodies. The callback may mutate the instruction.
void for_each_instruction(KernelProgram &p,
                          const std::function<void(Instruction &)> &fn);
void for_each_instruction(const KernelProgram &p,
                          const std::function<void(const Instruction &)> &fn);

}  // namespace mimw
