#include "mimw/ir.hpp"

#include <sstream>

namespace mimw {

std::string LayoutEncoding::str() const {
  switch (kind) {
    case Kind::RowMajor:
      return "row_major";
    case Kind::ColMajor:
      return "col_major";
    case Kind::Swizzled:
      return "swizzled_" + std::to_string(swizzle_width);
    case Kind::MmaOperand:
      switch (role) {
        case Role::A:
          return "mma_a";
        case Role::B:
          return "mma_b";
        case Role::Acc:
          return "mma_acc";
      }
  }
  return "?";
}

std::optional<LayoutEncoding> parse_layout_encoding(const std::string &text) {
  if (text == "row_major") return LayoutEncoding::row_major();
  if (text == "col_major") return LayoutEncoding::col_major();
  if (text == "swizzled_32") return LayoutEncoding::swizzled(32);
  if (text == "swizzled_64") return LayoutEncoding::swizzled(64);
  if (text == "swizzled_128") return LayoutEncoding::swizzled(128);
  if (text == "mma_a") return LayoutEncoding::mma(LayoutEncoding::Role::A);
  if (text == "mma_b") return LayoutEncoding::mma(LayoutEncoding::Role::B);
  if (text == "mma_acc") return LayoutEncoding::mma(LayoutEncoding::Role::Acc);
  return std::nullopt;
}

namespace {

struct OpName {
  Opcode op;
  const char *name;
};

constexpr OpName kOpNames[] = {
    {Opcode::Const, "const"},
    {Opcode::CtaRank, "cta_rank"},
    {Opcode::ClusterId, "cluster_id"},
    {Opcode::ReplicaId, "replica_id"},
    {Opcode::NumCtas, "num_ctas"},
    {Opcode::Copy, "copy"},
    {Opcode::Add, "add"},
    {Opcode::Sub, "sub"},
    {Opcode::Mul, "mul"},
    {Opcode::Div, "div"},
    {Opcode::Mod, "mod"},
    {Opcode::Max, "max"},
    {Opcode::Eq, "eq"},
    {Opcode::Ne, "ne"},
    {Opcode::Lt, "lt"},
    {Opcode::Le, "le"},
    {Opcode::Gt, "gt"},
    {Opcode::Ge, "ge"},
    {Opcode::Splat, "splat"},
    {Opcode::Iota, "iota"},
    {Opcode::Reshape, "reshape"},
    {Opcode::Transpose, "transpose"},
    {Opcode::ReduceSum, "reduce_sum"},
    {Opcode::ReduceMax, "reduce_max"},
    {Opcode::Rsqrt, "rsqrt"},
    {Opcode::Exp, "exp"},
    {Opcode::Log, "log"},
    {Opcode::Dot, "dot"},
    {Opcode::AsyncDot, "async_dot"},
    {Opcode::AsyncDotWait, "async_dot_wait"},
    {Opcode::CollectiveDot, "collective_dot"},
    {Opcode::GlobalLoad, "global_load"},
    {Opcode::GlobalStore, "global_store"},
    {Opcode::View, "view"},
    {Opcode::RemoteView, "remote_view"},
    {Opcode::LocalLoad, "local_load"},
    {Opcode::LocalStore, "local_store"},
    {Opcode::AsyncCopy, "async_copy"},
    {Opcode::AsyncRemoteStore, "async_remote_store"},
    {Opcode::BarrierArrive, "barrier_arrive"},
    {Opcode::BarrierWait, "barrier_wait"},
    {Opcode::BarrierExpect, "barrier_expect"},
    {Opcode::ClusterBarrier, "cluster_barrier"},
    {Opcode::ClcContext, "clc_context"},
    {Opcode::ClcProducer, "clc_producer"},
    {Opcode::ClcConsumer, "clc_consumer"},
    {Opcode::RequireLayout, "require_layout"},
    {Opcode::ReleaseLayout, "release_layout"},
    {Opcode::LocalAlias, "local_alias"},
    {Opcode::LayoutConvert, "layout_convert"},
    {Opcode::For, "for"},
    {Opcode::While, "while"},
    {Opcode::If, "if"},
};

}  // namespace

const char *opcode_name(Opcode op) {
  for (auto &e : kOpNames)
    if (e.op == op) return e.name;
  return "?";
}

std::optional<Opcode> opcode_from_name(const std::string &name) {
  for (auto &e : kOpNames)
    if (name == e.name) return e.op;
  return std::nullopt;
}

bool Instruction::operator==(const Instruction &o) const {
  return op == o.op && result == o.result && args == o.args &&
         attrs == o.attrs && body == o.body && else_body == o.else_body;
}

bool KernelProgram::equals(const KernelProgram &o) const {
  return name == o.name && grid == o.grid && cluster == o.cluster &&
         num_warps == o.num_warps && tiles == o.tiles &&
         tensor_params == o.tensor_params && scalar_params == o.scalar_params &&
         buffers == o.buffers && barriers == o.barriers &&
         prologue == o.prologue && tasks == o.tasks;
}

namespace {

template <typename Instr, typename Fn>
void walk(std::vector<Instr> &body, const Fn &fn) {
  for (auto &ins : body) {
    fn(ins);
    walk(ins.body, fn);
    walk(ins.else_body, fn);
  }
}

}  // namespace

void for_each_instruction(KernelProgram &p,
                          const std::function<void(Instruction &)> &fn) {
  walk(p.prologue, fn);
  for (auto &t : p.tasks) walk(t.body, fn);
}

void for_each_instruction(const KernelProgram &p,
                          const std::function<void(const Instruction &)> &fn) {
  auto &mp = const_cast<KernelProgram &>(p);
  for_each_instruction(mp, [&](Instruction &ins) {
    fn(static_cast<const Instruction &>(ins));
  });
}

}  // namespace mimw
