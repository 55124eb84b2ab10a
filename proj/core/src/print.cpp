#include "mimw/print.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace mimw {

namespace {

// Fixed order for keyword attributes in the canonical form.
const char *kAttrOrder[] = {"shape", "stages", "consumers", "stage",
                            "rank",  "offset", "axis",      "group",
                            "phase", "bytes",  "count",     "multicast",
                            "enc",   "prio",   "step"};

void print_body(std::ostringstream &os, const std::vector<Instruction> &body,
                int indent);

}  // namespace

std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
    return buf;
  }
  // Shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return "0";
}

std::string print_operand(const Operand &o) {
  switch (o.kind) {
    case Operand::Kind::Reg:
      return "%" + o.text;
    case Operand::Kind::Imm:
      return format_number(o.imm);
    case Operand::Kind::Ident:
      return o.text;
    case Operand::Kind::Barrier:
      return o.text + "[" +
             (o.idx_is_reg ? "%" + o.idx_reg : std::to_string(o.idx_imm)) +
             "]";
  }
  return "?";
}

namespace {

std::string attr_list(const std::vector<Operand> &ops) {
  std::string s;
  for (size_t i = 0; i < ops.size(); ++i) {
    if (i) s += " ";
    s += print_operand(ops[i]);
  }
  return s;
}

std::string instr_head(const Instruction &ins) {
  if (ins.op == Opcode::For) {
    std::string s = "for %" + ins.result + " = " + print_operand(ins.args[0]) +
                    " to " + print_operand(ins.args[1]);
    if (auto *st = ins.attr("step")) s += " step(" + attr_list(*st) + ")";
    return s;
  }

  std::string s = ins.result.empty() ? "" : "%" + ins.result + " = ";
  s += opcode_name(ins.op);
  for (auto &a : ins.args) s += " " + print_operand(a);
  for (auto *key : kAttrOrder) {
    auto *v = ins.attr(key);
    if (v) s += std::string(" ") + key + "(" + attr_list(*v) + ")";
  }
  return s;
}

void print_instr(std::ostringstream &os, const Instruction &ins, int indent) {
  std::string pad(indent * 2, ' ');
  if (ins.op == Opcode::For || ins.op == Opcode::While || ins.op == Opcode::If) {
    os << pad << instr_head(ins) << " {\n";
    print_body(os, ins.body, indent + 1);
    if (ins.op == Opcode::If && !ins.else_body.empty()) {
      os << pad << "} else {\n";
      print_body(os, ins.else_body, indent + 1);
    }
    os << pad << "}\n";
  } else {
    os << pad << instr_head(ins) << "\n";
  }
}

void print_body(std::ostringstream &os, const std::vector<Instruction> &body,
                int indent) {
  for (auto &ins : body) print_instr(os, ins, indent);
}

}  // namespace

std::string print_instruction(const Instruction &ins, int indent) {
  std::ostringstream os;
  print_instr(os, ins, indent);
  return os.str();
}

std::string print_ir(const KernelProgram &p, const std::string &stage) {
  std::ostringstream os;
  if (!stage.empty()) os << "# stage: " << stage << "\n";
  os << "kernel " << p.name << " grid(" << p.grid[0] << " " << p.grid[1] << " "
     << p.grid[2] << ") cluster(" << p.cluster[0] << " " << p.cluster[1] << " "
     << p.cluster[2] << ") warps(" << p.num_warps << ")";
  if (p.tiles) os << " tiles(" << *p.tiles << ")";
  os << "\n";

  for (auto &t : p.tensor_params) {
    os << "param " << (t.is_output ? "out" : "in") << " " << t.name
       << " shape(";
    for (size_t i = 0; i < t.shape.size(); ++i)
      os << (i ? " " : "") << t.shape[i];
    os << ")\n";
  }
  for (auto &s : p.scalar_params) os << "param scalar " << s.name << "\n";

  for (auto &b : p.buffers) {
    os << "buffer " << b.name << " shape(";
    for (size_t i = 0; i < b.shape.size(); ++i)
      os << (i ? " " : "") << b.shape[i];
    os << ") f32 stages(" << b.stages << ") storage("
       << (b.storage == BufferDecl::Storage::Smem ? "smem" : "smem_cluster")
       << ")";
    if (b.layout) os << " layout(" << b.layout->str() << ")";
    os << "\n";
  }
  for (auto &b : p.barriers)
    os << "barrier " << b.name << " count(" << b.count << ") arrive("
       << b.arrive_count << ")\n";

  if (!p.prologue.empty()) {
    os << "prologue {\n";
    print_body(os, p.prologue, 1);
    os << "}\n";
  }

  for (auto &t : p.tasks) {
    os << "task";
    if (t.kind == TaskRegion::Kind::Default) {
      os << " default";
    } else {
      os << " warps(" << t.num_warps << ")";
      if (t.replicate > 1) os << " replicate(" << t.replicate << ")";
    }
    if (t.registers) os << " registers(" << *t.registers << ")";
    if (t.replica_id) os << " replica(" << *t.replica_id << ")";
    os << " {\n";
    print_body(os, t.body, 1);
    os << "}\n";
  }
  return os.str();
}

}  // namespace mimw
