#include "mimw/validate.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <sstream>

namespace mimw {

std::string ValidationReport::str() const {
  std::ostringstream os;
  for (auto &e : errors) {
    os << "error";
    if (e.instr_id >= 0) os << " [instr " << e.instr_id << "]";
    os << ": " << e.message << "\n";
  }
  return os.str();
}

namespace {

using Shape = std::vector<std::int64_t>;

struct StaticType {
  enum class Kind { Scalar, Tile, View, Ctx, Unknown };
  Kind kind = Kind::Unknown;
  Shape shape;         // Tile
  std::string buffer;  // View
  bool remote = false;

  static StaticType scalar() { return {Kind::Scalar, {}, "", false}; }
  static StaticType tile(Shape s) {
    return {Kind::Tile, std::move(s), "", false};
  }
  static StaticType view(std::string buf, bool remote) {
    return {Kind::View, {}, std::move(buf), remote};
  }
  static StaticType ctx() { return {Kind::Ctx, {}, "", false}; }
  static StaticType unknown() { return {}; }

  bool operator==(const StaticType &o) const {
    return kind == o.kind && shape == o.shape && buffer == o.buffer &&
           remote == o.remote;
  }
};

using Env = std::map<std::string, StaticType>;

std::optional<Shape> broadcast(const Shape &a, const Shape &b) {
  Shape out;
  size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
  out.resize(r);
  for (size_t i = 0; i < r; ++i) {
    std::int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
    std::int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
    if (da != db && da != 1 && db != 1) return std::nullopt;
    out[i] = std::max(da, db);
  }
  return out;
}

struct Checker {
  const KernelProgram &p;
  ValidationReport report;
  bool in_prologue = false;

  void err(int id, const std::string &m) { report.errors.push_back({id, m}); }
  void err(const Instruction &ins, const std::string &m) {
    err(ins.id, opcode_name(ins.op) + std::string(": ") + m);
  }

  // --- operand helpers -----------------------------------------------------

  StaticType type_of(const Env &env, const Operand &o) {
    switch (o.kind) {
      case Operand::Kind::Imm:
        return StaticType::scalar();
      case Operand::Kind::Reg: {
        auto it = env.find(o.text);
        if (it == env.end()) return StaticType::unknown();
        return it->second;
      }
      default:
        return StaticType::unknown();
    }
  }

  bool check_defined(Env &env, const Instruction &ins, const Operand &o) {
    if (o.kind == Operand::Kind::Reg && !env.count(o.text)) {
      err(ins, "use of undefined value %" + o.text);
      env[o.text] = StaticType::unknown();
      return false;
    }
    return true;
  }

  bool check_barrier_ref(Env &env, const Instruction &ins, const Operand &o) {
    if (o.kind != Operand::Kind::Barrier) {
      err(ins, "expected barrier reference");
      return false;
    }
    auto *decl = p.find_barrier(o.text);
    if (!decl) {
      err(ins, "reference to undeclared barrier '" + o.text + "'");
      return false;
    }
    if (!o.idx_is_reg && (o.idx_imm < 0 || o.idx_imm >= decl->count))
      err(ins, "barrier index " + std::to_string(o.idx_imm) +
                   " out of range for '" + o.text + "' (count " +
                   std::to_string(decl->count) + ")");
    if (o.idx_is_reg && !env.count(o.idx_reg))
      err(ins, "use of undefined value %" + o.idx_reg);
    return true;
  }

  std::optional<std::int64_t> imm_int(const Instruction &ins,
                                      const std::string &attr_name,
                                      bool required) {
    auto *v = ins.attr(attr_name);
    if (!v) {
      if (required) err(ins, "missing " + attr_name + "(...)");
      return std::nullopt;
    }
    if (v->size() != 1 || (*v)[0].kind != Operand::Kind::Imm) return std::nullopt;
    return static_cast<std::int64_t>((*v)[0].imm);
  }

  std::optional<Shape> shape_attr(const Instruction &ins, bool required) {
    auto *v = ins.attr("shape");
    if (!v) {
      if (required) err(ins, "missing shape(...)");
      return std::nullopt;
    }
    Shape s;
    for (auto &o : *v) {
      if (o.kind != Operand::Kind::Imm || o.imm <= 0 ||
          o.imm != std::floor(o.imm)) {
        err(ins, "shape extents must be positive integers");
        return std::nullopt;
      }
      s.push_back(static_cast<std::int64_t>(o.imm));
    }
    return s;
  }

  void expect_args(const Instruction &ins, size_t n) {
    if (ins.args.size() != n)
      err(ins, "expected " + std::to_string(n) + " operand(s), got " +
                   std::to_string(ins.args.size()));
  }

  // --- instruction stream checking ------------------------------------------

  void check_body(Env &env, const std::vector<Instruction> &body) {
    for (auto &ins : body) check_instr(env, ins);
  }

  void define(Env &env, const Instruction &ins, StaticType t) {
    if (ins.result.empty()) return;
    auto it = env.find(ins.result);
    if (it != env.end() && !(it->second == t) &&
        it->second.kind != StaticType::Kind::Unknown &&
        t.kind != StaticType::Kind::Unknown)
      err(ins, "redefinition of %" + ins.result + " with a different type");
    env[ins.result] = std::move(t);
  }

  StaticType elementwise(Env &env, const Instruction &ins) {
    expect_args(ins, 2);
    if (ins.args.size() != 2) return StaticType::unknown();
    for (auto &a : ins.args) check_defined(env, ins, a);
    auto ta = type_of(env, ins.args[0]);
    auto tb = type_of(env, ins.args[1]);
    if (ta.kind == StaticType::Kind::Unknown ||
        tb.kind == StaticType::Kind::Unknown)
      return StaticType::unknown();
    if (ta.kind == StaticType::Kind::Scalar &&
        tb.kind == StaticType::Kind::Scalar)
      return StaticType::scalar();
    Shape sa = ta.kind == StaticType::Kind::Tile ? ta.shape : Shape{};
    Shape sb = tb.kind == StaticType::Kind::Tile ? tb.shape : Shape{};
    if ((ta.kind != StaticType::Kind::Tile &&
         ta.kind != StaticType::Kind::Scalar) ||
        (tb.kind != StaticType::Kind::Tile &&
         tb.kind != StaticType::Kind::Scalar)) {
      err(ins, "operands must be tiles or scalars");
      return StaticType::unknown();
    }
    auto bc = broadcast(sa, sb);
    if (!bc) {
      err(ins, "non-conforming shapes");
      return StaticType::unknown();
    }
    return StaticType::tile(*bc);
  }

  void check_instr(Env &env, const Instruction &ins) {
    switch (ins.op) {
      case Opcode::Const:
        expect_args(ins, 1);
        if (!ins.args.empty() && ins.args[0].kind != Operand::Kind::Imm)
          err(ins, "const takes an immediate");
        define(env, ins, StaticType::scalar());
        break;
      case Opcode::CtaRank:
      case Opcode::ClusterId:
      case Opcode::ReplicaId:
      case Opcode::NumCtas:
        expect_args(ins, 0);
        define(env, ins, StaticType::scalar());
        break;
      case Opcode::Copy:
        expect_args(ins, 1);
        if (!ins.args.empty()) {
          check_defined(env, ins, ins.args[0]);
          define(env, ins, type_of(env, ins.args[0]));
        }
        break;

      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Mul:
      case Opcode::Div:
      case Opcode::Mod:
      case Opcode::Max:
      case Opcode::Eq:
      case Opcode::Ne:
      case Opcode::Lt:
      case Opcode::Le:
      case Opcode::Gt:
      case Opcode::Ge:
        define(env, ins, elementwise(env, ins));
        break;

      case Opcode::Splat: {
        expect_args(ins, 1);
        if (!ins.args.empty()) check_defined(env, ins, ins.args[0]);
        auto s = shape_attr(ins, true);
        define(env, ins, s ? StaticType::tile(*s) : StaticType::unknown());
        break;
      }
      case Opcode::Iota: {
        expect_args(ins, 0);
        auto s = shape_attr(ins, true);
        if (s && s->size() != 1) err(ins, "iota is one-dimensional");
        define(env, ins, s ? StaticType::tile(*s) : StaticType::unknown());
        break;
      }
      case Opcode::Reshape: {
        expect_args(ins, 1);
        auto s = shape_attr(ins, true);
        StaticType t = StaticType::unknown();
        if (!ins.args.empty() && check_defined(env, ins, ins.args[0]) && s) {
          auto ta = type_of(env, ins.args[0]);
          if (ta.kind == StaticType::Kind::Tile) {
            std::int64_t na = 1, nb = 1;
            for (auto d : ta.shape) na *= d;
            for (auto d : *s) nb *= d;
            if (na != nb) err(ins, "reshape changes element count");
            t = StaticType::tile(*s);
          } else if (ta.kind != StaticType::Kind::Unknown) {
            err(ins, "reshape expects a tile");
          }
        }
        define(env, ins, t);
        break;
      }
      case Opcode::Transpose: {
        expect_args(ins, 1);
        StaticType t = StaticType::unknown();
        if (!ins.args.empty() && check_defined(env, ins, ins.args[0])) {
          auto ta = type_of(env, ins.args[0]);
          if (ta.kind == StaticType::Kind::Tile) {
            if (ta.shape.size() != 2)
              err(ins, "transpose expects a 2-d tile");
            else
              t = StaticType::tile({ta.shape[1], ta.shape[0]});
          }
        }
        define(env, ins, t);
        break;
      }
      case Opcode::ReduceSum:
      case Opcode::ReduceMax: {
        expect_args(ins, 1);
        auto ax = imm_int(ins, "axis", true);
        StaticType t = StaticType::unknown();
        if (!ins.args.empty() && check_defined(env, ins, ins.args[0]) && ax) {
          auto ta = type_of(env, ins.args[0]);
          if (ta.kind == StaticType::Kind::Tile) {
            if (*ax < 0 || *ax >= static_cast<std::int64_t>(ta.shape.size())) {
              err(ins, "axis out of range");
            } else {
              Shape s = ta.shape;
              s[*ax] = 1;
              t = StaticType::tile(s);
            }
          }
        }
        define(env, ins, t);
        break;
      }
      case Opcode::Rsqrt:
      case Opcode::Exp:
      case Opcode::Log: {
        expect_args(ins, 1);
        StaticType t = StaticType::unknown();
        if (!ins.args.empty() && check_defined(env, ins, ins.args[0]))
          t = type_of(env, ins.args[0]);
        define(env, ins, t);
        break;
      }

      case Opcode::Dot:
      case Opcode::AsyncDot:
      case Opcode::CollectiveDot: {
        expect_args(ins, 3);
        StaticType t = StaticType::unknown();
        if (ins.args.size() == 3) {
          for (auto &a : ins.args) check_defined(env, ins, a);
          auto ta = type_of(env, ins.args[0]);
          auto tb = type_of(env, ins.args[1]);
          auto tc = type_of(env, ins.args[2]);
          if (ta.kind == StaticType::Kind::Tile &&
              tb.kind == StaticType::Kind::Tile) {
            if (ta.shape.size() != 2 || tb.shape.size() != 2) {
              err(ins, "dot expects 2-d tiles");
            } else if (ta.shape[1] != tb.shape[0]) {
              err(ins, "shape-conformance: inner dimensions differ (" +
                           std::to_string(ta.shape[1]) + " vs " +
                           std::to_string(tb.shape[0]) + ")");
            } else {
              Shape s = {ta.shape[0], tb.shape[1]};
              if (tc.kind == StaticType::Kind::Tile && tc.shape != s)
                err(ins, "accumulator shape does not match product shape");
              t = StaticType::tile(s);
            }
          }
        }
        if (ins.op == Opcode::CollectiveDot) {
          auto *g = ins.attr("group");
          if (!g || g->empty()) {
            err(ins, "missing group(...)");
          } else {
            for (auto &o : *g) {
              if (o.kind != Operand::Kind::Imm ||
                  o.imm != std::floor(o.imm) || o.imm < 0 ||
                  o.imm >= static_cast<double>(p.cluster_size()))
                err(ins, "group ranks must be CTA ranks inside the cluster");
            }
          }
          auto ax = imm_int(ins, "axis", true);
          if (ax && *ax != 0)
            err(ins, "only axis(0) fragment partitioning is supported");
        }
        define(env, ins, t);
        break;
      }
      case Opcode::AsyncDotWait: {
        expect_args(ins, 1);
        auto n = imm_int(ins, "count", true);
        if (n && *n < 0) err(ins, "count must be >= 0");
        StaticType t = StaticType::unknown();
        if (!ins.args.empty() && check_defined(env, ins, ins.args[0]))
          t = type_of(env, ins.args[0]);
        define(env, ins, t);
        break;
      }

      case Opcode::GlobalLoad: {
        expect_args(ins, 1);
        StaticType t = StaticType::unknown();
        auto s = shape_attr(ins, true);
        if (!ins.args.empty()) {
          if (ins.args[0].kind != Operand::Kind::Ident ||
              !p.find_tensor(ins.args[0].text)) {
            err(ins, "unknown tensor parameter");
          } else if (s) {
            auto *tp = p.find_tensor(ins.args[0].text);
            auto *off = ins.attr("offset");
            size_t noff = off ? off->size() : 0;
            if (noff != tp->shape.size() || s->size() != tp->shape.size())
              err(ins, "offset/shape rank must match tensor rank");
            if (off)
              for (auto &o : *off) check_defined(env, ins, o);
            t = StaticType::tile(*s);
          }
        }
        define(env, ins, t);
        break;
      }
      case Opcode::GlobalStore: {
        expect_args(ins, 2);
        if (ins.args.size() == 2) {
          if (ins.args[0].kind != Operand::Kind::Ident ||
              !p.find_tensor(ins.args[0].text))
            err(ins, "unknown tensor parameter");
          check_defined(env, ins, ins.args[1]);
          auto *off = ins.attr("offset");
          if (off)
            for (auto &o : *off) check_defined(env, ins, o);
          auto *tp = p.find_tensor(ins.args[0].kind == Operand::Kind::Ident
                                       ? ins.args[0].text
                                       : "");
          if (tp && off && off->size() != tp->shape.size())
            err(ins, "offset rank must match tensor rank");
        }
        break;
      }

      case Opcode::View: {
        expect_args(ins, 1);
        StaticType t = StaticType::unknown();
        if (!ins.args.empty()) {
          if (ins.args[0].kind != Operand::Kind::Ident ||
              !p.find_buffer(ins.args[0].text)) {
            err(ins, "reference to undeclared buffer");
          } else {
            t = StaticType::view(ins.args[0].text, false);
          }
        }
        auto *st = ins.attr("stage");
        if (!st || st->size() != 1)
          err(ins, "missing stage(...)");
        else if ((*st)[0].kind == Operand::Kind::Reg)
          check_defined(env, ins, (*st)[0]);
        define(env, ins, t);
        break;
      }
      case Opcode::RemoteView: {
        expect_args(ins, 1);
        StaticType t = StaticType::unknown();
        if (!ins.args.empty() && check_defined(env, ins, ins.args[0])) {
          auto tv = type_of(env, ins.args[0]);
          if (tv.kind == StaticType::Kind::View) {
            auto *buf = p.find_buffer(tv.buffer);
            if (buf && buf->storage != BufferDecl::Storage::SmemCluster)
              err(ins, "remote_view requires smem_cluster storage");
            t = StaticType::view(tv.buffer, true);
          } else if (tv.kind != StaticType::Kind::Unknown) {
            err(ins, "remote_view expects a view");
          }
        }
        auto *rk = ins.attr("rank");
        if (!rk || rk->size() != 1) {
          err(ins, "missing rank(...)");
        } else {
          auto &o = (*rk)[0];
          if (o.kind == Operand::Kind::Reg)
            check_defined(env, ins, o);
          else if (o.kind == Operand::Kind::Imm &&
                   (o.imm < 0 || o.imm >= static_cast<double>(p.cluster_size())))
            err(ins, "rank outside cluster");
        }
        define(env, ins, t);
        break;
      }
      case Opcode::LocalLoad: {
        expect_args(ins, 1);
        StaticType t = StaticType::unknown();
        if (!ins.args.empty() && check_defined(env, ins, ins.args[0])) {
          auto tv = type_of(env, ins.args[0]);
          if (tv.kind == StaticType::Kind::View) {
            if (tv.remote)
              err(ins, "local_load through a remote view is not allowed");
            auto *buf = p.find_buffer(tv.buffer);
            if (buf) t = StaticType::tile(buf->shape);
          } else if (tv.kind != StaticType::Kind::Unknown) {
            err(ins, "local_load expects a view");
          }
        }
        define(env, ins, t);
        break;
      }
      case Opcode::LocalStore: {
        expect_args(ins, 2);
        if (ins.args.size() == 2) {
          check_defined(env, ins, ins.args[0]);
          check_defined(env, ins, ins.args[1]);
          auto tv = type_of(env, ins.args[0]);
          auto tt = type_of(env, ins.args[1]);
          if (tv.kind == StaticType::Kind::View) {
            if (tv.remote)
              err(ins,
                  "plain local_store through a remote view; use "
                  "async_remote_store");
            auto *buf = p.find_buffer(tv.buffer);
            if (buf && tt.kind == StaticType::Kind::Tile &&
                tt.shape != buf->shape)
              err(ins, "stored tile shape does not match buffer shape");
          } else if (tv.kind != StaticType::Kind::Unknown) {
            err(ins, "local_store expects a view");
          }
        }
        break;
      }
      case Opcode::AsyncCopy: {
        expect_args(ins, 3);
        if (ins.args.size() == 3) {
          if (ins.args[0].kind != Operand::Kind::Ident ||
              !p.find_tensor(ins.args[0].text))
            err(ins, "unknown tensor parameter");
          check_defined(env, ins, ins.args[1]);
          auto tv = type_of(env, ins.args[1]);
          if (tv.kind == StaticType::Kind::View && tv.remote)
            err(ins, "async_copy destination must be a local view");
          check_barrier_ref(env, ins, ins.args[2]);
          auto *off = ins.attr("offset");
          if (off)
            for (auto &o : *off) check_defined(env, ins, o);
          if (auto *mc = ins.attr("multicast")) {
            if (mc->empty()) err(ins, "empty multicast set");
            for (auto &o : *mc)
              if (o.kind == Operand::Kind::Imm &&
                  (o.imm < 0 || o.imm >= static_cast<double>(p.cluster_size())))
                err(ins, "multicast rank outside cluster");
          }
        }
        break;
      }
      case Opcode::AsyncRemoteStore: {
        expect_args(ins, 3);
        if (ins.args.size() == 3) {
          check_defined(env, ins, ins.args[0]);
          check_defined(env, ins, ins.args[1]);
          auto tv = type_of(env, ins.args[0]);
          if (tv.kind == StaticType::Kind::View && !tv.remote)
            err(ins, "async_remote_store destination must be a remote view");
          auto tt = type_of(env, ins.args[1]);
          if (tv.kind == StaticType::Kind::View &&
              tt.kind == StaticType::Kind::Tile) {
            auto *buf = p.find_buffer(tv.buffer);
            if (buf && tt.shape != buf->shape)
              err(ins, "stored tile shape does not match buffer shape");
          }
          check_barrier_ref(env, ins, ins.args[2]);
        }
        break;
      }

      case Opcode::BarrierArrive: {
        expect_args(ins, 1);
        if (!ins.args.empty()) check_barrier_ref(env, ins, ins.args[0]);
        if (auto *c = ins.attr("count"))
          if (c->size() == 1 && (*c)[0].kind == Operand::Kind::Imm &&
              (*c)[0].imm < 1)
            err(ins, "arrive count must be >= 1");
        if (auto *r = ins.attr("rank")) {
          if (r->size() == 1 && (*r)[0].kind == Operand::Kind::Reg)
            check_defined(env, ins, (*r)[0]);
          if (r->size() == 1 && (*r)[0].kind == Operand::Kind::Imm &&
              ((*r)[0].imm < 0 ||
               (*r)[0].imm >= static_cast<double>(p.cluster_size())))
            err(ins, "rank outside cluster");
        }
        break;
      }
      case Opcode::BarrierWait: {
        expect_args(ins, 1);
        if (!ins.args.empty()) check_barrier_ref(env, ins, ins.args[0]);
        auto *ph = ins.attr("phase");
        if (!ph || ph->size() != 1)
          err(ins, "missing phase(...)");
        else if ((*ph)[0].kind == Operand::Kind::Reg)
          check_defined(env, ins, (*ph)[0]);
        break;
      }
      case Opcode::BarrierExpect: {
        expect_args(ins, 1);
        if (!ins.args.empty()) check_barrier_ref(env, ins, ins.args[0]);
        auto *by = ins.attr("bytes");
        if (!by || by->size() != 1)
          err(ins, "missing bytes(...)");
        else if ((*by)[0].kind == Operand::Kind::Reg)
          check_defined(env, ins, (*by)[0]);
        break;
      }
      case Opcode::ClusterBarrier:
        expect_args(ins, 0);
        if (!in_prologue)
          err(ins, "cluster_barrier is only allowed in the prologue");
        break;

      case Opcode::ClcContext: {
        expect_args(ins, 0);
        auto st = imm_int(ins, "stages", true);
        if (st && *st < 1) err(ins, "stages must be >= 1");
        auto nc = imm_int(ins, "consumers", true);
        if (nc && *nc < 1) err(ins, "consumers must be >= 1");
        if (!in_prologue) err(ins, "clc_context must be created in prologue");
        define(env, ins, StaticType::ctx());
        break;
      }
      case Opcode::ClcProducer:
      case Opcode::ClcConsumer: {
        expect_args(ins, 1);
        if (!ins.args.empty() && check_defined(env, ins, ins.args[0])) {
          auto t = type_of(env, ins.args[0]);
          if (t.kind != StaticType::Kind::Ctx &&
              t.kind != StaticType::Kind::Unknown)
            err(ins, "expected a CLC context");
        }
        if (ins.op == Opcode::ClcConsumer)
          define(env, ins, StaticType::scalar());
        break;
      }

      case Opcode::RequireLayout: {
        expect_args(ins, 1);
        if (!ins.args.empty()) check_defined(env, ins, ins.args[0]);
        auto *e = ins.attr("enc");
        if (!e || e->size() != 1 || e->at(0).kind != Operand::Kind::Ident ||
            !parse_layout_encoding(e->at(0).text))
          err(ins, "missing or invalid enc(...)");
        auto *pr = ins.attr("prio");
        if (!pr || pr->size() != 1 || pr->at(0).kind != Operand::Kind::Ident ||
            (pr->at(0).text != "op" && pr->at(0).text != "user" &&
             pr->at(0).text != "default"))
          err(ins, "prio must be op, user or default");
        break;
      }
      case Opcode::ReleaseLayout:
        expect_args(ins, 1);
        if (!ins.args.empty()) check_defined(env, ins, ins.args[0]);
        break;
      case Opcode::LocalAlias: {
        expect_args(ins, 2);
        for (auto &a : ins.args)
          if (a.kind != Operand::Kind::Ident || !p.find_buffer(a.text))
            err(ins, "local_alias expects declared buffer names");
        break;
      }
      case Opcode::LayoutConvert: {
        expect_args(ins, 1);
        StaticType t = StaticType::unknown();
        if (!ins.args.empty() && check_defined(env, ins, ins.args[0]))
          t = type_of(env, ins.args[0]);
        auto *e = ins.attr("enc");
        if (!e || e->size() != 1 || e->at(0).kind != Operand::Kind::Ident ||
            !parse_layout_encoding(e->at(0).text))
          err(ins, "missing or invalid enc(...)");
        define(env, ins, t);
        break;
      }

      case Opcode::For: {
        expect_args(ins, 2);
        for (auto &a : ins.args)
          if (a.kind == Operand::Kind::Reg) check_defined(env, ins, a);
        Env inner = env;
        inner[ins.result] = StaticType::scalar();
        check_body(inner, ins.body);
        merge(env, inner, ins);
        break;
      }
      case Opcode::While: {
        expect_args(ins, 1);
        if (!ins.args.empty() && ins.args[0].kind != Operand::Kind::Reg)
          err(ins, "while condition must be a scalar register");
        else if (!ins.args.empty())
          check_defined(env, ins, ins.args[0]);
        Env inner = env;
        check_body(inner, ins.body);
        merge(env, inner, ins);
        break;
      }
      case Opcode::If: {
        expect_args(ins, 1);
        if (!ins.args.empty()) check_defined(env, ins, ins.args[0]);
        Env then_env = env, else_env = env;
        check_body(then_env, ins.body);
        check_body(else_env, ins.else_body);
        merge(env, then_env, ins);
        merge(env, else_env, ins);
        break;
      }
    }
  }

  // Keeps definitions that agree; anything divergent becomes Unknown.
  void merge(Env &env, const Env &branch, const Instruction &) {
    for (auto &kv : branch) {
      auto it = env.find(kv.first);
      if (it == env.end())
        env[kv.first] = kv.second;
      else if (!(it->second == kv.second))
        it->second = StaticType::unknown();
    }
  }

  // --- program-level checks --------------------------------------------------

  void run(std::int64_t capacity) {
    for (int i = 0; i < 3; ++i) {
      if (p.grid[i] < 1) err(-1, "grid extents must be positive");
      if (p.cluster[i] < 1) err(-1, "cluster extents must be positive");
    }
    if (p.num_warps < 1) err(-1, "num_warps must be positive");
    if (p.cluster_size() > 0 && p.grid_ctas() % p.cluster_size() != 0)
      err(-1, "cluster size must divide the grid CTA count");
    if (p.tiles && *p.tiles < 1) err(-1, "tiles must be positive");

    std::map<std::string, int> names;
    for (auto &b : p.buffers) {
      if (names.count(b.name)) err(-1, "duplicate buffer '" + b.name + "'");
      names[b.name] = 1;
      if (b.stages < 1) err(-1, "buffer '" + b.name + "': stages must be >= 1");
      if (b.shape.empty()) err(-1, "buffer '" + b.name + "': empty shape");
      for (auto d : b.shape)
        if (d < 1) err(-1, "buffer '" + b.name + "': extents must be positive");
    }
    std::int64_t total = 0;
    for (auto &b : p.buffers) total += b.total_bytes();
    if (total > capacity)
      err(-1, "shared-memory capacity exceeded: " + std::to_string(total) +
                  " > " + std::to_string(capacity) + " bytes");

    for (auto &b : p.barriers) {
      if (names.count(b.name)) err(-1, "duplicate declaration '" + b.name + "'");
      names[b.name] = 1;
      if (b.count < 1) err(-1, "barrier '" + b.name + "': count must be >= 1");
      if (b.arrive_count < 1)
        err(-1, "barrier '" + b.name + "': arrive must be >= 1");
    }

    // Warp budget.
    int claimed = 0, defaults = 0;
    for (auto &t : p.tasks) {
      if (t.replicate < 1) err(-1, "replicate must be >= 1");
      if (t.kind == TaskRegion::Kind::Default) {
        ++defaults;
        if (t.replicate != 1) err(-1, "default region cannot be replicated");
      } else {
        if (t.num_warps < 1) err(-1, "explicit region needs warps >= 1");
        claimed += t.num_warps * std::max(1, t.replicate);
      }
    }
    if (defaults > 1) err(-1, "at most one default region is allowed");
    if (claimed > p.num_warps)
      err(-1, "warp budget exceeded: explicit regions claim " +
                  std::to_string(claimed) + " of " +
                  std::to_string(p.num_warps) + " warps");
    else if (defaults == 1 && claimed == p.num_warps)
      err(-1, "warp budget exceeded: default region has no warps left");

    // Instruction streams.
    Env prologue_env;
    for (auto &s : p.scalar_params) prologue_env[s.name] = StaticType::scalar();
    in_prologue = true;
    check_body(prologue_env, p.prologue);
    in_prologue = false;
    for (auto &t : p.tasks) {
      Env env = prologue_env;
      env["replica_id"] = StaticType::scalar();
      check_body(env, t.body);
    }
  }
};

}  // namespace

ValidationReport validate(const KernelProgram &p,
                          std::int64_t shared_capacity_bytes) {
  Checker c{p};
  c.run(shared_capacity_bytes);
  return std::move(c.report);
}

KernelProgram expand_replicas(const KernelProgram &p) {
  KernelProgram out = p;
  out.tasks.clear();
  for (auto &t : p.tasks) {
    if (t.kind == TaskRegion::Kind::Explicit && t.replicate > 1) {
      for (int i = 0; i < t.replicate; ++i) {
        TaskRegion r = t;
        r.replicate = 1;
        r.replica_id = i;
        out.tasks.push_back(std::move(r));
      }
    } else {
      out.tasks.push_back(t);
    }
  }
  int id = 0;
  for_each_instruction(out, [&](Instruction &ins) { ins.id = id++; });
  out.next_instr_id = id;
  return out;
}

}  // namespace mimw
