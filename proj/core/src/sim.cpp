#include "mimw/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <tuple>
#include <variant>

#include "mimw/sync.hpp"
#include "nlohmann/json.hpp"

namespace mimw {
namespace {

using json = nlohmann::ordered_json;
using VC = std::vector<std::uint64_t>;

void vc_join(VC &a, const VC &b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] = std::max(a[i], b[i]);
}

// ---------------------------------------------------------------------------
// Runtime values
// ---------------------------------------------------------------------------

struct ViewVal {
  int cta = 0;  // absolute CTA index the view addresses
  std::string buffer;
  int stage = 0;
  bool remote = false;
};

struct CtxVal {
  int idx = 0;  // index into the owning CTA's CLC context list
};

using Value = std::variant<double, Tile, ViewVal, CtxVal>;
using Env = std::map<std::string, Value>;

// ---------------------------------------------------------------------------
// Dense tile arithmetic (right-aligned broadcasting, fixed reduction order)
// ---------------------------------------------------------------------------

Tile as_tile(const Value &v) {
  if (std::holds_alternative<Tile>(v)) return std::get<Tile>(v);
  Tile t;
  t.data.push_back(static_cast<float>(std::get<double>(v)));
  return t;  // rank-0 tile
}

Tile broadcast_apply(const Tile &a, const Tile &b,
                     const std::function<float(float, float)> &fn) {
  size_t r = std::max(a.shape.size(), b.shape.size());
  std::vector<std::int64_t> shape(r), sa(r, 0), sb(r, 0);
  auto fill = [&](const Tile &t, std::vector<std::int64_t> &strides) {
    std::int64_t stride = 1;
    size_t rt = t.shape.size();
    for (size_t i = rt; i-- > 0;) {
      size_t o = i + (r - rt);
      strides[o] = t.shape[i] == 1 ? 0 : stride;
      stride *= t.shape[i];
    }
    for (size_t i = 0; i < rt; ++i) {
      size_t o = i + (r - rt);
      shape[o] = std::max(shape[o], t.shape[i]);
    }
  };
  for (auto &d : shape) d = 1;
  fill(a, sa);
  fill(b, sb);
  Tile out(shape);
  std::vector<std::int64_t> idx(r, 0);
  for (std::int64_t lin = 0; lin < out.elems(); ++lin) {
    std::int64_t ia = 0, ib = 0;
    for (size_t d = 0; d < r; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    out.data[static_cast<size_t>(lin)] =
        fn(a.data[static_cast<size_t>(ia)], b.data[static_cast<size_t>(ib)]);
    for (size_t d = r; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

Tile map_tile(const Tile &a, const std::function<float(float)> &fn) {
  Tile out = a;
  for (auto &x : out.data) x = fn(x);
  return out;
}

// ---------------------------------------------------------------------------
// Simulator state
// ---------------------------------------------------------------------------

struct Frame {
  const std::vector<Instruction> *body = nullptr;
  size_t ip = 0;
  const Instruction *owner = nullptr;  // For/While
  double var = 0, hi = 0, stp = 1;
};

struct Block {
  enum class Kind {
    None,
    Prologue,     // region task waits for its CTA's prologue
    Barrier,      // named barrier wait
    ClcEmpty,     // producer waits empty slot
    ClcFull,      // consumer waits full slot
    DotWait,      // async_dot_wait
    Collective,   // collective_dot rendezvous
    ClusterBar,   // cluster_barrier
  };
  Kind kind = Kind::None;
  std::string name;  // barrier name
  int idx = 0, parity = 0;
  int ctx = 0, stage = 0;
  std::int64_t count = 0;       // DotWait threshold
  std::string coll_key;
  long coll_slot = 0;
  int cb_instr = -1;  // ClusterBar instruction id
};

struct Task {
  int global_idx = 0;
  int cta = 0;
  int region = -1;  // -1 = prologue
  std::string label;
  Env env;
  std::vector<Frame> frames;
  enum class Status { Runnable, Blocked, Done } status = Status::Runnable;
  Block block;
  int micro = 0;
  bool started = false;
  long steps = 0;
  VC vc;
  // async dot engine
  long dots_outstanding = 0;
  Tile last_dot;
  // CLC round counters, keyed by context index
  std::map<int, long> prod_round, cons_round;
  bool contributed_cluster_bar = false;
};

struct BarrierInst {
  MbarrierState mb;
  VC release_vc;
};

struct ClcCtx {
  int stages = 1, consumers = 1;
  std::vector<BarrierInst> empty, full;
  std::vector<std::array<std::int32_t, 4>> slots;
};

struct CtaState {
  std::map<std::string, std::vector<BarrierInst>> barriers;
  // shared memory: buffer name -> one tile per stage
  std::map<std::string, std::vector<Tile>> smem;
  std::vector<ClcCtx> clc;
  bool initialized = false;
  Env prologue_env;
  VC prologue_vc;
};

struct GlobalTensor {
  Tile data;
  std::vector<std::int64_t> loads, stores;
  bool is_output = false;
};

struct Frag {
  Tile a, b, acc;
  VC vc;
};

struct CollSlot {
  std::map<int, Frag> frags;  // rank -> fragment
  bool fired = false;
  bool delivered = false;
  std::map<int, Tile> results;
  VC joint;
};

struct CollGroup {
  std::vector<int> ranks;
  std::map<int, long> issue_count;
  std::map<long, CollSlot> slots;
};

struct ClusterBarState {
  int arrived = 0;
  VC vc;
};

struct AsyncEv {
  long when = 0;
  long seq = 0;
  std::function<void()> apply;
};
struct EvCmp {
  bool operator()(const AsyncEv &a, const AsyncEv &b) const {
    return std::tie(a.when, a.seq) > std::tie(b.when, b.seq);
  }
};

struct Loc {  // race-detector bookkeeping for one (cta, buffer, stage)
  std::map<int, std::pair<std::uint64_t, std::string>> writers, readers;
};

struct Sim {
  const KernelProgram &p;
  const SimConfig &cfg;
  SimResult res;

  long step = 0;
  long ev_seq = 0;
  bool halted = false;

  int cluster_sz = 1;
  int n_ctas = 1;
  int tasks_per_cta = 1;

  std::vector<CtaState> ctas;
  std::vector<Task> tasks;
  std::map<std::string, GlobalTensor> globals;
  std::map<std::string, double> scalar_params;
  std::priority_queue<AsyncEv, std::vector<AsyncEv>, EvCmp> heap;
  std::int64_t next_tile = 0;
  std::map<std::string, CollGroup> coll;  // key: "cluster|r0,r1"
  std::map<std::pair<int, int>, ClusterBarState> cluster_bars;
  std::map<std::tuple<int, std::string, int>, Loc> locs;
  std::set<std::string> reported_races;
  std::mt19937_64 rng;
  size_t rr_cursor = 0;
  std::string trace;

  Sim(const KernelProgram &prog, const SimConfig &c) : p(prog), cfg(c) {
    rng.seed(cfg.seed);
  }

  // --- tracing -------------------------------------------------------------

  void emit(const Task *t, const std::string &event, json detail) {
    if (!cfg.trace_enabled) return;
    json rec;
    rec["step"] = step;
    rec["cluster"] = t ? t->cta / cluster_sz : -1;
    rec["cta"] = t ? t->cta : -1;
    rec["task"] = t ? t->label : "sim";
    rec["event"] = event;
    rec["detail"] = std::move(detail);
    trace += rec.dump();
    trace += '\n';
  }

  void fault(SimFaultInfo::Kind k, const std::string &msg, const Task *t) {
    if (halted) return;
    halted = true;
    res.ok = false;
    res.faults.push_back({k, msg});
    emit(t, "fault", {{"message", msg}});
  }

  void race(const std::string &msg, const Task *t) {
    if (!cfg.race_detector) return;
    if (!reported_races.insert(msg).second) return;
    res.races.push_back({SimFaultInfo::Kind::RaceDetected, msg});
    emit(t, "race", {{"message", msg}});
  }

  // --- race detector -------------------------------------------------------

  void rd_write(int cta, const std::string &buf, int stage, int writer,
                const VC &wvc, const std::string &site, const Task *t) {
    if (!cfg.race_detector) return;
    Loc &l = locs[{cta, buf, stage}];
    auto check = [&](const std::map<int, std::pair<std::uint64_t, std::string>>
                         &prev,
                     const char *kindtag) {
      for (auto &kv : prev) {
        if (kv.first == writer) continue;
        if (wvc[static_cast<size_t>(kv.first)] < kv.second.first)
          race(std::string(kindtag) + " race on " + buf + "[stage " +
                   std::to_string(stage) + "] of cta " + std::to_string(cta) +
                   ": " + kv.second.second + " vs " + site,
               t);
      }
    };
    check(l.writers, "W/W");
    check(l.readers, "R/W");
    l.writers[writer] = {wvc[static_cast<size_t>(writer)], site};
  }

  void rd_read(int cta, const std::string &buf, int stage, int reader,
               const VC &rvc, const std::string &site, const Task *t) {
    if (!cfg.race_detector) return;
    Loc &l = locs[{cta, buf, stage}];
    for (auto &kv : l.writers) {
      if (kv.first == reader) continue;
      if (rvc[static_cast<size_t>(kv.first)] < kv.second.first)
        race("R/W race on " + buf + "[stage " + std::to_string(stage) +
                 "] of cta " + std::to_string(cta) + ": " + kv.second.second +
                 " vs " + site,
             t);
    }
    l.readers[reader] = {rvc[static_cast<size_t>(reader)], site};
  }

  // --- setup ----------------------------------------------------------------

  bool setup(const std::map<std::string, Tile> &inputs,
             const std::map<std::string, double> &scalars) {
    cluster_sz = static_cast<int>(p.cluster_size());
    n_ctas = static_cast<int>(p.grid_ctas());
    tasks_per_cta = 1 + static_cast<int>(p.tasks.size());

    std::int64_t total = 0;
    for (auto &b : p.buffers) total += b.total_bytes();
    if (total > cfg.shared_capacity_bytes) {
      fault(SimFaultInfo::Kind::CapacityExceeded,
            "shared-memory capacity exceeded: " + std::to_string(total) +
                " bytes",
            nullptr);
      return false;
    }

    for (auto &tp : p.tensor_params) {
      GlobalTensor g;
      g.is_output = tp.is_output;
      if (tp.is_output) {
        g.data = Tile(tp.shape);
      } else {
        auto it = inputs.find(tp.name);
        if (it == inputs.end() || it->second.shape != tp.shape) {
          fault(SimFaultInfo::Kind::Runtime,
                "missing or mis-shaped input tensor '" + tp.name + "'",
                nullptr);
          return false;
        }
        g.data = it->second;
      }
      g.loads.assign(static_cast<size_t>(g.data.elems()), 0);
      g.stores.assign(static_cast<size_t>(g.data.elems()), 0);
      globals.emplace(tp.name, std::move(g));
    }
    for (auto &sp : p.scalar_params) {
      auto it = scalars.find(sp.name);
      if (it == scalars.end()) {
        fault(SimFaultInfo::Kind::Runtime,
              "missing scalar parameter '" + sp.name + "'", nullptr);
        return false;
      }
      scalar_params[sp.name] = it->second;
    }

    ctas.resize(static_cast<size_t>(n_ctas));
    for (auto &c : ctas)
      for (auto &b : p.buffers)
        c.smem[b.name].assign(static_cast<size_t>(b.stages), Tile(b.shape));

    size_t n_tasks = static_cast<size_t>(n_ctas * tasks_per_cta);
    tasks.resize(n_tasks);
    for (int c = 0; c < n_ctas; ++c) {
      for (int s = 0; s < tasks_per_cta; ++s) {
        Task &t = tasks[static_cast<size_t>(c * tasks_per_cta + s)];
        t.global_idx = c * tasks_per_cta + s;
        t.cta = c;
        t.region = s - 1;
        t.label = s == 0 ? "prologue" : "task" + std::to_string(s - 1);
        t.vc.assign(n_tasks, 0);
        t.vc[static_cast<size_t>(t.global_idx)] = 1;
        if (s == 0) {
          t.frames.push_back({&p.prologue, 0, nullptr});
        } else {
          t.status = Task::Status::Blocked;
          t.block.kind = Block::Kind::Prologue;
          t.frames.push_back(
              {&p.tasks[static_cast<size_t>(s - 1)].body, 0, nullptr});
        }
      }
    }
    return true;
  }

  // --- operand / env helpers -------------------------------------------------

  Task *cur = nullptr;  // task being executed (for fault attribution)

  Value eval(const Env &env, const Operand &o) {
    switch (o.kind) {
      case Operand::Kind::Imm:
        return o.imm;
      case Operand::Kind::Reg: {
        auto it = env.find(o.text);
        if (it != env.end()) return it->second;
        fault(SimFaultInfo::Kind::Runtime, "read of undefined value %" + o.text,
              cur);
        return 0.0;
      }
      default:
        fault(SimFaultInfo::Kind::Runtime, "malformed operand", cur);
        return 0.0;
    }
  }

  double scalar(const Env &env, const Operand &o) {
    Value v = eval(env, o);
    if (std::holds_alternative<double>(v)) return std::get<double>(v);
    if (std::holds_alternative<Tile>(v)) {
      const Tile &t = std::get<Tile>(v);
      if (t.elems() == 1) return t.data[0];
    }
    fault(SimFaultInfo::Kind::Runtime, "expected scalar operand", cur);
    return 0.0;
  }

  std::int64_t attr_i64(const Env &env, const Instruction &ins,
                        const std::string &name, std::int64_t dflt) {
    auto *v = ins.attr(name);
    if (!v || v->empty()) return dflt;
    return static_cast<std::int64_t>(std::llround(scalar(env, (*v)[0])));
  }

  int barrier_idx(const Env &env, const Operand &o, int count) {
    std::int64_t i =
        o.idx_is_reg
            ? static_cast<std::int64_t>(std::llround(
                  scalar(env, Operand::reg(o.idx_reg))))
            : o.idx_imm;
    return static_cast<int>(((i % count) + count) % count);
  }

  BarrierInst *barrier_of(int cta, const Env &env, const Operand &o) {
    auto *decl = p.find_barrier(o.text);
    if (!decl) {
      fault(SimFaultInfo::Kind::Runtime,
            "undeclared barrier '" + o.text + "'", cur);
      return nullptr;
    }
    auto &vec = ctas[static_cast<size_t>(cta)].barriers[o.text];
    if (vec.empty()) vec.resize(static_cast<size_t>(decl->count));
    return &vec[static_cast<size_t>(barrier_idx(env, o, decl->count))];
  }

  int cluster_base(int cta) const { return (cta / cluster_sz) * cluster_sz; }

  void init_cta_barriers(int cta) {
    CtaState &c = ctas[static_cast<size_t>(cta)];
    if (c.initialized) return;
    c.initialized = true;
    for (auto &b : p.barriers) {
      auto &vec = c.barriers[b.name];
      vec.resize(static_cast<size_t>(b.count));
      for (auto &inst : vec) {
        inst.mb.init(b.arrive_count);
        inst.release_vc.assign(tasks.size(), 0);
      }
    }
  }

  void count_flip(int cta, const std::string &name, int idx) {
    res.barrier_flips["cta" + std::to_string(cta) + "." + name + "[" +
                      std::to_string(idx) + "]"]++;
  }

  // Applies an arrive with release semantics. Returns false on fault.
  bool apply_arrive(int cta, const std::string &name, int idx,
                    BarrierInst *inst, int n, const VC &release,
                    Task *attributed) {
    if (!ctas[static_cast<size_t>(cta)].initialized || !inst->mb.initialized) {
      fault(SimFaultInfo::Kind::UninitializedBarrier,
            "arrive on uninitialized barrier '" + name + "' of cta " +
                std::to_string(cta),
            attributed);
      return false;
    }
    vc_join(inst->release_vc, release);
    bool flipped = false;
    auto st = inst->mb.arrive(n, &flipped);
    if (st == MbarrierState::Status::ArriveOverflow) {
      fault(SimFaultInfo::Kind::ArriveOverflow,
            "arrive overflow on barrier '" + name + "' of cta " +
                std::to_string(cta),
            attributed);
      return false;
    }
    if (flipped) {
      count_flip(cta, name, idx);
      emit(attributed, "flip",
           {{"barrier", name}, {"cta", cta}, {"phase", inst->mb.phase}});
    }
    return true;
  }

  void schedule(long delay, std::function<void()> fn) {
    heap.push({step + std::max<long>(0, delay), ev_seq++, std::move(fn)});
  }

  // --- global memory ---------------------------------------------------------

  bool region_bounds_ok(const GlobalTensor &g,
                        const std::vector<std::int64_t> &off,
                        const std::vector<std::int64_t> &shape) {
    if (off.size() != g.data.shape.size() || shape.size() != off.size())
      return false;
    for (size_t d = 0; d < off.size(); ++d)
      if (off[d] < 0 || off[d] + shape[d] > g.data.shape[d]) return false;
    return true;
  }

  // Iterates a region of a global tensor in row-major order.
  template <typename Fn>
  void for_region(const GlobalTensor &g, const std::vector<std::int64_t> &off,
                  const std::vector<std::int64_t> &shape, Fn fn) {
    size_t r = shape.size();
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    for (std::int64_t lin = 0; lin < n; ++lin) {
      std::int64_t flat = 0;
      for (size_t d = 0; d < r; ++d)
        flat = flat * g.data.shape[d] + (off[d] + idx[d]);
      fn(static_cast<size_t>(lin), static_cast<size_t>(flat));
      for (size_t d = r; d-- > 0;) {
        if (++idx[d] < shape[d]) break;
        idx[d] = 0;
      }
    }
  }

  std::vector<std::int64_t> offsets_of(const Env &env, const Instruction &ins,
                                       size_t rank) {
    std::vector<std::int64_t> off(rank, 0);
    if (auto *o = ins.attr("offset")) {
      for (size_t i = 0; i < o->size() && i < rank; ++i)
        off[i] = static_cast<std::int64_t>(std::llround(scalar(env, (*o)[i])));
    }
    return off;
  }

  // --- bank-conflict model -----------------------------------------------------

  void bank_account(const std::string &buf) {
    auto *b = p.find_buffer(buf);
    if (!b || !b->layout) return;
    if (b->layout->kind == LayoutEncoding::Kind::RowMajor &&
        b->shape.back() % 32 == 0)
      res.bank_conflicts++;
  }

  // --- instruction execution --------------------------------------------------
  // Returns true when the instruction completed (ip may advance); false when
  // the task must block and retry.

  bool exec_instr(Task &t, const Instruction &ins) {
    Env &env = t.env;
    switch (ins.op) {
      case Opcode::Const:
        env[ins.result] = ins.args[0].imm;
        return true;
      case Opcode::CtaRank:
        env[ins.result] = static_cast<double>(t.cta % cluster_sz);
        return true;
      case Opcode::ClusterId:
        env[ins.result] = static_cast<double>(t.cta / cluster_sz);
        return true;
      case Opcode::ReplicaId:
        env[ins.result] = env.count("replica_id")
                              ? env["replica_id"]
                              : Value(0.0);
        return true;
      case Opcode::NumCtas:
        env[ins.result] = static_cast<double>(n_ctas);
        return true;
      case Opcode::Copy:
      case Opcode::LayoutConvert:
        env[ins.result] = eval(env, ins.args[0]);
        return true;

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
        return exec_arith(t, ins);

      case Opcode::Splat: {
        double v = scalar(env, ins.args[0]);
        std::vector<std::int64_t> shape;
        for (auto &o : *ins.attr("shape"))
          shape.push_back(static_cast<std::int64_t>(o.imm));
        env[ins.result] = Tile(shape, static_cast<float>(v));
        return true;
      }
      case Opcode::Iota: {
        std::int64_t n = static_cast<std::int64_t>((*ins.attr("shape"))[0].imm);
        Tile out({n});
        for (std::int64_t i = 0; i < n; ++i)
          out.data[static_cast<size_t>(i)] = static_cast<float>(i);
        env[ins.result] = std::move(out);
        return true;
      }
      case Opcode::Reshape: {
        Tile v = as_tile(eval(env, ins.args[0]));
        std::vector<std::int64_t> shape;
        for (auto &o : *ins.attr("shape"))
          shape.push_back(static_cast<std::int64_t>(o.imm));
        v.shape = shape;
        env[ins.result] = std::move(v);
        return true;
      }
      case Opcode::Transpose: {
        Tile v = as_tile(eval(env, ins.args[0]));
        Tile out({v.shape[1], v.shape[0]});
        for (std::int64_t i = 0; i < v.shape[0]; ++i)
          for (std::int64_t j = 0; j < v.shape[1]; ++j)
            out.data[static_cast<size_t>(j * v.shape[0] + i)] =
                v.data[static_cast<size_t>(i * v.shape[1] + j)];
        env[ins.result] = std::move(out);
        return true;
      }
      case Opcode::ReduceSum:
      case Opcode::ReduceMax:
        return exec_reduce(t, ins);
      case Opcode::Rsqrt:
      case Opcode::Exp:
      case Opcode::Log:
        return exec_unary(t, ins);

      case Opcode::Dot: {
        Tile out = dot_of(env, ins);
        env[ins.result] = std::move(out);
        return true;
      }
      case Opcode::AsyncDot: {
        Tile out = dot_of(env, ins);
        env[ins.result] = out;
        t.dots_outstanding++;
        Task *tp = &t;
        schedule(cfg.mma_latency, [this, tp, out]() {
          tp->dots_outstanding--;
          tp->last_dot = out;
        });
        return true;
      }
      case Opcode::AsyncDotWait: {
        std::int64_t n = attr_i64(env, ins, "count", 0);
        if (t.dots_outstanding > n) {
          t.block = {};
          t.block.kind = Block::Kind::DotWait;
          t.block.count = n;
          return false;
        }
        if (!ins.result.empty()) env[ins.result] = eval(env, ins.args[0]);
        return true;
      }
      case Opcode::CollectiveDot:
        return exec_collective(t, ins);

      case Opcode::GlobalLoad:
        return exec_global_load(t, ins);
      case Opcode::GlobalStore:
        return exec_global_store(t, ins);
      case Opcode::View: {
        ViewVal v;
        v.cta = t.cta;
        v.buffer = ins.args[0].text;
        auto *b = p.find_buffer(v.buffer);
        std::int64_t s = attr_i64(env, ins, "stage", 0);
        v.stage = static_cast<int>(((s % b->stages) + b->stages) % b->stages);
        env[ins.result] = v;
        return true;
      }
      case Opcode::RemoteView: {
        Value base = eval(env, ins.args[0]);
        if (!std::holds_alternative<ViewVal>(base)) {
          fault(SimFaultInfo::Kind::Runtime, "remote_view expects a view", &t);
          return true;
        }
        ViewVal v = std::get<ViewVal>(base);
        std::int64_t rank = attr_i64(env, ins, "rank", 0);
        if (rank < 0 || rank >= cluster_sz) {
          fault(SimFaultInfo::Kind::Runtime, "remote rank outside cluster", &t);
          return true;
        }
        v.cta = cluster_base(t.cta) + static_cast<int>(rank);
        v.remote = v.cta != t.cta;
        env[ins.result] = v;
        return true;
      }
      case Opcode::LocalLoad: {
        Value vv = eval(env, ins.args[0]);
        if (!std::holds_alternative<ViewVal>(vv)) {
          fault(SimFaultInfo::Kind::Runtime, "local_load expects a view", &t);
          return true;
        }
        const ViewVal &v = std::get<ViewVal>(vv);
        rd_read(v.cta, v.buffer, v.stage, t.global_idx, t.vc,
                t.label + "@instr" + std::to_string(ins.id), &t);
        bank_account(v.buffer);
        env[ins.result] =
            ctas[static_cast<size_t>(v.cta)].smem[v.buffer]
                [static_cast<size_t>(v.stage)];
        emit(&t, "local_load", {{"buffer", v.buffer}, {"stage", v.stage}});
        return true;
      }
      case Opcode::LocalStore: {
        Value vv = eval(env, ins.args[0]);
        const ViewVal &v = std::get<ViewVal>(vv);
        Tile val = as_tile(eval(env, ins.args[1]));
        rd_write(v.cta, v.buffer, v.stage, t.global_idx, t.vc,
                 t.label + "@instr" + std::to_string(ins.id), &t);
        bank_account(v.buffer);
        ctas[static_cast<size_t>(v.cta)].smem[v.buffer]
            [static_cast<size_t>(v.stage)] = std::move(val);
        emit(&t, "local_store", {{"buffer", v.buffer}, {"stage", v.stage}});
        return true;
      }
      case Opcode::AsyncCopy:
        return exec_async_copy(t, ins);
      case Opcode::AsyncRemoteStore:
        return exec_remote_store(t, ins);

      case Opcode::BarrierArrive:
        return exec_arrive(t, ins);
      case Opcode::BarrierWait:
        return exec_wait(t, ins);
      case Opcode::BarrierExpect: {
        BarrierInst *b = barrier_of(t.cta, env, ins.args[0]);
        if (!b) return true;
        std::int64_t bytes = attr_i64(env, ins, "bytes", 0);
        if (!b->mb.initialized) {
          fault(SimFaultInfo::Kind::UninitializedBarrier,
                "expect on uninitialized barrier '" + ins.args[0].text + "'",
                &t);
          return true;
        }
        b->mb.expect(bytes);
        emit(&t, "expect", {{"barrier", ins.args[0].text}, {"bytes", bytes}});
        return true;
      }
      case Opcode::ClusterBarrier:
        return exec_cluster_barrier(t, ins);

      case Opcode::ClcContext: {
        CtaState &c = ctas[static_cast<size_t>(t.cta)];
        ClcCtx ctx;
        ctx.stages = static_cast<int>(attr_i64(env, ins, "stages", 1));
        ctx.consumers = static_cast<int>(attr_i64(env, ins, "consumers", 1));
        ctx.empty.resize(static_cast<size_t>(ctx.stages));
        ctx.full.resize(static_cast<size_t>(ctx.stages));
        ctx.slots.assign(static_cast<size_t>(ctx.stages), {0, 0, 0, 0});
        for (auto &b : ctx.empty) {
          // "Full of emptiness": every stage starts acquirable.
          b.mb.init(ctx.consumers, /*start_phase=*/1);
          b.release_vc.assign(tasks.size(), 0);
        }
        for (auto &b : ctx.full) {
          b.mb.init(1);
          b.release_vc.assign(tasks.size(), 0);
        }
        env[ins.result] = CtxVal{static_cast<int>(c.clc.size())};
        c.clc.push_back(std::move(ctx));
        return true;
      }
      case Opcode::ClcProducer:
        return exec_clc_producer(t, ins);
      case Opcode::ClcConsumer:
        return exec_clc_consumer(t, ins);

      case Opcode::RequireLayout:
      case Opcode::ReleaseLayout:
      case Opcode::LocalAlias:
        return true;  // compile-time only

      case Opcode::For: {
        double lo = scalar(env, ins.args[0]);
        double hi = scalar(env, ins.args[1]);
        double stp = 1;
        if (auto *s = ins.attr("step")) stp = scalar(env, (*s)[0]);
        if (stp <= 0) {
          fault(SimFaultInfo::Kind::Runtime, "for step must be positive", &t);
          return true;
        }
        if (lo < hi) {
          env[ins.result] = lo;
          Frame f;
          f.body = &ins.body;
          f.owner = &ins;
          f.var = lo;
          f.hi = hi;
          f.stp = stp;
          t.frames.push_back(f);
        }
        return true;
      }
      case Opcode::While: {
        if (scalar(env, ins.args[0]) != 0) {
          Frame f;
          f.body = &ins.body;
          f.owner = &ins;
          t.frames.push_back(f);
        }
        return true;
      }
      case Opcode::If: {
        const auto &body =
            scalar(env, ins.args[0]) != 0 ? ins.body : ins.else_body;
        if (!body.empty()) {
          Frame f;
          f.body = &body;
          t.frames.push_back(f);
        }
        return true;
      }
    }
    return true;
  }

  bool exec_arith(Task &t, const Instruction &ins) {
    Env &env = t.env;
    Value va = eval(env, ins.args[0]);
    Value vb = eval(env, ins.args[1]);
    auto fn = [&ins](double a, double b) -> double {
      switch (ins.op) {
        case Opcode::Add: return a + b;
        case Opcode::Sub: return a - b;
        case Opcode::Mul: return a * b;
        case Opcode::Div: return a / b;
        case Opcode::Mod: return std::fmod(a, b);
        case Opcode::Max: return std::max(a, b);
        case Opcode::Eq: return a == b ? 1 : 0;
        case Opcode::Ne: return a != b ? 1 : 0;
        case Opcode::Lt: return a < b ? 1 : 0;
        case Opcode::Le: return a <= b ? 1 : 0;
        case Opcode::Gt: return a > b ? 1 : 0;
        case Opcode::Ge: return a >= b ? 1 : 0;
        default: return 0;
      }
    };
    if (std::holds_alternative<double>(va) &&
        std::holds_alternative<double>(vb)) {
      env[ins.result] = fn(std::get<double>(va), std::get<double>(vb));
      return true;
    }
    Tile ta = as_tile(va), tb = as_tile(vb);
    env[ins.result] = broadcast_apply(ta, tb, [&fn](float a, float b) {
      return static_cast<float>(fn(a, b));
    });
    return true;
  }

  bool exec_reduce(Task &t, const Instruction &ins) {
    Env &env = t.env;
    Tile v = as_tile(eval(env, ins.args[0]));
    std::int64_t ax = attr_i64(env, ins, "axis", 0);
    std::vector<std::int64_t> shape = v.shape;
    shape[static_cast<size_t>(ax)] = 1;
    Tile out(shape, ins.op == Opcode::ReduceMax
                        ? -std::numeric_limits<float>::infinity()
                        : 0.0f);
    // Fixed ascending-index order for bit determinism.
    size_t r = v.shape.size();
    std::vector<std::int64_t> idx(r, 0);
    for (std::int64_t lin = 0; lin < v.elems(); ++lin) {
      std::int64_t flat = 0;
      for (size_t d = 0; d < r; ++d) {
        std::int64_t i = d == static_cast<size_t>(ax) ? 0 : idx[d];
        flat = flat * shape[d] + i;
      }
      float &acc = out.data[static_cast<size_t>(flat)];
      float x = v.data[static_cast<size_t>(lin)];
      acc = ins.op == Opcode::ReduceMax ? std::max(acc, x) : acc + x;
      for (size_t d = r; d-- > 0;) {
        if (++idx[d] < v.shape[d]) break;
        idx[d] = 0;
      }
    }
    env[ins.result] = std::move(out);
    return true;
  }

  bool exec_unary(Task &t, const Instruction &ins) {
    Env &env = t.env;
    Value v = eval(env, ins.args[0]);
    auto fn = [&ins](double x) -> double {
      switch (ins.op) {
        case Opcode::Rsqrt: return 1.0 / std::sqrt(x);
        case Opcode::Exp: return std::exp(x);
        case Opcode::Log: return std::log(x);
        default: return x;
      }
    };
    if (std::holds_alternative<double>(v)) {
      env[ins.result] = fn(std::get<double>(v));
    } else {
      env[ins.result] = map_tile(as_tile(v), [&fn](float x) {
        return static_cast<float>(fn(x));
      });
    }
    return true;
  }

  Tile dot_of(Env &env, const Instruction &ins) {
    Tile a = as_tile(eval(env, ins.args[0]));
    Tile b = as_tile(eval(env, ins.args[1]));
    Value accv = eval(env, ins.args[2]);
    std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tile out({m, n});
    bool acc_tile = std::holds_alternative<Tile>(accv);
    const Tile *acc = acc_tile ? &std::get<Tile>(accv) : nullptr;
    float acc_s = acc_tile ? 0.0f
                           : static_cast<float>(std::get<double>(accv));
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) {
        float s = acc ? acc->data[static_cast<size_t>(i * n + j)] : acc_s;
        for (std::int64_t kk = 0; kk < k; ++kk)
          s += a.data[static_cast<size_t>(i * k + kk)] *
               b.data[static_cast<size_t>(kk * n + j)];
        out.data[static_cast<size_t>(i * n + j)] = s;
      }
    return out;
  }

  bool exec_global_load(Task &t, const Instruction &ins) {
    Env &env = t.env;
    auto &g = globals[ins.args[0].text];
    std::vector<std::int64_t> shape;
    for (auto &o : *ins.attr("shape"))
      shape.push_back(static_cast<std::int64_t>(o.imm));
    auto off = offsets_of(env, ins, g.data.shape.size());
    if (!region_bounds_ok(g, off, shape)) {
      fault(SimFaultInfo::Kind::Runtime,
            "global_load out of bounds on '" + ins.args[0].text + "'", &t);
      return true;
    }
    Tile out(shape);
    for_region(g, off, shape, [&](size_t lin, size_t flat) {
      out.data[lin] = g.data.data[flat];
      g.loads[flat]++;
    });
    env[ins.result] = std::move(out);
    emit(&t, "global_load",
         {{"tensor", ins.args[0].text}, {"elems", out.elems()}});
    return true;
  }

  bool exec_global_store(Task &t, const Instruction &ins) {
    Env &env = t.env;
    auto &g = globals[ins.args[0].text];
    Tile v = as_tile(eval(env, ins.args[1]));
    auto off = offsets_of(env, ins, g.data.shape.size());
    if (!region_bounds_ok(g, off, v.shape)) {
      fault(SimFaultInfo::Kind::Runtime,
            "global_store out of bounds on '" + ins.args[0].text + "'", &t);
      return true;
    }
    for_region(g, off, v.shape, [&](size_t lin, size_t flat) {
      g.data.data[flat] = v.data[lin];
      g.stores[flat]++;
    });
    emit(&t, "global_store",
         {{"tensor", ins.args[0].text}, {"elems", v.elems()}});
    return true;
  }

  bool exec_async_copy(Task &t, const Instruction &ins) {
    Env &env = t.env;
    auto &g = globals[ins.args[0].text];
    Value vv = eval(env, ins.args[1]);
    const ViewVal &view = std::get<ViewVal>(vv);
    auto *buf = p.find_buffer(view.buffer);
    auto off = offsets_of(env, ins, g.data.shape.size());
    if (!region_bounds_ok(g, off, buf->shape)) {
      fault(SimFaultInfo::Kind::Runtime,
            "async_copy out of bounds on '" + ins.args[0].text + "'", &t);
      return true;
    }
    std::int64_t bytes = buf->elems_per_stage() * 4;

    // Global reads happen once at issue regardless of target-set size.
    Tile payload(buf->shape);
    for_region(g, off, buf->shape, [&](size_t lin, size_t flat) {
      payload.data[lin] = g.data.data[flat];
      g.loads[flat]++;
    });

    std::vector<int> targets;
    if (auto *mc = ins.attr("multicast")) {
      for (auto &o : *mc)
        targets.push_back(cluster_base(t.cta) +
                          static_cast<int>(std::llround(scalar(env, o))));
    } else {
      targets.push_back(view.cta);
    }

    std::string bname = ins.args[2].text;
    auto *decl = p.find_barrier(bname);
    int bidx = barrier_idx(env, ins.args[2], decl ? decl->count : 1);

    // Ordering note: expect_bytes should precede the issue on the caller's
    // own barrier instance.
    for (int tgt : targets)
      if (tgt == t.cta) {
        auto &vec = ctas[static_cast<size_t>(tgt)].barriers[bname];
        if (!vec.empty() &&
            vec[static_cast<size_t>(bidx)].mb.tx_bytes < bytes)
          emit(&t, "warn",
               {{"message", "async_copy issued before barrier_expect"}});
      }

    emit(&t, "async_copy",
         {{"tensor", ins.args[0].text},
          {"buffer", view.buffer},
          {"stage", view.stage},
          {"bytes", bytes},
          {"targets", targets.size()}});

    VC snap = t.vc;
    int issuer = t.global_idx;
    int stage = view.stage;
    std::string bufname = view.buffer;
    std::string site = t.label + "@instr" + std::to_string(ins.id);
    Task *tp = &t;
    schedule(cfg.async_copy_latency, [this, payload, targets, bufname, stage,
                                      bname, bidx, bytes, snap, issuer, site,
                                      tp]() {
      for (int tgt : targets) {
        if (tgt < 0 || tgt >= n_ctas) {
          fault(SimFaultInfo::Kind::Runtime, "multicast target outside grid",
                tp);
          return;
        }
        rd_write(tgt, bufname, stage, issuer, snap, site, tp);
        ctas[static_cast<size_t>(tgt)].smem[bufname]
            [static_cast<size_t>(stage)] = payload;
        auto &vec = ctas[static_cast<size_t>(tgt)].barriers[bname];
        if (vec.empty() || !vec[static_cast<size_t>(bidx)].mb.initialized) {
          fault(SimFaultInfo::Kind::UninitializedBarrier,
                "async_copy completion on uninitialized barrier '" + bname +
                    "' of cta " + std::to_string(tgt),
                tp);
          return;
        }
        BarrierInst &inst = vec[static_cast<size_t>(bidx)];
        vc_join(inst.release_vc, snap);
        bool flipped = false;
        auto st = inst.mb.complete_tx(bytes, &flipped);
        if (st == MbarrierState::Status::TxUnderflow) {
          fault(SimFaultInfo::Kind::Runtime,
                "async_copy completion without matching barrier_expect on '" +
                    bname + "'",
                tp);
          return;
        }
        if (flipped) {
          count_flip(tgt, bname, bidx);
          emit(nullptr, "flip",
               {{"barrier", bname}, {"cta", tgt}, {"phase", inst.mb.phase}});
        }
        emit(nullptr, "copy_complete",
             {{"buffer", bufname}, {"stage", stage}, {"cta", tgt}});
      }
    });
    return true;
  }

  bool exec_remote_store(Task &t, const Instruction &ins) {
    Env &env = t.env;
    Value vv = eval(env, ins.args[0]);
    const ViewVal &view = std::get<ViewVal>(vv);
    Tile val = as_tile(eval(env, ins.args[1]));
    std::string bname = ins.args[2].text;
    auto *decl = p.find_barrier(bname);
    int bidx = barrier_idx(env, ins.args[2], decl ? decl->count : 1);
    int tgt = view.cta;

    emit(&t, "remote_store",
         {{"buffer", view.buffer}, {"stage", view.stage}, {"to_cta", tgt}});

    VC snap = t.vc;
    int issuer = t.global_idx;
    int stage = view.stage;
    std::string bufname = view.buffer;
    std::string site = t.label + "@instr" + std::to_string(ins.id);
    Task *tp = &t;
    schedule(cfg.remote_arrive_delay, [this, val, tgt, bufname, stage, bname,
                                       bidx, snap, issuer, site, tp]() {
      if (!ctas[static_cast<size_t>(tgt)].initialized) {
        fault(SimFaultInfo::Kind::UninitializedBarrier,
              "remote store delivery to uninitialized cta " +
                  std::to_string(tgt),
              tp);
        return;
      }
      rd_write(tgt, bufname, stage, issuer, snap, site, tp);
      ctas[static_cast<size_t>(tgt)].smem[bufname]
          [static_cast<size_t>(stage)] = val;
      auto &vec = ctas[static_cast<size_t>(tgt)].barriers[bname];
      if (vec.empty()) {
        fault(SimFaultInfo::Kind::UninitializedBarrier,
              "remote arrive on uninitialized barrier '" + bname + "'", tp);
        return;
      }
      apply_arrive(tgt, bname, bidx, &vec[static_cast<size_t>(bidx)], 1, snap, tp);
      emit(nullptr, "remote_deliver",
           {{"buffer", bufname}, {"stage", stage}, {"cta", tgt}});
    });
    return true;
  }

  bool exec_arrive(Task &t, const Instruction &ins) {
    Env &env = t.env;
    std::string bname = ins.args[0].text;
    int n = static_cast<int>(attr_i64(env, ins, "count", 1));
    if (auto *r = ins.attr("rank")) {
      int rank = static_cast<int>(std::llround(scalar(env, (*r)[0])));
      int tgt = cluster_base(t.cta) + rank;
      auto *decl = p.find_barrier(bname);
      int bidx = barrier_idx(env, ins.args[0], decl ? decl->count : 1);
      emit(&t, "arrive",
           {{"barrier", bname}, {"idx", bidx}, {"rank", rank}});
      VC snap = t.vc;
      Task *tp = &t;
      schedule(cfg.remote_arrive_delay, [this, tgt, bname, bidx, n, snap,
                                         tp]() {
        if (!ctas[static_cast<size_t>(tgt)].initialized) {
          fault(SimFaultInfo::Kind::UninitializedBarrier,
                "remote arrive delivery to uninitialized cta " +
                    std::to_string(tgt),
                tp);
          return;
        }
        auto &vec = ctas[static_cast<size_t>(tgt)].barriers[bname];
        apply_arrive(tgt, bname, bidx, &vec[static_cast<size_t>(bidx)], n, snap, tp);
      });
      return true;
    }
    BarrierInst *b = barrier_of(t.cta, env, ins.args[0]);
    if (!b) return true;
    int bidx = barrier_idx(env, ins.args[0], p.find_barrier(bname)->count);
    emit(&t, "arrive", {{"barrier", bname}, {"idx", bidx}});
    apply_arrive(t.cta, bname, bidx, b, n, t.vc, &t);
    return true;
  }

  bool exec_wait(Task &t, const Instruction &ins) {
    Env &env = t.env;
    BarrierInst *b = barrier_of(t.cta, env, ins.args[0]);
    if (!b) return true;
    int parity =
        static_cast<int>(attr_i64(env, ins, "phase", 0)) & 1;
    if (!b->mb.initialized) {
      fault(SimFaultInfo::Kind::UninitializedBarrier,
            "wait on uninitialized barrier '" + ins.args[0].text + "'", &t);
      return true;
    }
    if (!b->mb.try_wait(parity)) {
      t.block = {};
      t.block.kind = Block::Kind::Barrier;
      t.block.name = ins.args[0].text;
      t.block.idx = barrier_idx(env, ins.args[0],
                                p.find_barrier(ins.args[0].text)->count);
      t.block.parity = parity;
      return false;
    }
    vc_join(t.vc, b->release_vc);  // acquire
    emit(&t, "wait",
         {{"barrier", ins.args[0].text},
          {"idx", barrier_idx(env, ins.args[0],
                              p.find_barrier(ins.args[0].text)->count)},
          {"phase", parity}});
    return true;
  }

  bool exec_cluster_barrier(Task &t, const Instruction &ins) {
    int cl = t.cta / cluster_sz;
    auto &cb = cluster_bars[{cl, ins.id}];
    if (cb.vc.empty()) cb.vc.assign(tasks.size(), 0);
    if (!t.contributed_cluster_bar) {
      t.contributed_cluster_bar = true;
      cb.arrived++;
      vc_join(cb.vc, t.vc);
      emit(&t, "cluster_barrier", {{"arrived", cb.arrived}});
    }
    if (cb.arrived < cluster_sz) {
      t.block = {};
      t.block.kind = Block::Kind::ClusterBar;
      t.block.cb_instr = ins.id;
      return false;
    }
    vc_join(t.vc, cb.vc);
    t.contributed_cluster_bar = false;
    return true;
  }

  bool exec_clc_producer(Task &t, const Instruction &ins) {
    Env &env = t.env;
    CtxVal cv = std::get<CtxVal>(eval(env, ins.args[0]));
    ClcCtx &ctx = ctas[static_cast<size_t>(t.cta)].clc
                      [static_cast<size_t>(cv.idx)];
    long round = t.prod_round[cv.idx];
    int stage = static_cast<int>(round % ctx.stages);
    int parity = static_cast<int>((round / ctx.stages) % 2);
    BarrierInst &empty = ctx.empty[static_cast<size_t>(stage)];
    if (!empty.mb.try_wait(parity)) {
      t.block = {};
      t.block.kind = Block::Kind::ClcEmpty;
      t.block.ctx = cv.idx;
      t.block.stage = stage;
      t.block.parity = parity;
      return false;
    }
    vc_join(t.vc, empty.release_vc);  // acquire the recycled slot

    BarrierInst &full = ctx.full[static_cast<size_t>(stage)];
    full.mb.expect(16);
    vc_join(full.release_vc, t.vc);
    full.mb.arrive(1);  // cannot flip: 16 tx bytes outstanding

    // The queue is popped at request time: -1 exactly when exhausted.
    std::int64_t id = next_tile < p.total_tiles() ? next_tile++ : -1;
    emit(&t, "clc_request", {{"stage", stage}});

    int cta = t.cta;
    int ctxi = cv.idx;
    Task *tp = &t;
    schedule(cfg.clc_latency, [this, cta, ctxi, stage, id, tp]() {
      ClcCtx &c = ctas[static_cast<size_t>(cta)].clc[static_cast<size_t>(ctxi)];
      c.slots[static_cast<size_t>(stage)] = {
          static_cast<std::int32_t>(id), 0, 0, 0};
      BarrierInst &f = c.full[static_cast<size_t>(stage)];
      bool flipped = false;
      f.mb.complete_tx(16, &flipped);
      res.clc_dispatch[cta].push_back(id);
      emit(tp, "clc_response", {{"tile_id", id}, {"stage", stage}});
    });
    t.prod_round[cv.idx]++;
    return true;
  }

  bool exec_clc_consumer(Task &t, const Instruction &ins) {
    Env &env = t.env;
    CtxVal cv = std::get<CtxVal>(eval(env, ins.args[0]));
    ClcCtx &ctx = ctas[static_cast<size_t>(t.cta)].clc
                      [static_cast<size_t>(cv.idx)];
    long round = t.cons_round[cv.idx];
    int stage = static_cast<int>(round % ctx.stages);
    int parity = static_cast<int>((round / ctx.stages) % 2);
    BarrierInst &full = ctx.full[static_cast<size_t>(stage)];
    if (!full.mb.try_wait(parity)) {
      t.block = {};
      t.block.kind = Block::Kind::ClcFull;
      t.block.ctx = cv.idx;
      t.block.stage = stage;
      t.block.parity = parity;
      return false;
    }
    vc_join(t.vc, full.release_vc);  // acquire

    std::int64_t id = ctx.slots[static_cast<size_t>(stage)][0];
    env[ins.result] = static_cast<double>(id);
    emit(&t, "clc_consume", {{"tile_id", id}, {"stage", stage}});

    BarrierInst &empty = ctx.empty[static_cast<size_t>(stage)];
    vc_join(empty.release_vc, t.vc);
    empty.mb.arrive(1);
    t.cons_round[cv.idx]++;
    return true;
  }

  bool exec_collective(Task &t, const Instruction &ins) {
    Env &env = t.env;
    int rank = t.cta % cluster_sz;
    std::vector<int> ranks;
    for (auto &o : *ins.attr("group"))
      ranks.push_back(static_cast<int>(o.imm));
    std::sort(ranks.begin(), ranks.end());
    if (std::find(ranks.begin(), ranks.end(), rank) == ranks.end()) {
      fault(SimFaultInfo::Kind::Runtime,
            "collective_dot issued by rank outside its group", &t);
      return true;
    }
    std::string key = std::to_string(t.cta / cluster_sz) + "|";
    for (int r : ranks) key += std::to_string(r) + ",";

    if (t.micro == 0) {
      CollGroup &g = coll[key];
      g.ranks = ranks;
      long slot_idx = g.issue_count[rank]++;
      CollSlot &slot = g.slots[slot_idx];
      Frag f;
      f.a = as_tile(eval(env, ins.args[0]));
      f.b = as_tile(eval(env, ins.args[1]));
      f.acc = as_tile(eval(env, ins.args[2]));
      f.vc = t.vc;
      slot.frags[rank] = std::move(f);
      emit(&t, "collective_issue", {{"group", key}, {"slot", slot_idx}});
      t.micro = 1;
      t.block = {};
      t.block.kind = Block::Kind::Collective;
      t.block.coll_key = key;
      t.block.coll_slot = slot_idx;

      if (slot.frags.size() == ranks.size() && !slot.fired) {
        // Conformance: all participants must agree on K and N.
        std::int64_t k = -1, n = -1;
        bool ok = true;
        for (auto &kv : slot.frags) {
          const Frag &fr = kv.second;
          if (fr.a.shape.size() != 2 || fr.b.shape.size() != 2 ||
              fr.a.shape[1] != fr.b.shape[0]) {
            ok = false;
            break;
          }
          if (k < 0) {
            k = fr.b.shape[0];
            n = fr.b.shape[1];
          } else if (fr.b.shape[0] != k || fr.b.shape[1] != n) {
            ok = false;
          }
        }
        if (!ok) {
          fault(SimFaultInfo::Kind::CollectiveMismatch,
                "collective_dot fragment shapes do not conform in group " +
                    key,
                &t);
          return true;
        }
        slot.fired = true;
        VC joint(tasks.size(), 0);
        for (auto &kv : slot.frags) vc_join(joint, kv.second.vc);
        std::map<int, Tile> results;
        for (auto &kv : slot.frags) {
          const Frag &fr = kv.second;
          std::int64_t m = fr.a.shape[0], kk = fr.a.shape[1],
                       nn = fr.b.shape[1];
          Tile out({m, nn});
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < nn; ++j) {
              float s = fr.acc.data[static_cast<size_t>(i * nn + j)];
              for (std::int64_t x = 0; x < kk; ++x)
                s += fr.a.data[static_cast<size_t>(i * kk + x)] *
                     fr.b.data[static_cast<size_t>(x * nn + j)];
              out.data[static_cast<size_t>(i * nn + j)] = s;
            }
          results[kv.first] = std::move(out);
        }
        Task *tp = &t;
        schedule(cfg.mma_latency, [this, key, slot_idx, joint, results, tp]() {
          CollSlot &s = coll[key].slots[slot_idx];
          s.delivered = true;
          s.results = results;
          s.joint = joint;
          emit(tp, "collective_fire", {{"group", key}, {"slot", slot_idx}});
        });
      }
      return false;
    }

    // Resumed after delivery.
    CollSlot &slot = coll[key].slots[t.block.coll_slot];
    env[ins.result] = slot.results[rank];
    vc_join(t.vc, slot.joint);
    t.micro = 0;
    return true;
  }

  // --- scheduling -------------------------------------------------------------

  bool is_unblocked(const Task &t) {
    switch (t.block.kind) {
      case Block::Kind::None:
        return true;
      case Block::Kind::Prologue:
        return tasks[static_cast<size_t>(t.cta * tasks_per_cta)].status ==
               Task::Status::Done;
      case Block::Kind::Barrier: {
        auto it = ctas[static_cast<size_t>(t.cta)].barriers.find(t.block.name);
        if (it == ctas[static_cast<size_t>(t.cta)].barriers.end()) return true;
        return it->second[static_cast<size_t>(t.block.idx)].mb.try_wait(
            t.block.parity);
      }
      case Block::Kind::ClcEmpty: {
        ClcCtx &c = ctas[static_cast<size_t>(t.cta)].clc
                        [static_cast<size_t>(t.block.ctx)];
        return c.empty[static_cast<size_t>(t.block.stage)].mb.try_wait(
            t.block.parity);
      }
      case Block::Kind::ClcFull: {
        ClcCtx &c = ctas[static_cast<size_t>(t.cta)].clc
                        [static_cast<size_t>(t.block.ctx)];
        return c.full[static_cast<size_t>(t.block.stage)].mb.try_wait(
            t.block.parity);
      }
      case Block::Kind::DotWait:
        return t.dots_outstanding <= t.block.count;
      case Block::Kind::Collective: {
        auto git = coll.find(t.block.coll_key);
        if (git == coll.end()) return false;
        auto sit = git->second.slots.find(t.block.coll_slot);
        return sit != git->second.slots.end() && sit->second.delivered;
      }
      case Block::Kind::ClusterBar: {
        auto it = cluster_bars.find({t.cta / cluster_sz, t.block.cb_instr});
        return it != cluster_bars.end() && it->second.arrived >= cluster_sz;
      }
    }
    return true;
  }

  // Pops loop/if frames whose bodies are exhausted, advancing loop state.
  void advance_frames(Task &t) {
    while (!t.frames.empty()) {
      Frame &f = t.frames.back();
      if (f.ip < f.body->size()) return;
      if (f.owner && f.owner->op == Opcode::For) {
        f.var += f.stp;
        if (f.var < f.hi) {
          f.ip = 0;
          t.env[f.owner->result] = f.var;
          return;
        }
      } else if (f.owner && f.owner->op == Opcode::While) {
        if (scalar(t.env, f.owner->args[0]) != 0) {
          f.ip = 0;
          return;
        }
      }
      t.frames.pop_back();
    }
  }

  void finish_task(Task &t) {
    t.status = Task::Status::Done;
    if (t.region < 0) {
      CtaState &c = ctas[static_cast<size_t>(t.cta)];
      c.prologue_env = t.env;
      c.prologue_vc = t.vc;
    }
    emit(&t, "task_done", {{"steps", t.steps}});
  }

  void visit(Task &t) {
    cur = &t;
    if (!t.started) {
      t.started = true;
      if (t.region < 0) {
        init_cta_barriers(t.cta);
        for (auto &sp : scalar_params) t.env[sp.first] = sp.second;
      } else {
        CtaState &c = ctas[static_cast<size_t>(t.cta)];
        t.env = c.prologue_env;
        vc_join(t.vc, c.prologue_vc);
        const TaskRegion &r = p.tasks[static_cast<size_t>(t.region)];
        t.env["replica_id"] =
            static_cast<double>(r.replica_id ? *r.replica_id : 0);
      }
      emit(&t, "task_start", {});
    }
    advance_frames(t);
    if (t.frames.empty()) {
      finish_task(t);
      cur = nullptr;
      return;
    }
    // Index, not reference: exec_instr may push a frame and reallocate.
    size_t fi = t.frames.size() - 1;
    const Instruction &ins = (*t.frames[fi].body)[t.frames[fi].ip];
    t.steps++;
    bool completed = exec_instr(t, ins);
    t.vc[static_cast<size_t>(t.global_idx)]++;
    if (completed) {
      t.block = {};
      t.frames[fi].ip++;
      advance_frames(t);
      if (t.frames.empty()) finish_task(t);
    } else {
      t.status = Task::Status::Blocked;
    }
    cur = nullptr;
  }

  void report_quiescence() {
    // Collective waiters take precedence: a missing participant is a
    // protocol error, not a generic deadlock.
    std::string coll_msg;
    for (auto &t : tasks) {
      if (t.status != Task::Status::Blocked ||
          t.block.kind != Block::Kind::Collective)
        continue;
      CollGroup &g = coll[t.block.coll_key];
      CollSlot &slot = g.slots[t.block.coll_slot];
      if (slot.fired) continue;
      std::string missing;
      for (int r : g.ranks)
        if (!slot.frags.count(r))
          missing += (missing.empty() ? "" : ", ") + std::to_string(r);
      coll_msg = "collective_dot in group " + t.block.coll_key +
                 " never completed; missing rank(s): " +
                 (missing.empty() ? "none (undelivered)" : missing);
      break;
    }
    if (!coll_msg.empty()) {
      fault(SimFaultInfo::Kind::CollectiveMismatch, coll_msg, nullptr);
      return;
    }
    std::string who;
    for (auto &t : tasks) {
      if (t.status != Task::Status::Blocked) continue;
      who += (who.empty() ? "" : "; ") + ("cta" + std::to_string(t.cta) + "." +
                                          t.label);
      switch (t.block.kind) {
        case Block::Kind::Barrier:
          who += " waiting on " + t.block.name + "[" +
                 std::to_string(t.block.idx) + "] phase " +
                 std::to_string(t.block.parity);
          break;
        case Block::Kind::ClcEmpty:
          who += " waiting on clc empty slot " + std::to_string(t.block.stage);
          break;
        case Block::Kind::ClcFull:
          who += " waiting on clc full slot " + std::to_string(t.block.stage);
          break;
        case Block::Kind::Prologue:
          who += " waiting on prologue";
          break;
        case Block::Kind::DotWait:
          who += " waiting on async dots";
          break;
        case Block::Kind::ClusterBar:
          who += " waiting on cluster_barrier";
          break;
        default:
          break;
      }
    }
    fault(SimFaultInfo::Kind::Deadlock, "deadlock: " + who, nullptr);
  }

  void run() {
    while (!halted) {
      // Retire async work due at or before the current step.
      while (!heap.empty() && heap.top().when <= step && !halted) {
        auto ev = heap.top();
        heap.pop();
        ev.apply();
      }
      if (halted) break;

      // Wake blocked tasks whose condition now holds.
      for (auto &t : tasks)
        if (t.status == Task::Status::Blocked && is_unblocked(t))
          t.status = Task::Status::Runnable;

      std::vector<size_t> runnable;
      for (size_t i = 0; i < tasks.size(); ++i)
        if (tasks[i].status == Task::Status::Runnable) runnable.push_back(i);

      if (runnable.empty()) {
        bool all_done = true;
        for (auto &t : tasks)
          if (t.status != Task::Status::Done) all_done = false;
        if (all_done) break;
        if (!heap.empty()) {
          step = std::max(step + 1, heap.top().when);
          continue;
        }
        report_quiescence();
        break;
      }

      size_t pick;
      if (cfg.scheduler == SimConfig::Scheduler::SeededRandom) {
        pick = runnable[static_cast<size_t>(rng() % runnable.size())];
      } else {
        pick = runnable[0];
        for (size_t k = 0; k < runnable.size(); ++k)
          if (runnable[k] >= rr_cursor) {
            pick = runnable[k];
            break;
          }
        rr_cursor = pick + 1;
        if (rr_cursor >= tasks.size()) rr_cursor = 0;
      }
      visit(tasks[pick]);
      step++;
    }
  }

  void finish() {
    for (auto &kv : globals)
      if (kv.second.is_output) res.outputs[kv.first] = kv.second.data;
    for (auto &kv : globals)
      if (!kv.second.is_output)
        res.global_load_counts[kv.first] = kv.second.loads;
    for (auto &t : tasks)
      res.task_steps["cta" + std::to_string(t.cta) + "." + t.label] = t.steps;

    json summary;
    summary["step"] = step;
    summary["event"] = "summary";
    summary["task_steps"] = json::object();
    for (auto &kv : res.task_steps) summary["task_steps"][kv.first] = kv.second;
    summary["barrier_flips"] = json::object();
    for (auto &kv : res.barrier_flips)
      summary["barrier_flips"][kv.first] = kv.second;
    summary["clc_dispatch"] = json::object();
    for (auto &kv : res.clc_dispatch)
      summary["clc_dispatch"][std::to_string(kv.first)] = kv.second;
    summary["bank_conflicts"] = res.bank_conflicts;
    json gl = json::object();
    for (auto &kv : res.global_load_counts) {
      std::int64_t total = 0;
      for (auto c : kv.second) total += c;
      gl[kv.first] = total;
    }
    summary["global_loads"] = gl;
    json races = json::array();
    for (auto &r : res.races) races.push_back(r.message);
    summary["races"] = races;
    json faults = json::array();
    for (auto &f : res.faults) faults.push_back(f.message);
    summary["faults"] = faults;

    res.summary = summary.dump();
    if (cfg.trace_enabled) {
      trace += res.summary;
      trace += '\n';
    }
    res.trace = std::move(trace);
  }
};

}  // namespace

SimResult simulate(const KernelProgram &p,
                   const std::map<std::string, Tile> &inputs,
                   const std::map<std::string, double> &scalars,
                   const SimConfig &cfg) {
  Sim sim(p, cfg);
  if (sim.setup(inputs, scalars)) sim.run();
  sim.finish();
  return std::move(sim.res);
}

}  // namespace mimw
