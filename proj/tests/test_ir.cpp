#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mimw/parse.hpp"
#include "mimw/validate.hpp"

using namespace mimw;
using namespace mimw::test;

namespace {

// Small generator of structurally valid programs for the round-trip
// property. Covers every declaration kind, operand kind, attribute and
// control-flow construct the printer can emit.
KernelProgram random_program(std::mt19937_64 &rng) {
  auto pick = [&](int n) { return static_cast<int>(rng() % n); };
  KernelProgram p;
  p.name = "gen" + std::to_string(pick(1000));
  p.grid = {1 + pick(4), 1, 1};
  p.cluster = {1, 1, 1};
  p.num_warps = 4 + pick(8);
  if (pick(2)) p.tiles = 1 + pick(16);

  p.tensor_params.push_back({"x", {std::int64_t(8 << pick(3))}, false});
  if (pick(2)) p.tensor_params.push_back({"y", {16, 16}, true});
  if (pick(2)) p.scalar_params.push_back({"alpha"});

  int nbuf = 1 + pick(2);
  for (int i = 0; i < nbuf; ++i) {
    BufferDecl b;
    b.name = "buf" + std::to_string(i);
    b.shape = {std::int64_t(4 << pick(3))};
    b.stages = 1 + pick(3);
    b.storage = pick(2) ? BufferDecl::Storage::SmemCluster
                        : BufferDecl::Storage::Smem;
    if (pick(2))
      b.layout = pick(2) ? LayoutEncoding::col_major()
                         : LayoutEncoding::swizzled(64);
    p.buffers.push_back(b);
  }
  p.barriers.push_back({"bar", 1 + pick(3), 1 + pick(2)});

  auto mk = [&](Opcode op, std::string res,
                std::vector<Operand> args) {
    Instruction ins;
    ins.id = p.fresh_id();
    ins.op = op;
    ins.result = std::move(res);
    ins.args = std::move(args);
    return ins;
  };

  p.prologue.push_back(mk(Opcode::Const, "zero", {Operand::immediate(0)}));
  p.prologue.push_back(
      mk(Opcode::Const, "c", {Operand::immediate(pick(2) ? 2.5 : -3)}));
  p.prologue.push_back(mk(Opcode::CtaRank, "rank", {}));

  TaskRegion t;
  t.kind = TaskRegion::Kind::Explicit;
  t.num_warps = 1 + pick(2);
  if (pick(2)) t.replicate = 2;
  if (pick(2)) t.registers = 128;

  t.body.push_back(
      mk(Opcode::Add, "s", {Operand::reg("c"), Operand::immediate(pick(9))}));
  {
    Instruction sp = mk(Opcode::Splat, "tile", {Operand::reg("zero")});
    sp.attrs["shape"] = {Operand::immediate(4), Operand::immediate(4)};
    t.body.push_back(sp);
  }
  {
    Instruction v = mk(Opcode::View, "v", {Operand::ident("buf0")});
    v.attrs["stage"] = {Operand::immediate(0)};
    t.body.push_back(v);
  }
  {
    Instruction w =
        mk(Opcode::BarrierWait, "", {Operand::barrier("bar", pick(2))});
    w.attrs["phase"] = {Operand::immediate(0)};
    t.body.push_back(w);
  }
  t.body.push_back(
      mk(Opcode::BarrierArrive, "", {Operand::barrier_reg("bar", "zero")}));
  {
    Instruction f = mk(Opcode::For, "i",
                       {Operand::immediate(0), Operand::immediate(2 + pick(3))});
    if (pick(2)) f.attrs["step"] = {Operand::immediate(2)};
    f.body.push_back(
        mk(Opcode::Mul, "m", {Operand::reg("s"), Operand::reg("i")}));
    if (pick(2)) {
      Instruction br = mk(Opcode::If, "", {Operand::reg("m")});
      br.body.push_back(mk(Opcode::Copy, "q", {Operand::reg("m")}));
      if (pick(2))
        br.else_body.push_back(
            mk(Opcode::Copy, "q", {Operand::reg("s")}));
      f.body.push_back(br);
    }
    t.body.push_back(f);
  }
  {
    Instruction wl = mk(Opcode::While, "", {Operand::reg("s")});
    wl.body.push_back(
        mk(Opcode::Sub, "s", {Operand::reg("s"), Operand::immediate(1)}));
    t.body.push_back(wl);
  }
  p.tasks.push_back(std::move(t));

  TaskRegion d;
  d.kind = TaskRegion::Kind::Default;
  d.body.push_back(mk(Opcode::Copy, "r2", {Operand::reg("rank")}));
  p.tasks.push_back(std::move(d));
  return p;
}

}  // namespace

TEST_CASE("round trip: parse(print_ir(p)) structurally equals p") {
  std::mt19937_64 rng(12345);
  for (int i = 0; i < 200; ++i) {
    KernelProgram p = random_program(rng);
    std::string text = print_ir(p);
    KernelProgram q = parse_kernel_or_throw(text);
    CAPTURE(text);
    CHECK(q.equals(p));
    CHECK(print_ir(q) == text);
  }
}

TEST_CASE("print_ir is deterministic and stage tag only affects the header") {
  KernelProgram p = compile_file("gemm_pipeline.mimw");
  CHECK(print_ir(p) == print_ir(p));
  std::string a = print_ir(p, "parsed");
  std::string b = print_ir(p, "layout-resolved");
  CHECK(a.substr(a.find('\n') + 1) == b.substr(b.find('\n') + 1));
  CHECK(a.substr(0, a.find('\n')) == "# stage: parsed");
}

TEST_CASE("validator rejects warp over-subscription") {
  auto p = parse_kernel_or_throw(R"(kernel k grid(1 1 1) cluster(1 1 1) warps(4)
task warps(4) {
  %a = const 1
}
task default {
  %b = const 2
}
)");
  auto rep = validate(p);
  CHECK(!rep.ok());
}

TEST_CASE("validator rejects non-conforming dot shapes") {
  auto p = parse_kernel_or_throw(R"(kernel k grid(1 1 1) cluster(1 1 1) warps(4)
task default {
  %zero = const 0
  %a = splat 1 shape(64 32)
  %b = splat 1 shape(16 64)
  %d = dot %a %b %zero
}
)");
  auto rep = validate(p);
  REQUIRE(!rep.ok());
  bool found = false;
  for (auto &e : rep.errors)
    if (e.message.find("inner dimensions differ") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("listing pipeline kernel validates cleanly") {
  auto p = parse_kernel_or_throw(slurp(kernels_dir() + "/listing_pipeline.mimw"));
  auto rep = validate(p);
  CHECK(rep.ok());
  CHECK(rep.errors.empty());
}

TEST_CASE("expand_replicas splits replicated regions with replica ids") {
  auto p = parse_kernel_or_throw(R"(kernel k grid(1 1 1) cluster(1 1 1) warps(8)
task warps(2) replicate(3) {
  %r = replica_id
}
task default {
  %a = const 1
}
)");
  REQUIRE(validate(p).ok());
  KernelProgram q = expand_replicas(p);
  REQUIRE(q.tasks.size() == 4);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(q.tasks[static_cast<size_t>(i)].replica_id.has_value());
    CHECK(*q.tasks[static_cast<size_t>(i)].replica_id == i);
    CHECK(q.tasks[static_cast<size_t>(i)].replicate == 1);
  }
}

TEST_CASE("unknown opcode is a parse error") {
  auto r = parse_kernel(R"(kernel k grid(1 1 1) cluster(1 1 1) warps(4)
task default {
  %a = frobnicate 1
}
)");
  REQUIRE(std::holds_alternative<ParseError>(r));
  CHECK(std::get<ParseError>(r).message.find("frobnicate") !=
        std::string::npos);
}
