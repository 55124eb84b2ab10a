#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "mimw/sync.hpp"
#include "mimw/tensor_io.hpp"

using namespace mimw;
using namespace mimw::test;

namespace {

SimResult run_source(const std::string &src,
                     const std::map<std::string, Tile> &inputs,
                     SimConfig cfg = {}) {
  KernelProgram p = compile(src);
  return simulate(p, inputs, {}, cfg);
}

}  // namespace

TEST_CASE("multicast: per-element load count 1, all buffers equal source") {
  for (int k : {1, 2, 4}) {
    CAPTURE(k);
    Tile x = random_tile({64}, 99);
    auto res = run_source(multicast_source(k), {{"x", x}});
    REQUIRE(res.ok);
    CHECK(res.races.empty());
    REQUIRE(res.global_load_counts.count("x"));
    for (auto c : res.global_load_counts.at("x")) CHECK(c == 1);
    const Tile &y = res.outputs.at("y");
    for (int r = 0; r < k; ++r)
      for (int i = 0; i < 64; ++i)
        CHECK(y.data[static_cast<size_t>(r * 64 + i)] ==
              x.data[static_cast<size_t>(i)]);
  }
}

TEST_CASE("dsm: remote store + local wait publishes the data") {
  const char *src = R"(kernel dsm grid(2 1 1) cluster(2 1 1) warps(4)
param in x shape(8)
param out y shape(8)
buffer sb shape(8) f32 stages(1) storage(smem_cluster)
barrier got count(1) arrive(1)
prologue {
  %rank = cta_rank
}
task default {
  %is0 = eq %rank 0
  if %is0 {
    %t = global_load x shape(8) offset(0)
    %v = view sb stage(0)
    %rv = remote_view %v rank(1)
    async_remote_store %rv %t got[0]
  } else {
    barrier_wait got[0] phase(0)
    %v = view sb stage(0)
    %t = local_load %v
    global_store y %t offset(0)
  }
}
)";
  Tile x = random_tile({8}, 5);
  auto res = run_source(src, {{"x", x}});
  REQUIRE(res.ok);
  CHECK(res.races.empty());
  CHECK(res.outputs.at("y").data == x.data);
}

TEST_CASE("remote_view to own rank behaves as a local view") {
  const char *src = R"(kernel self grid(1 1 1) cluster(1 1 1) warps(4)
param in x shape(8)
param out y shape(8)
buffer sb shape(8) f32 stages(1) storage(smem_cluster)
barrier got count(1) arrive(1)
task default {
  %t = global_load x shape(8) offset(0)
  %v = view sb stage(0)
  %rv = remote_view %v rank(0)
  async_remote_store %rv %t got[0]
  barrier_wait got[0] phase(0)
  %r = local_load %v
  global_store y %r offset(0)
}
)";
  Tile x = random_tile({8}, 6);
  auto res = run_source(src, {{"x", x}});
  REQUIRE(res.ok);
  CHECK(res.outputs.at("y").data == x.data);
}

TEST_CASE("collective_dot: 2-CTA concatenation equals the matmul oracle") {
  Tile a = random_tile({32, 16}, 41);
  Tile b = random_tile({16, 24}, 42);
  auto res = run_source(kCollectiveDot, {{"a", a}, {"b", b}});
  REQUIRE(res.ok);
  CHECK(res.races.empty());
  Tile want = oracle_gemm(a, b);
  CHECK(rel_error(res.outputs.at("c"), want) <= 1e-4);
}

TEST_CASE("collective_dot: single-sided issue names the absent rank") {
  Tile a = random_tile({32, 16}, 43);
  Tile b = random_tile({16, 24}, 44);
  auto res = run_source(kCollectiveDotOneSided, {{"a", a}, {"b", b}});
  REQUIRE(!res.ok);
  bool found = false;
  for (auto &f : res.faults)
    if (f.kind == SimFaultInfo::Kind::CollectiveMismatch &&
        f.message.find("1") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("determinism: same seed gives byte-identical traces") {
  KernelProgram p = compile_file("listing_pipeline.mimw");
  auto inputs = make_inputs(p, 3);
  SimConfig cfg;
  cfg.scheduler = SimConfig::Scheduler::SeededRandom;
  cfg.seed = 17;
  auto r1 = simulate(p, inputs, {}, cfg);
  auto r2 = simulate(p, inputs, {}, cfg);
  REQUIRE(r1.ok);
  CHECK(r1.trace == r2.trace);
  CHECK(r1.summary == r2.summary);
  CHECK(r1.outputs.at("y").data == r2.outputs.at("y").data);
}

TEST_CASE("quiescence: all-blocked tasks produce a deadlock fault") {
  const char *src = R"(kernel dead grid(1 1 1) cluster(1 1 1) warps(4)
barrier never count(1) arrive(1)
task default {
  barrier_wait never[0] phase(0)
}
)";
  auto res = run_source(src, {});
  REQUIRE(!res.ok);
  REQUIRE(!res.faults.empty());
  CHECK(res.faults[0].kind == SimFaultInfo::Kind::Deadlock);
  CHECK(res.faults[0].message.find("never") != std::string::npos);
}

TEST_CASE("zero-latency async copy completes in the same step") {
  KernelProgram p = compile_file("gemm_pipeline.mimw");
  auto inputs = make_inputs(p, 7);
  SimConfig cfg;
  cfg.async_copy_latency = 0;
  auto res = simulate(p, inputs, {}, cfg);
  REQUIRE(res.ok);
  CHECK(rel_error(res.outputs.at("c"),
                  oracle_gemm(inputs.at("a"), inputs.at("b"))) <= 1e-4);
}

TEST_CASE("async_dot_wait with no outstanding dots is vacuous") {
  const char *src = R"(kernel v grid(1 1 1) cluster(1 1 1) warps(4)
param out y shape(4)
task default {
  %t = splat 7 shape(4)
  %r = async_dot_wait %t count(0)
  global_store y %r offset(0)
}
)";
  auto res = run_source(src, {});
  REQUIRE(res.ok);
  for (auto v : res.outputs.at("y").data) CHECK(v == 7.0f);
}

TEST_CASE("mutation: deleting the consumer full-wait is detected") {
  KernelProgram p = compile_file("gemm_pipeline.mimw");
  auto inputs = make_inputs(p, 7);
  Tile want = oracle_gemm(inputs.at("a"), inputs.at("b"));
  int waits = count_barrier_waits(p);
  REQUIRE(waits >= 2);

  for (int n = 0; n < waits; ++n) {
    KernelProgram mut = compile_file("gemm_pipeline.mimw");
    delete_nth_barrier_wait(mut, n);
    bool detected = false;
    for (std::uint64_t seed = 0; seed < 50 && !detected; ++seed) {
      SimConfig cfg;
      cfg.scheduler = SimConfig::Scheduler::SeededRandom;
      cfg.seed = seed;
      cfg.trace_enabled = false;
      auto res = simulate(mut, inputs, {}, cfg);
      if (!res.ok || !res.races.empty() ||
          !res.outputs.count("c") ||
          !(rel_error(res.outputs.at("c"), want) <= 1e-4))
        detected = true;
    }
    CAPTURE(n);
    CHECK(detected);
  }
}

TEST_CASE("cluster legality: removing the inserted barrier is observable") {
  KernelProgram p = compile_file("multi_device_gemm.mimw");
  REQUIRE(!p.prologue.empty());
  REQUIRE(p.prologue[0].op == Opcode::ClusterBarrier);
  auto inputs = make_inputs(p, 23);

  // Legalized program: no uninitialized-barrier fault on any schedule.
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SimConfig cfg;
    cfg.scheduler = SimConfig::Scheduler::SeededRandom;
    cfg.seed = seed;
    cfg.remote_arrive_delay = 0;
    cfg.trace_enabled = false;
    auto res = simulate(p, inputs, {}, cfg);
    for (auto &f : res.faults)
      CHECK(f.kind != SimFaultInfo::Kind::UninitializedBarrier);
  }

  // Hand-edited program without the barrier faults under delay 0.
  KernelProgram bad = p;
  bad.prologue.erase(bad.prologue.begin());
  bool faulted = false;
  for (std::uint64_t seed = 0; seed < 100 && !faulted; ++seed) {
    SimConfig cfg;
    cfg.scheduler = SimConfig::Scheduler::SeededRandom;
    cfg.seed = seed;
    cfg.remote_arrive_delay = 0;
    cfg.trace_enabled = false;
    auto res = simulate(bad, inputs, {}, cfg);
    for (auto &f : res.faults)
      if (f.kind == SimFaultInfo::Kind::UninitializedBarrier) faulted = true;
  }
  CHECK(faulted);
}

TEST_CASE("bank conflict accounting on row_major power-of-32 buffers") {
  const char *src = R"(kernel bank grid(1 1 1) cluster(1 1 1) warps(4)
param out y shape(32)
buffer rb shape(32) f32 stages(1) storage(smem)
task default {
  %t = splat 1 shape(32)
  %v = view rb stage(0)
  local_store %v %t
  %r = local_load %v
  global_store y %r offset(0)
}
)";
  auto res = run_source(src, {});
  REQUIRE(res.ok);
  CHECK(res.bank_conflicts == 2);
}

TEST_CASE("shared-memory capacity is enforced at validation") {
  auto res = run_pipeline(R"(kernel big grid(1 1 1) cluster(1 1 1) warps(4)
buffer huge shape(65536) f32 stages(1) storage(smem)
task default {
  %a = const 1
}
)");
  CHECK(!res.ok);
  CHECK(res.errors.find("capacity") != std::string::npos);
}

TEST_CASE("missing scalar parameter is a runtime fault") {
  KernelProgram p = compile_file("vector_scale.mimw");
  auto inputs = make_inputs(p, 1);
  SimConfig cfg;
  cfg.trace_enabled = false;
  auto res = simulate(p, inputs, {}, cfg);
  REQUIRE(!res.ok);
  CHECK(res.faults[0].message.find("scalar") != std::string::npos);
}
