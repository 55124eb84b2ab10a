#include "doctest.h"
#include "helpers.hpp"
#include "mimw/parse.hpp"
#include "mimw/sync.hpp"
#include "mimw/validate.hpp"

using namespace mimw;
using namespace mimw::test;

TEST_CASE("mbarrier: single-arrival phase flip") {
  MbarrierState b;
  b.init(1);
  CHECK(b.phase == 0);
  CHECK(!b.try_wait(0));
  bool flipped = false;
  CHECK(b.arrive(1, &flipped) == MbarrierState::Status::Ok);
  CHECK(flipped);
  CHECK(b.phase != 0);
  CHECK(b.pending == 1);  // reloaded
  CHECK(b.try_wait(0));
}

TEST_CASE("mbarrier: two arrives on an arrive_count=2 barrier flip once") {
  MbarrierState b;
  b.init(2);
  bool f1 = false, f2 = false;
  b.arrive(1, &f1);
  CHECK(!f1);
  b.arrive(1, &f2);
  CHECK(f2);
  CHECK(b.flips == 1);
}

TEST_CASE("mbarrier: expect 16 then completion of 16 flips when pending=0") {
  MbarrierState b;
  b.init(1);
  CHECK(b.expect(16) == MbarrierState::Status::Ok);
  bool flipped = false;
  b.arrive(1, &flipped);
  CHECK(!flipped);  // tx still outstanding
  b.complete_tx(16, &flipped);
  CHECK(flipped);
}

TEST_CASE("mbarrier: expect 2x16, one completion of 16 does not flip") {
  MbarrierState b;
  b.init(1);
  b.expect(16);
  b.expect(16);
  bool flipped = false;
  b.arrive(1, &flipped);
  CHECK(!flipped);
  b.complete_tx(16, &flipped);
  CHECK(!flipped);
  b.complete_tx(16, &flipped);
  CHECK(flipped);
}

TEST_CASE("mbarrier: expect 0 is a no-op on tx accounting") {
  MbarrierState b;
  b.init(1);
  b.expect(0);
  bool flipped = false;
  b.arrive(1, &flipped);
  CHECK(flipped);
}

TEST_CASE("mbarrier: error statuses") {
  MbarrierState uninit;
  CHECK(uninit.arrive() == MbarrierState::Status::NotInitialized);
  CHECK(uninit.expect(4) == MbarrierState::Status::NotInitialized);
  CHECK(!uninit.try_wait(0));

  MbarrierState b;
  b.init(1);
  CHECK(b.arrive(2) == MbarrierState::Status::ArriveOverflow);
  CHECK(b.complete_tx(8) == MbarrierState::Status::TxUnderflow);
}

TEST_CASE("mbarrier: start_phase makes all stages immediately acquirable") {
  MbarrierState b;
  b.init(3, /*start_phase=*/1);
  CHECK(b.try_wait(0));  // "full of emptiness"
  CHECK(!b.try_wait(1));
}

TEST_CASE("legalize: C001 on barrier_wait with a rank attribute") {
  auto p = parse_kernel_or_throw(R"(kernel k grid(2 1 1) cluster(2 1 1) warps(4)
barrier bar count(1) arrive(1)
task default {
  barrier_wait bar[0] phase(0) rank(1)
}
)");
  auto res = legalize_cluster(p);
  REQUIRE(!res.ok);
  REQUIRE(res.diagnostics.size() == 1);
  CHECK(res.diagnostics[0].code == "C001");
  CHECK(res.diagnostics[0].render(false).find("C001") != std::string::npos);
}

TEST_CASE("legalize: inserts cluster_barrier for remote ops, idempotently") {
  const char *src = R"(kernel k grid(2 1 1) cluster(2 1 1) warps(4)
buffer sb shape(8) f32 stages(1) storage(smem_cluster)
barrier bar count(1) arrive(1)
prologue {
  %zero = const 0
}
task default {
  %t = splat 1 shape(8)
  %v = view sb stage(0)
  %rv = remote_view %v rank(1)
  async_remote_store %rv %t bar[0]
  barrier_wait bar[0] phase(0)
}
)";
  auto p = parse_kernel_or_throw(src);
  CHECK(uses_remote_ops(p));
  auto res = legalize_cluster(p);
  REQUIRE(res.ok);
  CHECK(res.inserted_cluster_barrier);
  REQUIRE(!p.prologue.empty());
  CHECK(p.prologue[0].op == Opcode::ClusterBarrier);
  CHECK(print_ir(p).find("cluster_barrier") != std::string::npos);

  // Second run: already present, nothing inserted.
  auto res2 = legalize_cluster(p);
  CHECK(res2.ok);
  CHECK(!res2.inserted_cluster_barrier);
  int n = 0;
  for (auto &ins : p.prologue)
    if (ins.op == Opcode::ClusterBarrier) ++n;
  CHECK(n == 1);
}

TEST_CASE("legalize: identity for single-CTA clusters") {
  auto p = parse_kernel_or_throw(R"(kernel k grid(2 1 1) cluster(1 1 1) warps(4)
task default {
  %a = const 1
}
)");
  auto before = print_ir(p);
  auto res = legalize_cluster(p);
  CHECK(res.ok);
  CHECK(!res.inserted_cluster_barrier);
  CHECK(print_ir(p) == before);
}

TEST_CASE("legalize: no insertion when no remote ops are used") {
  auto p = parse_kernel_or_throw(R"(kernel k grid(2 1 1) cluster(2 1 1) warps(4)
buffer sb shape(8) f32 stages(1) storage(smem)
task default {
  %t = splat 1 shape(8)
  %v = view sb stage(0)
  local_store %v %t
}
)");
  CHECK(!uses_remote_ops(p));
  auto res = legalize_cluster(p);
  CHECK(res.ok);
  CHECK(!res.inserted_cluster_barrier);
}
