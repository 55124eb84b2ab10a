#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"

using namespace mimw;
using namespace mimw::test;

namespace {

SimResult run_clc(int tiles, int ctas, int stages, int latency,
                  std::uint64_t seed = 0,
                  SimConfig::Scheduler sched = SimConfig::Scheduler::RoundRobin) {
  KernelProgram p = compile(clc_sweep_source(tiles, ctas, stages));
  SimConfig cfg;
  cfg.seed = seed;
  cfg.scheduler = sched;
  cfg.clc_latency = latency;
  cfg.trace_enabled = false;
  return simulate(p, {}, {}, cfg);
}

}  // namespace

TEST_CASE("clc: one tile then the -1 sentinel") {
  auto res = run_clc(1, 1, 1, 3);
  REQUIRE(res.ok);
  REQUIRE(res.clc_dispatch.count(0));
  CHECK(res.clc_dispatch.at(0) == std::vector<std::int64_t>{0, -1});
}

TEST_CASE("clc: five tiles, one CTA, one stage -> six responses") {
  auto res = run_clc(5, 1, 1, 2);
  REQUIRE(res.ok);
  CHECK(res.clc_dispatch.at(0) ==
        std::vector<std::int64_t>{0, 1, 2, 3, 4, -1});
}

TEST_CASE("clc: two CTAs partition the tile ids exactly once") {
  auto res = run_clc(7, 2, 2, 1);
  REQUIRE(res.ok);
  std::vector<std::int64_t> ids;
  for (auto &kv : res.clc_dispatch) {
    REQUIRE(!kv.second.empty());
    CHECK(kv.second.back() == -1);
    for (auto id : kv.second)
      if (id >= 0) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  CHECK(ids == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5, 6});
}

TEST_CASE("clc: producer without a consumer deadlocks on the empty ring") {
  // One stage, two producer rounds, nobody ever recycles the slot.
  auto p = compile(R"(kernel k grid(1 1 1) cluster(1 1 1) warps(4) tiles(4)
prologue {
  %ctx = clc_context stages(1) consumers(1)
}
task default {
  clc_producer %ctx
  clc_producer %ctx
}
)");
  SimConfig cfg;
  cfg.trace_enabled = false;
  auto res = simulate(p, {}, {}, cfg);
  REQUIRE(!res.ok);
  REQUIRE(!res.faults.empty());
  CHECK(res.faults[0].kind == SimFaultInfo::Kind::Deadlock);
}

TEST_CASE("clc: dispatch exactly-once over scheduler and latency sweep") {
  for (int latency : {0, 4, 8})
    for (std::uint64_t seed : {7ull, 8ull}) {
      auto res = run_clc(16, 2, 3, latency, seed,
                         SimConfig::Scheduler::SeededRandom);
      CAPTURE(latency);
      CAPTURE(seed);
      REQUIRE(res.ok);
      std::vector<std::int64_t> ids;
      for (auto &kv : res.clc_dispatch) {
        CHECK(std::count(kv.second.begin(), kv.second.end(), -1) == 1);
        CHECK(kv.second.back() == -1);
        for (auto id : kv.second)
          if (id >= 0) ids.push_back(id);
      }
      std::sort(ids.begin(), ids.end());
      std::vector<std::int64_t> want(16);
      for (int i = 0; i < 16; ++i) want[static_cast<size_t>(i)] = i;
      CHECK(ids == want);
    }
}
