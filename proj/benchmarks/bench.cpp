#include <benchmark/benchmark.h>

#include <fstream>
#include <sstream>
#include <string>

#include "mimw/case.hpp"
#include "mimw/parse.hpp"
#include "mimw/pipeline.hpp"
#include "mimw/print.hpp"
#include "mimw/sim.hpp"

namespace {

std::string slurp(const std::string &name) {
  std::ifstream in(std::string(MIMW_KERNELS_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void BM_Parse(benchmark::State &state) {
  std::string src = slurp("gemm_pipeline.mimw");
  for (auto _ : state) {
    auto p = mimw::parse_kernel_or_throw(src);
    benchmark::DoNotOptimize(p);
  }
}
BENCHMARK(BM_Parse);

void BM_PrintRoundTrip(benchmark::State &state) {
  auto p = mimw::parse_kernel_or_throw(slurp("gemm_pipeline.mimw"));
  for (auto _ : state) {
    auto text = mimw::print_ir(p);
    benchmark::DoNotOptimize(text);
  }
}
BENCHMARK(BM_PrintRoundTrip);

void BM_Pipeline(benchmark::State &state) {
  std::string src = slurp("gemm_pipeline.mimw");
  for (auto _ : state) {
    auto res = mimw::run_pipeline(src, {});
    benchmark::DoNotOptimize(res);
  }
}
BENCHMARK(BM_Pipeline);

void BM_SimulateGemm(benchmark::State &state) {
  auto res = mimw::run_pipeline(slurp("gemm_pipeline.mimw"), {});
  auto inputs = mimw::make_inputs(*res.program, 7);
  mimw::SimConfig cfg;
  cfg.trace_enabled = false;
  for (auto _ : state) {
    auto r = mimw::simulate(*res.program, inputs, {}, cfg);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_SimulateGemm);

void BM_SimulateListingTrace(benchmark::State &state) {
  auto res = mimw::run_pipeline(slurp("listing_pipeline.mimw"), {});
  auto inputs = mimw::make_inputs(*res.program, 1);
  mimw::SimConfig cfg;  // trace enabled: measures the event emitter too
  for (auto _ : state) {
    auto r = mimw::simulate(*res.program, inputs, {}, cfg);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_SimulateListingTrace);

}  // namespace

BENCHMARK_MAIN();
