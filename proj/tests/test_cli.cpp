#include <array>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "doctest.h"
#include "helpers.hpp"

namespace {

struct CliResult {
  int code = -1;
  std::string out;  // stdout + stderr
};

CliResult run_cli(const std::string &args) {
  std::string cmd = "MIMW_COLOR=0 " + std::string(MIMW_CLI_PATH) + " " + args +
                    " 2>&1";
  std::array<char, 4096> buf{};
  CliResult r;
  FILE *pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (size_t n = fread(buf.data(), 1, buf.size(), pipe))
    r.out.append(buf.data(), n);
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string kernel(const std::string &name) {
  return mimw::test::kernels_dir() + "/" + name;
}

}  // namespace

TEST_CASE("cli: check accepts a clean kernel") {
  auto r = run_cli("check " + kernel("gemm_pipeline.mimw"));
  CHECK(r.code == 0);
}

TEST_CASE("cli: check reports diagnostics with exit code 2") {
  std::string path = "cli_bad.mimw";
  {
    std::ofstream out(path);
    out << "kernel k grid(1 1 1) cluster(1 1 1) warps(4)\n"
           "param in a shape(4 4)\n"
           "buffer tb shape(4 4) f32 stages(1) storage(smem)\n"
           "task default {\n"
           "  %at = global_load a shape(4 4) offset(0 0)\n"
           "  %tv = view tb stage(0)\n"
           "  local_store %tv %at\n"
           "  %x = local_load %tv\n"
           "  require_layout %x enc(row_major) prio(user)\n"
           "  require_layout %x enc(col_major) prio(user)\n}\n";
  }
  auto r = run_cli("check " + path);
  CHECK(r.code == 2);
  CHECK(r.out.find("error[L001]") != std::string::npos);
  // MIMW_COLOR=0: no escape sequences anywhere in the output.
  CHECK(r.out.find('\x1b') == std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("cli: unknown flags are errors") {
  auto r = run_cli("check --frobnicate " + kernel("vector_scale.mimw"));
  CHECK(r.code != 0);
}

TEST_CASE("cli: run honors scalar bindings and exit code 0") {
  auto r = run_cli("run " + kernel("vector_scale.mimw") +
                   " --seed 11 --scalar a=3.5");
  CHECK(r.code == 0);
  CHECK(r.out.find("\"event\":\"summary\"") != std::string::npos);
}

TEST_CASE("cli: simulator faults exit with code 3") {
  std::string path = "cli_dead.mimw";
  {
    std::ofstream out(path);
    out << "kernel k grid(1 1 1) cluster(1 1 1) warps(4)\n"
           "barrier never count(1) arrive(1)\n"
           "task default {\n  barrier_wait never[0] phase(0)\n}\n";
  }
  auto r = run_cli("run " + path);
  CHECK(r.code == 3);
  CHECK(r.out.find("deadlock") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("cli: corpus passes over the shipped kernels") {
  auto r = run_cli("corpus --dir " + mimw::test::kernels_dir());
  CHECK(r.code == 0);
}

TEST_CASE("cli: fuzz agrees across schedules") {
  auto r = run_cli("fuzz " + kernel("listing_pipeline.mimw") +
                   " --schedules 20");
  CHECK(r.code == 0);
}

TEST_CASE("cli: trace writes a file and shows the alternation") {
  std::string out_path = "cli_trace.jsonl";
  auto r = run_cli("trace " + kernel("listing_pipeline.mimw") +
                   " --trace-out " + out_path);
  CHECK(r.code == 0);
  auto text = mimw::test::slurp(out_path);
  CHECK(text.find("\"event\":\"wait\"") != std::string::npos);
  CHECK(text.find("\"event\":\"arrive\"") != std::string::npos);
  std::remove(out_path.c_str());
}
