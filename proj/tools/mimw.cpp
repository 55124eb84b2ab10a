#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mimw/case.hpp"
#include "mimw/oracles.hpp"
#include "mimw/pipeline.hpp"
#include "mimw/print.hpp"
#include "mimw/sim.hpp"
#include "mimw/tensor_io.hpp"

using namespace mimw;

namespace {

// Exit codes: 0 success, 2 diagnostics, 3 simulation fault, 4 oracle
// mismatch or schedule divergence.
constexpr int kOk = 0;
constexpr int kDiagnostics = 2;
constexpr int kSimFault = 3;
constexpr int kMismatch = 4;

bool color_enabled() {
  const char *c = std::getenv("MIMW_COLOR");
  return !(c && std::string(c) == "0");
}

std::optional<std::string> slurp(const std::string &path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommonOpts {
  std::uint64_t seed = 0;
  std::string sched = "round_robin";
  int copy_latency = 2;
  int clc_latency = 3;
  int remote_delay = 1;
  int mma_latency = 2;
  std::int64_t capacity = 232 * 1024;
  bool no_races = false;
  bool strict = false;
  std::vector<std::string> scalar_args;
  std::vector<std::string> input_args;
  std::string out_dir;
};

void add_common(CLI::App *cmd, CommonOpts &o) {
  cmd->add_option("--seed", o.seed, "scheduler seed");
  cmd->add_option("--sched", o.sched, "round_robin | random")
      ->check(CLI::IsMember({"round_robin", "random"}));
  cmd->add_option("--copy-latency", o.copy_latency, "async copy latency");
  cmd->add_option("--clc-latency", o.clc_latency, "CLC response latency");
  cmd->add_option("--remote-delay", o.remote_delay, "remote arrive delay");
  cmd->add_option("--mma-latency", o.mma_latency, "async dot latency");
  cmd->add_option("--capacity", o.capacity, "shared memory bytes per CTA");
  cmd->add_flag("--no-race-detector", o.no_races, "disable race detection");
  cmd->add_flag("--strict", o.strict, "treat races as failures");
  cmd->add_option("--scalar", o.scalar_args,
                  "scalar parameter binding name=value");
  cmd->add_option("--input", o.input_args, "input tensor file name=path");
  cmd->add_option("--out", o.out_dir, "directory for output tensor files");
}

SimConfig make_cfg(const CommonOpts &o) {
  SimConfig cfg;
  cfg.seed = o.seed;
  cfg.scheduler = o.sched == "random" ? SimConfig::Scheduler::SeededRandom
                                      : SimConfig::Scheduler::RoundRobin;
  cfg.async_copy_latency = o.copy_latency;
  cfg.clc_latency = o.clc_latency;
  cfg.remote_arrive_delay = o.remote_delay;
  cfg.mma_latency = o.mma_latency;
  cfg.shared_capacity_bytes = o.capacity;
  cfg.race_detector = !o.no_races;
  return cfg;
}

int compile(const std::string &path, const std::string &dump_after,
            KernelProgram *out) {
  auto src = slurp(path);
  if (!src) {
    std::cerr << "error: cannot read " << path << "\n";
    return kDiagnostics;
  }
  PipelineOptions opts;
  opts.dump_after = dump_after;
  opts.color = color_enabled();
  auto res = run_pipeline(*src, opts);
  if (!res.dump.empty()) std::cout << res.dump;
  if (!res.ok) {
    std::cerr << res.errors;
    return kDiagnostics;
  }
  if (out) *out = std::move(*res.program);
  return kOk;
}

int gather_bindings(const CommonOpts &o, const KernelProgram &p,
                    std::map<std::string, Tile> *inputs,
                    std::map<std::string, double> *scalars) {
  for (auto &s : o.scalar_args) {
    auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --scalar expects name=value\n";
      return kDiagnostics;
    }
    (*scalars)[s.substr(0, eq)] = std::stod(s.substr(eq + 1));
  }
  *inputs = make_inputs(p, o.seed);
  for (auto &s : o.input_args) {
    auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --input expects name=path\n";
      return kDiagnostics;
    }
    auto t = read_tensor(s.substr(eq + 1));
    if (!t) {
      std::cerr << "error: cannot read tensor " << s.substr(eq + 1) << "\n";
      return kDiagnostics;
    }
    (*inputs)[s.substr(0, eq)] = std::move(*t);
  }
  return kOk;
}

int finish_run(const CommonOpts &o, const SimResult &res) {
  for (auto &f : res.faults) std::cerr << "fault: " << f.message << "\n";
  for (auto &r : res.races) std::cerr << "race: " << r.message << "\n";
  if (!o.out_dir.empty()) {
    for (auto &kv : res.outputs)
      write_tensor(o.out_dir + "/" + kv.first + ".bin", kv.second);
  }
  if (!res.ok) return kSimFault;
  if (o.strict && !res.races.empty()) return kSimFault;
  return kOk;
}

int cmd_run(const std::string &path, const CommonOpts &o,
            const std::string &trace_out) {
  KernelProgram p;
  int rc = compile(path, "", &p);
  if (rc != kOk) return rc;
  std::map<std::string, Tile> inputs;
  std::map<std::string, double> scalars;
  rc = gather_bindings(o, p, &inputs, &scalars);
  if (rc != kOk) return rc;
  SimConfig cfg = make_cfg(o);
  auto res = simulate(p, inputs, scalars, cfg);
  if (!trace_out.empty()) {
    std::ofstream out(trace_out);
    out << res.trace;
  }
  std::cout << res.summary << "\n";
  return finish_run(o, res);
}

int cmd_fuzz(const std::string &path, const CommonOpts &o, int schedules) {
  KernelProgram p;
  int rc = compile(path, "", &p);
  if (rc != kOk) return rc;
  std::map<std::string, Tile> inputs;
  std::map<std::string, double> scalars;
  rc = gather_bindings(o, p, &inputs, &scalars);
  if (rc != kOk) return rc;

  std::map<std::string, Tile> first;
  for (int s = 0; s < schedules; ++s) {
    SimConfig cfg = make_cfg(o);
    cfg.scheduler = SimConfig::Scheduler::SeededRandom;
    cfg.seed = o.seed + static_cast<std::uint64_t>(s);
    cfg.trace_enabled = false;
    auto res = simulate(p, inputs, scalars, cfg);
    if (!res.ok) {
      std::cerr << "schedule " << s << ": " << res.faults[0].message << "\n";
      return kSimFault;
    }
    if (!res.races.empty()) {
      std::cerr << "schedule " << s << ": race: " << res.races[0].message
                << "\n";
      return kSimFault;
    }
    if (s == 0) {
      first = res.outputs;
    } else {
      for (auto &kv : res.outputs)
        if (kv.second.data != first[kv.first].data) {
          std::cerr << "schedule " << s << ": output '" << kv.first
                    << "' diverged\n";
          return kMismatch;
        }
    }
  }
  std::cout << "fuzz: " << schedules
            << " schedules, identical outputs, zero races\n";
  return kOk;
}

int cmd_corpus(const std::string &dir, const CommonOpts &o) {
  std::string err;
  auto cases = load_corpus(dir, &err);
  if (cases.empty()) {
    std::cerr << "error: " << (err.empty() ? "no cases in " + dir : err)
              << "\n";
    return kDiagnostics;
  }
  int failures = 0;
  for (auto &c : cases) {
    KernelProgram p;
    int rc = compile(c.kernel_path, "", &p);
    if (rc != kOk) {
      std::cerr << c.name << ": pipeline diagnostics\n";
      failures = std::max(failures, kDiagnostics);
      continue;
    }
    auto inputs = make_inputs(p, c.seed);
    SimConfig cfg = make_cfg(o);
    cfg.seed = c.seed;
    cfg.trace_enabled = false;
    auto res = simulate(p, inputs, c.scalars, cfg);
    if (!res.ok || !res.races.empty()) {
      std::cerr << c.name << ": "
                << (!res.ok ? res.faults[0].message : res.races[0].message)
                << "\n";
      failures = std::max(failures, kSimFault);
      continue;
    }
    auto expected = run_oracle(c.oracle, inputs, c.scalars, &res);
    if (!expected) {
      std::cerr << c.name << ": unknown oracle '" << c.oracle << "'\n";
      failures = std::max(failures, kDiagnostics);
      continue;
    }
    bool ok = true;
    for (auto &kv : *expected) {
      auto it = res.outputs.find(kv.first);
      double e = it == res.outputs.end()
                     ? std::numeric_limits<double>::infinity()
                     : rel_error(it->second, kv.second);
      if (!(e <= c.tolerance)) {
        std::cerr << c.name << ": output '" << kv.first << "' rel error "
                  << e << " > " << c.tolerance << "\n";
        ok = false;
      }
    }
    if (!ok) {
      failures = std::max(failures, kMismatch);
      continue;
    }
    std::cout << c.name << ": ok\n";
  }
  return failures;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"MIMW kernel compiler and simulator"};
  app.require_subcommand(1);

  std::string kernel, dump_after, trace_out, corpus_dir = "kernels";
  int schedules = 100;
  CommonOpts opts;

  auto *check = app.add_subcommand("check", "run the pass pipeline");
  check->add_option("kernel", kernel)->required();
  check->add_option("--dump-after", dump_after,
                    "parse | validate | insert | resolve | legalize");

  auto *run = app.add_subcommand("run", "simulate a kernel");
  run->add_option("kernel", kernel)->required();
  add_common(run, opts);

  auto *trace = app.add_subcommand("trace", "simulate and write the trace");
  trace->add_option("kernel", kernel)->required();
  trace->add_option("--trace-out", trace_out)->required();
  add_common(trace, opts);

  auto *fuzz = app.add_subcommand("fuzz", "schedule-independence fuzzing");
  fuzz->add_option("kernel", kernel)->required();
  fuzz->add_option("--schedules", schedules, "number of seeded schedules");
  add_common(fuzz, opts);

  auto *corpus = app.add_subcommand("corpus", "run every case vs its oracle");
  corpus->add_option("--dir", corpus_dir, "case directory");
  add_common(corpus, opts);

  CLI11_PARSE(app, argc, argv);

  if (check->parsed()) return compile(kernel, dump_after, nullptr);
  if (run->parsed()) return cmd_run(kernel, opts, "");
  if (trace->parsed()) return cmd_run(kernel, opts, trace_out);
  if (fuzz->parsed()) return cmd_fuzz(kernel, opts, schedules);
  if (corpus->parsed()) return cmd_corpus(corpus_dir, opts);
  return 0;
}
