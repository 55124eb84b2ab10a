#include "mimw/pipeline.hpp"

#include "mimw/parse.hpp"
#include "mimw/print.hpp"
#include "mimw/sync.hpp"
#include "mimw/validate.hpp"

namespace mimw {

PipelineResult run_pipeline(const std::string &source,
                            const PipelineOptions &opts) {
  PipelineResult res;
  auto maybe_dump = [&](const KernelProgram &p, const std::string &stage) {
    if (opts.dump_after == stage) res.dump = print_ir(p, stage);
  };

  auto parsed = parse_kernel(source);
  if (std::holds_alternative<ParseError>(parsed)) {
    res.errors = std::get<ParseError>(parsed).str() + "\n";
    return res;
  }
  KernelProgram p = std::move(std::get<KernelProgram>(parsed));
  maybe_dump(p, "parse");

  auto report = validate(p, opts.shared_capacity_bytes);
  if (!report.ok()) {
    res.errors = report.str();
    return res;
  }
  p = expand_replicas(p);
  maybe_dump(p, "validate");

  insert_constraints(p, opts.layout);
  maybe_dump(p, "insert");

  auto constraints = gather_constraints(p);
  auto backward = propagate_backward(p, constraints);
  auto forward = propagate_forward(p, constraints, backward);
  auto resolved = resolve(p, constraints, forward);
  if (!resolved.ok) {
    for (auto &d : resolved.diagnostics) res.errors += d.render(opts.color);
    return res;
  }
  maybe_dump(p, "resolve");

  auto legal = legalize_cluster(p);
  if (!legal.ok) {
    for (auto &d : legal.diagnostics)
      res.errors += d.render(opts.color) + "\n";
    return res;
  }
  maybe_dump(p, "legalize");

  res.ok = true;
  res.program = std::move(p);
  return res;
}

}  // namespace mimw
