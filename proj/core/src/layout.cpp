#include "mimw/layout.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

namespace mimw {

LayoutFact meet(const LayoutFact &a, const LayoutFact &b) {
  if (a.is_any()) return b;
  if (b.is_any()) return a;
  LayoutFact out;
  out.provenance = a.provenance;
  out.provenance.insert(b.provenance.begin(), b.provenance.end());
  if (a.is_conflict() || b.is_conflict() || a.enc != b.enc) {
    out.state = LayoutFact::State::Conflict;
  } else {
    out.state = LayoutFact::State::Known;
    out.enc = a.enc;
  }
  return out;
}

std::string LayoutDiagnostic::render(bool color) const {
  std::ostringstream os;
  const char *red = color ? "\033[31m" : "";
  const char *reset = color ? "\033[0m" : "";
  os << red << "error[" << code << "]" << reset
     << ": conflicting layout requirements\n";
  for (auto &c : sites) {
    os << "  note: " << c.enc.str() << " required";
    switch (c.priority) {
      case ConstraintPriority::OperationRequired:
        os << " by operation";
        break;
      case ConstraintPriority::UserRequested:
        os << " by user";
        break;
      case ConstraintPriority::HeuristicDefault:
        os << " by default heuristic";
        break;
    }
    os << " at " << (c.site >= 0 ? "instr " + std::to_string(c.site)
                                 : c.site_desc)
       << "\n";
  }
  return os.str();
}

namespace {

ConstraintPriority prio_from_name(const std::string &s) {
  if (s == "op") return ConstraintPriority::OperationRequired;
  if (s == "user") return ConstraintPriority::UserRequested;
  return ConstraintPriority::HeuristicDefault;
}

const char *prio_name(ConstraintPriority p) {
  switch (p) {
    case ConstraintPriority::OperationRequired:
      return "op";
    case ConstraintPriority::UserRequested:
      return "user";
    default:
      return "default";
  }
}

bool has_matching_require(const KernelProgram &p, const std::string &reg,
                          const LayoutEncoding &enc, ConstraintPriority prio) {
  bool found = false;
  for_each_instruction(p, [&](const Instruction &ins) {
    if (found || ins.op != Opcode::RequireLayout) return;
    if (ins.args.size() != 1 || ins.args[0].kind != Operand::Kind::Reg ||
        ins.args[0].text != reg)
      return;
    auto *e = ins.attr("enc");
    auto *pr = ins.attr("prio");
    if (!e || !pr) return;
    auto pe = parse_layout_encoding(e->at(0).text);
    if (pe && *pe == enc && prio_from_name(pr->at(0).text) == prio)
      found = true;
  });
  if (found) return true;
  // A previous resolution may have rewritten the require to a conversion of
  // this register; that still discharges the constraint.
  for_each_instruction(p, [&](const Instruction &ins) {
    if (found || ins.op != Opcode::LayoutConvert) return;
    if (ins.args.size() != 1 || ins.args[0].kind != Operand::Kind::Reg ||
        ins.args[0].text != reg)
      return;
    auto *e = ins.attr("enc");
    if (!e) return;
    auto pe = parse_layout_encoding(e->at(0).text);
    if (pe && *pe == enc) found = true;
  });
  return found;
}

Instruction make_require(KernelProgram &p, const std::string &reg,
                         const LayoutEncoding &enc, ConstraintPriority prio) {
  Instruction r;
  r.id = p.fresh_id();
  r.op = Opcode::RequireLayout;
  r.args.push_back(Operand::reg(reg));
  r.attrs["enc"] = {Operand::ident(enc.str())};
  r.attrs["prio"] = {Operand::ident(prio_name(prio))};
  return r;
}

void insert_in_body(KernelProgram &p, std::vector<Instruction> &body,
                    const LayoutOptions &opts) {
  for (size_t i = 0; i < body.size(); ++i) {
    Instruction &ins = body[i];
    insert_in_body(p, ins.body, opts);
    insert_in_body(p, ins.else_body, opts);

    std::vector<Instruction> pre;
    auto need = [&](const Operand &o, LayoutEncoding enc,
                    ConstraintPriority prio) {
      if (o.kind != Operand::Kind::Reg) return;
      if (has_matching_require(p, o.text, enc, prio)) return;
      pre.push_back(make_require(p, o.text, enc, prio));
    };

    switch (ins.op) {
      case Opcode::Dot:
      case Opcode::AsyncDot:
      case Opcode::CollectiveDot:
        need(ins.args[0], LayoutEncoding::mma(LayoutEncoding::Role::A),
             ConstraintPriority::OperationRequired);
        need(ins.args[1], LayoutEncoding::mma(LayoutEncoding::Role::B),
             ConstraintPriority::OperationRequired);
        break;
      case Opcode::AsyncCopy:
        need(ins.args[1], opts.copy_default,
             ConstraintPriority::HeuristicDefault);
        break;
      default:
        break;
    }
    if (!pre.empty()) {
      body.insert(body.begin() + i, pre.begin(), pre.end());
      i += pre.size();
    }
  }
}

// ---------------------------------------------------------------------------
// Dataflow graph
// ---------------------------------------------------------------------------

struct Edge {
  std::string prod;  // producer-side key
  std::string cons;  // consumer-side key
  bool swap = false;  // transpose: RowMajor <-> ColMajor
};

struct Graph {
  std::vector<Edge> edges;
  std::set<std::string> released;
  std::set<std::string> keys;
};

Graph build_graph(const KernelProgram &p) {
  Graph g;
  for (auto &b : p.buffers) g.keys.insert(buf_key(b.name));

  for_each_instruction(p, [&](const Instruction &ins) {
    auto add = [&](std::string prod, std::string cons, bool swap = false) {
      g.keys.insert(prod);
      g.keys.insert(cons);
      g.edges.push_back({std::move(prod), std::move(cons), swap});
    };
    switch (ins.op) {
      case Opcode::View:
        if (!ins.args.empty() && ins.args[0].kind == Operand::Kind::Ident)
          add(buf_key(ins.args[0].text), reg_key(ins.result));
        break;
      case Opcode::RemoteView:
      case Opcode::Reshape:
      case Opcode::Copy:
        if (!ins.args.empty() && ins.args[0].kind == Operand::Kind::Reg)
          add(reg_key(ins.args[0].text), reg_key(ins.result));
        break;
      case Opcode::Transpose:
        if (!ins.args.empty() && ins.args[0].kind == Operand::Kind::Reg)
          add(reg_key(ins.args[0].text), reg_key(ins.result), true);
        break;
      case Opcode::LocalLoad:
        if (!ins.args.empty() && ins.args[0].kind == Operand::Kind::Reg)
          add(reg_key(ins.args[0].text), reg_key(ins.result));
        break;
      case Opcode::LocalStore:
      case Opcode::AsyncRemoteStore:
        if (ins.args.size() >= 2 && ins.args[0].kind == Operand::Kind::Reg &&
            ins.args[1].kind == Operand::Kind::Reg)
          add(reg_key(ins.args[1].text), reg_key(ins.args[0].text));
        break;
      case Opcode::ReleaseLayout:
        if (!ins.args.empty() && ins.args[0].kind == Operand::Kind::Reg)
          g.released.insert(reg_key(ins.args[0].text));
        break;
      default:
        break;
    }
  });

  // release_layout truncates propagation in both directions at its value.
  if (!g.released.empty()) {
    std::vector<Edge> kept;
    for (auto &e : g.edges)
      if (!g.released.count(e.prod) && !g.released.count(e.cons))
        kept.push_back(e);
    g.edges = std::move(kept);
  }
  return g;
}

LayoutFact transform(const LayoutFact &f, bool swap) {
  if (!swap || !f.is_known()) return f;
  LayoutFact out = f;
  if (f.enc.kind == LayoutEncoding::Kind::RowMajor)
    out.enc = LayoutEncoding::col_major();
  else if (f.enc.kind == LayoutEncoding::Kind::ColMajor)
    out.enc = LayoutEncoding::row_major();
  // Swizzled and MmaOperand pass through with an axis permutation recorded
  // implicitly by the transpose itself.
  return out;
}

FactMap seed_facts(const Graph &g,
                   const std::vector<LayoutConstraint> &constraints) {
  FactMap facts;
  for (auto &k : g.keys) facts[k] = LayoutFact::any();
  for (size_t i = 0; i < constraints.size(); ++i) {
    auto &c = constraints[i];
    if (g.released.count(c.key)) continue;
    auto &f = facts[c.key];
    f = meet(f, LayoutFact::known(c.enc, {static_cast<int>(i)}));
  }
  return facts;
}

// One direction of the fixpoint. `backward` pulls consumer facts into
// producers; forward pushes producer facts into consumers.
void fixpoint(FactMap &facts, const Graph &g, bool backward,
              const std::vector<int> *edge_order) {
  std::vector<int> order;
  if (edge_order) {
    order = *edge_order;
  } else {
    order.resize(g.edges.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  }
  // Lattice height is 3, so |keys| * 3 sweeps always suffice.
  size_t max_sweeps = facts.size() * 3 + 1;
  for (size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;
    for (int idx : order) {
      auto &e = g.edges[static_cast<size_t>(idx)];
      const std::string &from = backward ? e.cons : e.prod;
      const std::string &to = backward ? e.prod : e.cons;
      LayoutFact next = meet(facts[to], transform(facts[from], e.swap));
      if (!(next == facts[to])) {
        facts[to] = next;
        changed = true;
      }
    }
    if (!changed) break;
  }
}

}  // namespace

void insert_constraints(KernelProgram &p, const LayoutOptions &opts) {
  insert_in_body(p, p.prologue, opts);
  for (auto &t : p.tasks) insert_in_body(p, t.body, opts);
}

std::vector<LayoutConstraint> gather_constraints(const KernelProgram &p) {
  std::vector<LayoutConstraint> out;
  for (auto &b : p.buffers) {
    if (b.layout)
      out.push_back({buf_key(b.name), *b.layout,
                     ConstraintPriority::UserRequested, -1,
                     "declaration of '" + b.name + "'"});
  }
  for_each_instruction(p, [&](const Instruction &ins) {
    if (ins.op != Opcode::RequireLayout) return;
    if (ins.args.size() != 1 || ins.args[0].kind != Operand::Kind::Reg) return;
    auto *e = ins.attr("enc");
    auto *pr = ins.attr("prio");
    if (!e || !pr) return;
    auto enc = parse_layout_encoding(e->at(0).text);
    if (!enc) return;
    out.push_back({reg_key(ins.args[0].text), *enc,
                   prio_from_name(pr->at(0).text), ins.id,
                   "require_layout of %" + ins.args[0].text});
  });
  return out;
}

FactMap propagate_backward(const KernelProgram &p,
                           const std::vector<LayoutConstraint> &constraints,
                           const std::vector<int> *edge_order) {
  Graph g = build_graph(p);
  FactMap facts = seed_facts(g, constraints);
  fixpoint(facts, g, /*backward=*/true, edge_order);
  return facts;
}

FactMap propagate_forward(const KernelProgram &p,
                          const std::vector<LayoutConstraint> &constraints,
                          const FactMap &backward,
                          const std::vector<int> *edge_order) {
  Graph g = build_graph(p);
  FactMap facts = backward;
  for (auto &k : g.keys)
    if (!facts.count(k)) facts[k] = LayoutFact::any();
  (void)constraints;
  fixpoint(facts, g, /*backward=*/false, edge_order);
  return facts;
}

int layout_edge_count(const KernelProgram &p) {
  return static_cast<int>(build_graph(p).edges.size());
}

std::vector<std::set<std::string>> alias_groups(const KernelProgram &p) {
  std::map<std::string, std::string> parent;
  std::function<std::string(std::string)> find = [&](std::string x) {
    while (parent.count(x) && parent[x] != x) x = parent[x];
    return x;
  };
  auto unite = [&](const std::string &a, const std::string &b) {
    if (!parent.count(a)) parent[a] = a;
    if (!parent.count(b)) parent[b] = b;
    auto ra = find(a), rb = find(b);
    if (ra != rb) parent[ra] = rb;
  };
  for_each_instruction(p, [&](const Instruction &ins) {
    if (ins.op == Opcode::LocalAlias && ins.args.size() == 2)
      unite(ins.args[0].text, ins.args[1].text);
  });
  std::map<std::string, std::set<std::string>> groups;
  for (auto &kv : parent) groups[find(kv.first)].insert(kv.first);
  std::vector<std::set<std::string>> out;
  for (auto &kv : groups)
    if (kv.second.size() > 1) out.push_back(kv.second);
  return out;
}

namespace {

// Inserts a layout_convert for a defeated constraint site and rewires the
// consuming instruction. Returns true if a conversion was actually added.
bool insert_convert(KernelProgram &p, std::vector<Instruction> &body,
                    const LayoutConstraint &c) {
  for (size_t i = 0; i < body.size(); ++i) {
    Instruction &ins = body[i];
    if (ins.id == c.site) {
      std::string reg = c.key.substr(4);  // strip "reg:"
      // The register may itself be a conversion to the requested encoding
      // from a previous resolution; the site is already satisfied.
      bool satisfied = false;
      for_each_instruction(p, [&](const Instruction &def) {
        if (satisfied || def.op != Opcode::LayoutConvert ||
            def.result != reg)
          return;
        auto *e = def.attr("enc");
        if (!e) return;
        auto pe = parse_layout_encoding(e->at(0).text);
        if (pe && *pe == c.enc) satisfied = true;
      });
      if (satisfied) return false;
      // Already converted on a previous run?
      if (i > 0 && body[i - 1].op == Opcode::LayoutConvert &&
          !body[i - 1].args.empty() && body[i - 1].args[0].text == reg) {
        auto *e = body[i - 1].attr("enc");
        if (e && parse_layout_encoding(e->at(0).text) == c.enc) return false;
      }
      // The operand may already have been rewritten to a convert result.
      bool uses_reg = false;
      for (auto &a : ins.args)
        if (a.kind == Operand::Kind::Reg && a.text == reg) uses_reg = true;
      if (!uses_reg) return false;

      Instruction cvt;
      cvt.id = p.fresh_id();
      cvt.op = Opcode::LayoutConvert;
      cvt.result = reg + "_cvt" + std::to_string(c.site);
      cvt.args.push_back(Operand::reg(reg));
      cvt.attrs["enc"] = {Operand::ident(c.enc.str())};
      for (auto &a : ins.args)
        if (a.kind == Operand::Kind::Reg && a.text == reg)
          a = Operand::reg(cvt.result);
      body.insert(body.begin() + i, std::move(cvt));
      return true;
    }
    if (insert_convert(p, ins.body, c)) return true;
    if (insert_convert(p, ins.else_body, c)) return true;
  }
  return false;
}

bool insert_convert(KernelProgram &p, const LayoutConstraint &c) {
  if (insert_convert(p, p.prologue, c)) return true;
  for (auto &t : p.tasks)
    if (insert_convert(p, t.body, c)) return true;
  return false;
}

}  // namespace

ResolveResult resolve(KernelProgram &p,
                      const std::vector<LayoutConstraint> &constraints,
                      const FactMap &facts) {
  ResolveResult res;
  auto groups = alias_groups(p);
  std::map<std::string, size_t> member_group;
  for (size_t gi = 0; gi < groups.size(); ++gi)
    for (auto &m : groups[gi]) member_group[m] = gi;

  auto fact_of = [&](const std::string &key) {
    auto it = facts.find(key);
    return it == facts.end() ? LayoutFact::any() : it->second;
  };
  auto constraint_set = [&](const LayoutFact &f) {
    std::vector<LayoutConstraint> cs;
    for (int i : f.provenance) cs.push_back(constraints[static_cast<size_t>(i)]);
    return cs;
  };

  // Picks the winning encoding by priority. On an equal-priority tie with
  // distinct encodings, returns nullopt and fills `tied`.
  auto pick = [&](const std::vector<LayoutConstraint> &cs,
                  std::vector<LayoutConstraint> *tied)
      -> std::optional<LayoutEncoding> {
    int best = 0;
    for (auto &c : cs) best = std::max(best, static_cast<int>(c.priority));
    std::set<LayoutEncoding> encs;
    for (auto &c : cs)
      if (static_cast<int>(c.priority) == best) encs.insert(c.enc);
    if (encs.size() > 1) {
      for (auto &c : cs)
        if (static_cast<int>(c.priority) == best) tied->push_back(c);
      return std::nullopt;
    }
    return *encs.begin();
  };

  // Standalone allocations.
  for (auto &b : p.buffers) {
    if (member_group.count(b.name)) continue;
    LayoutFact f = fact_of(buf_key(b.name));
    if (f.is_any()) {
      if (!b.layout) b.layout = LayoutEncoding::row_major();
      continue;
    }
    if (f.is_known()) {
      b.layout = f.enc;
      continue;
    }
    auto cs = constraint_set(f);
    std::vector<LayoutConstraint> tied;
    auto winner = pick(cs, &tied);
    if (!winner) {
      res.ok = false;
      res.diagnostics.push_back(
          {"L001", "allocation '" + b.name + "'", tied});
      continue;
    }
    b.layout = *winner;
    for (auto &c : cs) {
      if (c.enc == *winner) continue;
      if (c.site >= 0 && insert_convert(p, c)) ++res.conversions_inserted;
    }
  }

  // Alias groups: one compatible encoding, no conversions allowed.
  for (auto &g : groups) {
    std::vector<LayoutConstraint> cs;
    std::set<int> seen;
    for (auto &m : g) {
      LayoutFact f = fact_of(buf_key(m));
      for (int i : f.provenance)
        if (seen.insert(i).second)
          cs.push_back(constraints[static_cast<size_t>(i)]);
    }
    std::set<LayoutEncoding> required;
    std::vector<LayoutConstraint> required_sites;
    for (auto &c : cs)
      if (c.priority == ConstraintPriority::OperationRequired) {
        required.insert(c.enc);
        required_sites.push_back(c);
      }
    if (required.size() > 1) {
      res.ok = false;
      std::string names;
      for (auto &m : g) names += (names.empty() ? "" : ", ") + m;
      res.diagnostics.push_back(
          {"L002", "alias group {" + names + "}", required_sites});
      continue;
    }
    LayoutEncoding enc = LayoutEncoding::row_major();
    if (required.size() == 1) {
      enc = *required.begin();
    } else if (!cs.empty()) {
      std::vector<LayoutConstraint> tied;
      auto winner = pick(cs, &tied);
      if (!winner) {
        res.ok = false;
        std::string names;
        for (auto &m : g) names += (names.empty() ? "" : ", ") + m;
        res.diagnostics.push_back(
            {"L001", "alias group {" + names + "}", tied});
        continue;
      }
      enc = *winner;
    }
    for (auto &m : g) {
      auto *b = p.find_buffer(m);
      if (b) b->layout = enc;
    }
  }
  return res;
}

ResolveResult run_layout_pipeline(KernelProgram &p, const LayoutOptions &opts) {
  insert_constraints(p, opts);
  auto cs = gather_constraints(p);
  auto back = propagate_backward(p, cs);
  auto fwd = propagate_forward(p, cs, back);
  return resolve(p, cs, fwd);
}

bool verify_mma_roles(const KernelProgram &p, std::string *why) {
  // Last syntactic def wins; kernels keep layout-relevant values single-def.
  std::map<std::string, const Instruction *> defs;
  for_each_instruction(p, [&](const Instruction &ins) {
    if (!ins.result.empty()) defs[ins.result] = &ins;
  });

  std::function<std::optional<LayoutEncoding>(const std::string &, int)>
      enc_of = [&](const std::string &reg,
                   int depth) -> std::optional<LayoutEncoding> {
    if (depth > 32) return std::nullopt;
    auto it = defs.find(reg);
    if (it == defs.end()) return std::nullopt;
    const Instruction &d = *it->second;
    switch (d.op) {
      case Opcode::LayoutConvert: {
        auto *e = d.attr("enc");
        return e ? parse_layout_encoding(e->at(0).text) : std::nullopt;
      }
      case Opcode::LocalLoad: {
        if (d.args.empty() || d.args[0].kind != Operand::Kind::Reg)
          return std::nullopt;
        auto vit = defs.find(d.args[0].text);
        if (vit == defs.end()) return std::nullopt;
        const Instruction *v = vit->second;
        while (v && v->op == Opcode::RemoteView) {
          auto nit = defs.find(v->args[0].text);
          v = nit == defs.end() ? nullptr : nit->second;
        }
        if (!v || v->op != Opcode::View) return std::nullopt;
        auto *b = p.find_buffer(v->args[0].text);
        return b ? b->layout : std::nullopt;
      }
      case Opcode::Transpose: {
        auto e = enc_of(d.args[0].text, depth + 1);
        if (e && e->kind == LayoutEncoding::Kind::RowMajor)
          return LayoutEncoding::col_major();
        if (e && e->kind == LayoutEncoding::Kind::ColMajor)
          return LayoutEncoding::row_major();
        return e;
      }
      case Opcode::Copy:
      case Opcode::Reshape:
        if (!d.args.empty() && d.args[0].kind == Operand::Kind::Reg)
          return enc_of(d.args[0].text, depth + 1);
        return std::nullopt;
      default:
        return std::nullopt;
    }
  };

  bool ok = true;
  for_each_instruction(p, [&](const Instruction &ins) {
    if (!ok) return;
    if (ins.op != Opcode::Dot && ins.op != Opcode::AsyncDot &&
        ins.op != Opcode::CollectiveDot)
      return;
    const LayoutEncoding want[2] = {
        LayoutEncoding::mma(LayoutEncoding::Role::A),
        LayoutEncoding::mma(LayoutEncoding::Role::B)};
    for (int i = 0; i < 2; ++i) {
      if (ins.args[static_cast<size_t>(i)].kind != Operand::Kind::Reg) continue;
      auto e = enc_of(ins.args[static_cast<size_t>(i)].text, 0);
      if (e && !(*e == want[i])) {
        ok = false;
        if (why)
          *why = "dot operand " + std::to_string(i) + " at instr " +
                 std::to_string(ins.id) + " has encoding " + e->str();
      }
    }
  });
  return ok;
}

}  // namespace mimw
