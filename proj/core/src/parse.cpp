#include "mimw/parse.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace mimw {

namespace {

struct ParseFail {
  ParseError err;
};

[[noreturn]] void fail(int line, int col, const std::string &msg) {
  throw ParseFail{ParseError{line, col, msg}};
}

// Cursor over a single line.
struct Cursor {
  const std::string &s;
  int line;
  size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }
  bool done() {
    skip_ws();
    return pos >= s.size();
  }
  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }
  int col() const { return static_cast<int>(pos) + 1; }

  bool try_char(char c) {
    skip_ws();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect_char(char c) {
    if (!try_char(c)) fail(line, col(), std::string("expected '") + c + "'");
  }

  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  }

  std::string ident() {
    skip_ws();
    size_t start = pos;
    while (pos < s.size() && ident_char(s[pos])) ++pos;
    if (pos == start) fail(line, col(), "expected identifier");
    return s.substr(start, pos - start);
  }

  bool looks_like_number() {
    skip_ws();
    if (pos >= s.size()) return false;
    char c = s[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return true;
    if ((c == '-' || c == '+') && pos + 1 < s.size() &&
        (std::isdigit(static_cast<unsigned char>(s[pos + 1])) ||
         s[pos + 1] == '.'))
      return true;
    return false;
  }

  double number() {
    skip_ws();
    const char *begin = s.c_str() + pos;
    char *end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) fail(line, col(), "expected number");
    pos += static_cast<size_t>(end - begin);
    return v;
  }

  std::int64_t integer() {
    double v = number();
    auto i = static_cast<std::int64_t>(v);
    if (static_cast<double>(i) != v) fail(line, col(), "expected integer");
    return i;
  }

  // Parses a single operand: %reg, number, identifier, or barrier ref.
  Operand operand() {
    skip_ws();
    if (try_char('%')) {
      return Operand::reg(ident());
    }
    if (looks_like_number()) {
      return Operand::immediate(number());
    }
    std::string name = ident();
    if (pos < s.size() && s[pos] == '[') {
      ++pos;
      Operand o;
      if (try_char('%')) {
        o = Operand::barrier_reg(name, ident());
      } else {
        o = Operand::barrier(name, integer());
      }
      expect_char(']');
      return o;
    }
    return Operand::ident(name);
  }

  std::vector<Operand> paren_operands() {
    expect_char('(');
    std::vector<Operand> ops;
    while (!try_char(')')) {
      if (pos >= s.size()) fail(line, col(), "unterminated '('");
      ops.push_back(operand());
    }
    return ops;
  }

  std::vector<std::int64_t> paren_ints() {
    auto ops = paren_operands();
    std::vector<std::int64_t> out;
    for (auto &o : ops) {
      if (o.kind != Operand::Kind::Imm ||
          o.imm != std::floor(o.imm))
        fail(line, col(), "expected integer list");
      out.push_back(static_cast<std::int64_t>(o.imm));
    }
    return out;
  }

  std::int64_t paren_int() {
    auto v = paren_ints();
    if (v.size() != 1) fail(line, col(), "expected single integer");
    return v[0];
  }
};

struct Parser {
  std::vector<std::pair<int, std::string>> lines;  // (line number, text)
  size_t next = 0;
  KernelProgram prog;

  explicit Parser(const std::string &text) {
    std::istringstream is(text);
    std::string raw;
    int ln = 0;
    while (std::getline(is, raw)) {
      ++ln;
      auto hash = raw.find('#');
      if (hash != std::string::npos) raw = raw.substr(0, hash);
      size_t a = raw.find_first_not_of(" \t\r");
      if (a == std::string::npos) continue;
      size_t b = raw.find_last_not_of(" \t\r");
      lines.emplace_back(ln, raw.substr(a, b - a + 1));
    }
  }

  bool done() const { return next >= lines.size(); }
  const std::pair<int, std::string> &cur() const {
    if (next >= lines.size()) fail(0, 0, "unexpected end of input");
    return lines[next];
  }

  KernelProgram run() {
    parse_header();
    while (!done()) {
      Cursor c{cur().second, cur().first};
      std::string kw = c.ident();
      if (kw == "param") {
        parse_param(c);
        ++next;
      } else if (kw == "buffer") {
        parse_buffer(c);
        ++next;
      } else if (kw == "barrier") {
        parse_barrier(c);
        ++next;
      } else if (kw == "prologue") {
        c.expect_char('{');
        ++next;
        prog.prologue = parse_body();
      } else if (kw == "task") {
        parse_task(c);
      } else {
        fail(c.line, 1, "unexpected '" + kw + "'");
      }
    }
    return std::move(prog);
  }

  void parse_header() {
    Cursor c{cur().second, cur().first};
    if (c.ident() != "kernel") fail(c.line, 1, "expected 'kernel'");
    prog.name = c.ident();
    while (!c.done()) {
      std::string kw = c.ident();
      if (kw == "grid") {
        auto v = c.paren_ints();
        if (v.size() != 3) fail(c.line, c.col(), "grid needs 3 extents");
        prog.grid = {v[0], v[1], v[2]};
      } else if (kw == "cluster") {
        auto v = c.paren_ints();
        if (v.size() != 3) fail(c.line, c.col(), "cluster needs 3 extents");
        prog.cluster = {v[0], v[1], v[2]};
      } else if (kw == "warps") {
        prog.num_warps = static_cast<int>(c.paren_int());
      } else if (kw == "tiles") {
        prog.tiles = c.paren_int();
      } else {
        fail(c.line, c.col(), "unknown kernel attribute '" + kw + "'");
      }
    }
    ++next;
  }

  void parse_param(Cursor &c) {
    std::string dir = c.ident();
    if (dir == "scalar") {
      prog.scalar_params.push_back({c.ident()});
      return;
    }
    if (dir != "in" && dir != "out")
      fail(c.line, c.col(), "expected 'in', 'out' or 'scalar'");
    TensorParam t;
    t.is_output = dir == "out";
    t.name = c.ident();
    if (c.ident() != "shape") fail(c.line, c.col(), "expected shape(...)");
    t.shape = c.paren_ints();
    prog.tensor_params.push_back(std::move(t));
  }

  void parse_buffer(Cursor &c) {
    BufferDecl b;
    b.name = c.ident();
    while (!c.done()) {
      std::string kw = c.ident();
      if (kw == "shape") {
        b.shape = c.paren_ints();
      } else if (kw == "f32") {
        // only element type in v1
      } else if (kw == "stages") {
        b.stages = static_cast<int>(c.paren_int());
      } else if (kw == "storage") {
        auto ops = c.paren_operands();
        if (ops.size() != 1 || ops[0].kind != Operand::Kind::Ident)
          fail(c.line, c.col(), "bad storage kind");
        if (ops[0].text == "smem")
          b.storage = BufferDecl::Storage::Smem;
        else if (ops[0].text == "smem_cluster")
          b.storage = BufferDecl::Storage::SmemCluster;
        else
          fail(c.line, c.col(), "unknown storage kind '" + ops[0].text + "'");
      } else if (kw == "layout") {
        auto ops = c.paren_operands();
        if (ops.size() != 1 || ops[0].kind != Operand::Kind::Ident)
          fail(c.line, c.col(), "bad layout encoding");
        auto enc = parse_layout_encoding(ops[0].text);
        if (!enc)
          fail(c.line, c.col(), "unknown layout encoding '" + ops[0].text + "'");
        b.layout = *enc;
      } else {
        fail(c.line, c.col(), "unknown buffer attribute '" + kw + "'");
      }
    }
    prog.buffers.push_back(std::move(b));
  }

  void parse_barrier(Cursor &c) {
    BarrierDecl b;
    b.name = c.ident();
    while (!c.done()) {
      std::string kw = c.ident();
      if (kw == "count")
        b.count = static_cast<int>(c.paren_int());
      else if (kw == "arrive")
        b.arrive_count = static_cast<int>(c.paren_int());
      else
        fail(c.line, c.col(), "unknown barrier attribute '" + kw + "'");
    }
    prog.barriers.push_back(std::move(b));
  }

  void parse_task(Cursor &c) {
    TaskRegion t;
    bool saw_kind = false;
    while (!c.try_char('{')) {
      if (c.done()) fail(c.line, c.col(), "expected '{'");
      std::string kw = c.ident();
      if (kw == "default") {
        t.kind = TaskRegion::Kind::Default;
        saw_kind = true;
      } else if (kw == "warps") {
        t.kind = TaskRegion::Kind::Explicit;
        t.num_warps = static_cast<int>(c.paren_int());
        saw_kind = true;
      } else if (kw == "replicate") {
        t.replicate = static_cast<int>(c.paren_int());
      } else if (kw == "registers") {
        t.registers = static_cast<int>(c.paren_int());
      } else if (kw == "replica") {
        t.replica_id = static_cast<int>(c.paren_int());
      } else {
        fail(c.line, c.col(), "unknown task attribute '" + kw + "'");
      }
    }
    if (!saw_kind) fail(c.line, c.col(), "task needs 'default' or warps(n)");
    ++next;
    t.body = parse_body();
    prog.tasks.push_back(std::move(t));
  }

  // Parses instructions until the matching '}' line (consumed).
  std::vector<Instruction> parse_body() {
    std::vector<Instruction> body;
    while (true) {
      if (done()) fail(0, 0, "missing '}'");
      Cursor c{cur().second, cur().first};
      if (c.try_char('}')) {
        if (!c.done()) {
          // "} else {" is consumed here and re-examined by the If parser.
          if (c.ident() != "else")
            fail(c.line, c.col(), "unexpected text after '}'");
          c.expect_char('{');
          if (!c.done()) fail(c.line, c.col(), "trailing text");
        }
        ++next;
        return body;
      }
      body.push_back(parse_instruction(c));
    }
  }

  Instruction parse_instruction(Cursor &c) {
    Instruction ins;
    ins.id = prog.fresh_id();

    // Keyword-led forms first.
    size_t mark = c.pos;
    if (!c.try_char('%')) {
      std::string kw = c.ident();
      if (kw == "for") {
        ++next;
        return parse_for(c, std::move(ins));
      }
      if (kw == "while" || kw == "if") {
        ins.op = kw == "while" ? Opcode::While : Opcode::If;
        ins.args.push_back(c.operand());
        c.expect_char('{');
        ++next;
        ins.body = parse_body();
        if (ins.op == Opcode::If) maybe_else(ins);
        return ins;
      }
      c.pos = mark;
    } else {
      c.pos = mark;
    }

    if (c.try_char('%')) {
      ins.result = c.ident();
      c.expect_char('=');
    }
    std::string name = c.ident();
    auto op = opcode_from_name(name);
    if (!op) fail(c.line, c.col(), "unknown opcode '" + name + "'");
    ins.op = *op;

    while (!c.done()) {
      if (c.peek() == '{') break;
      size_t save = c.pos;
      if (!c.looks_like_number() && c.peek() != '%') {
        std::string word = c.ident();
        if (c.pos < c.s.size() && c.s[c.pos] == '(') {
          ins.attrs[word] = c.paren_operands();
          continue;
        }
        c.pos = save;
      }
      ins.args.push_back(c.operand());
    }

    if (ins.op == Opcode::While || ins.op == Opcode::If) {
      c.expect_char('{');
      ++next;
      ins.body = parse_body();
      if (ins.op == Opcode::If) maybe_else(ins);
      return ins;
    }

    if (!c.done()) fail(c.line, c.col(), "trailing text");
    ++next;
    return ins;
  }

  Instruction parse_for(Cursor &c, Instruction ins) {
    ins.op = Opcode::For;
    c.expect_char('%');
    ins.result = c.ident();
    c.expect_char('=');
    ins.args.push_back(c.operand());
    if (c.ident() != "to") fail(c.line, c.col(), "expected 'to'");
    ins.args.push_back(c.operand());
    if (!c.try_char('{')) {
      if (c.ident() != "step") fail(c.line, c.col(), "expected 'step' or '{'");
      ins.attrs["step"] = c.paren_operands();
      c.expect_char('{');
    }
    if (!c.done()) fail(c.line, c.col(), "trailing text");
    ins.body = parse_body();
    return ins;
  }

  // parse_body consumed the '}' line; check whether it was '} else {'.
  void maybe_else(Instruction &ins) {
    // Look back: parse_body stops at a line starting with '}'. To support
    // '} else {' we re-examine the consumed line.
    auto &prev = lines[next - 1];
    Cursor c{prev.second, prev.first};
    c.expect_char('}');
    if (c.done()) return;
    if (c.ident() != "else") fail(c.line, c.col(), "expected 'else'");
    c.expect_char('{');
    ins.else_body = parse_body();
  }
};

}  // namespace

ParseResult parse_kernel(const std::string &text) {
  try {
    Parser p(text);
    return p.run();
  } catch (const ParseFail &f) {
    return f.err;
  }
}

KernelProgram parse_kernel_or_throw(const std::string &text) {
  auto r = parse_kernel(text);
  if (auto *e = std::get_if<ParseError>(&r))
    throw std::runtime_error(e->str());
  return std::move(std::get<KernelProgram>(r));
}

}  // namespace mimw
