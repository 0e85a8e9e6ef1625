#include "kom/ir.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <sstream>

namespace kom::ir {

std::string Diagnostic::to_string(const std::string& file) const {
  std::ostringstream os;
  if (!file.empty()) os << file << ":";
  os << line << ":" << column << ": "
     << (severity == Severity::Error ? "error" : "warning") << ": " << message;
  return os.str();
}

int Function::block_index(const std::string& label) const {
  for (size_t i = 0; i < blocks.size(); i++)
    if (blocks[i].label == label) return static_cast<int>(i);
  return -1;
}

const Function* Program::function(const std::string& name) const {
  for (const Function& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

bool is_intrinsic(const std::string& name) {
  return name == "memzero" || name == "assume_user_buffer";
}

// ---------------------------------------------------------------------------
// Lexing

namespace {

struct Token {
  enum class Kind { Ident, Reg, Func, Named, Number, Punct, End } kind;
  std::string text;
  uint32_t number = 0;
  int column = 0;
};

struct LineLexer {
  const std::string& line;
  int lineno;
  size_t pos = 0;
  std::vector<Diagnostic>* diags;
  bool failed = false;

  void error(int col, const std::string& msg) {
    if (!failed) diags->push_back({Severity::Error, lineno, col, msg});
    failed = true;
  }

  std::vector<Token> lex() {
    std::vector<Token> out;
    while (pos < line.size()) {
      char c = line[pos];
      if (c == '#') break;
      if (std::isspace(static_cast<unsigned char>(c))) {
        pos++;
        continue;
      }
      int col = static_cast<int>(pos) + 1;
      if (c == '%' || c == '@' || c == '$') {
        pos++;
        std::string name;
        while (pos < line.size() &&
               (std::isalnum(static_cast<unsigned char>(line[pos])) || line[pos] == '_' ||
                line[pos] == '.' || line[pos] == '-')) {
          name += line[pos++];
        }
        if (name.empty()) {
          error(col, std::string("expected identifier after '") + c + "'");
          return out;
        }
        Token::Kind k = c == '%' ? Token::Kind::Reg
                        : c == '@' ? Token::Kind::Func
                                   : Token::Kind::Named;
        out.push_back({k, name, 0, col});
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '-' && pos + 1 < line.size() &&
           std::isdigit(static_cast<unsigned char>(line[pos + 1])))) {
        bool neg = c == '-';
        if (neg) pos++;
        uint64_t v = 0;
        if (pos + 1 < line.size() && line[pos] == '0' &&
            (line[pos + 1] == 'x' || line[pos + 1] == 'X')) {
          pos += 2;
          size_t start = pos;
          while (pos < line.size() && std::isxdigit(static_cast<unsigned char>(line[pos])))
            v = v * 16 + (std::isdigit(static_cast<unsigned char>(line[pos]))
                              ? line[pos] - '0'
                              : (std::tolower(line[pos]) - 'a' + 10)),
            pos++;
          if (pos == start) {
            error(col, "malformed hex literal");
            return out;
          }
        } else {
          while (pos < line.size() && std::isdigit(static_cast<unsigned char>(line[pos])))
            v = v * 10 + (line[pos] - '0'), pos++;
        }
        uint32_t word = static_cast<uint32_t>(v);
        if (neg) word = 0u - word;
        out.push_back({Token::Kind::Number, "", word, col});
        continue;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string name;
        while (pos < line.size() &&
               (std::isalnum(static_cast<unsigned char>(line[pos])) || line[pos] == '_' ||
                line[pos] == '.')) {
          name += line[pos++];
        }
        out.push_back({Token::Kind::Ident, name, 0, col});
        continue;
      }
      if (std::string("(),:={}").find(c) != std::string::npos) {
        out.push_back({Token::Kind::Punct, std::string(1, c), 0, col});
        pos++;
        continue;
      }
      error(col, std::string("unexpected character '") + c + "'");
      return out;
    }
    out.push_back({Token::Kind::End, "", 0, static_cast<int>(line.size()) + 1});
    return out;
  }
};

struct Parser {
  std::vector<Token> toks;
  size_t ti = 0;
  int lineno = 0;
  std::vector<Diagnostic>* diags;
  bool line_failed = false;

  const Token& peek() const { return toks[std::min(ti, toks.size() - 1)]; }
  const Token& next() { return toks[std::min(ti++, toks.size() - 1)]; }
  bool at_end() const { return peek().kind == Token::Kind::End; }

  void error(const std::string& msg) {
    if (!line_failed)
      diags->push_back({Severity::Error, lineno, peek().column, msg});
    line_failed = true;
  }

  bool accept_punct(const std::string& p) {
    if (peek().kind == Token::Kind::Punct && peek().text == p) {
      ti++;
      return true;
    }
    return false;
  }

  bool expect_punct(const std::string& p) {
    if (accept_punct(p)) return true;
    error("expected '" + p + "'");
    return false;
  }

  bool expect_end() {
    if (at_end()) return true;
    error("trailing tokens");
    return false;
  }
};

struct FunctionBuilder {
  Function fn;
  std::map<std::string, int> reg_ids;

  int reg(const std::string& name) {
    auto it = reg_ids.find(name);
    if (it != reg_ids.end()) return it->second;
    int id = static_cast<int>(fn.registers.size());
    fn.registers.push_back(name);
    reg_ids.emplace(name, id);
    return id;
  }
};

// A lone identifier followed by ':' (optionally with a parameter list) is a
// block label; everything else is an instruction.
bool looks_like_block_label(const Parser& p) {
  size_t i = p.ti;
  const std::vector<Token>& t = p.toks;
  if (t[i].kind != Token::Kind::Ident) return false;
  i++;
  if (i < t.size() && t[i].kind == Token::Kind::Punct && t[i].text == "(") {
    int depth = 1;
    i++;
    while (i < t.size() && depth > 0) {
      if (t[i].kind == Token::Kind::Punct && t[i].text == "(") depth++;
      if (t[i].kind == Token::Kind::Punct && t[i].text == ")") depth--;
      i++;
    }
  }
  return i < t.size() && t[i].kind == Token::Kind::Punct && t[i].text == ":";
}

} // namespace

// ---------------------------------------------------------------------------
// Parsing

ParseResult parse_program(const std::string& text, const std::string& source_name) {
  ParseResult result;
  Program prog;
  prog.source_name = source_name;
  std::vector<Diagnostic>& diags = result.diagnostics;

  std::optional<FunctionBuilder> cur;
  BasicBlock* cur_block = nullptr;

  auto finish_function = [&](int lineno) {
    if (!cur) return;
    if (cur->fn.blocks.empty())
      diags.push_back({Severity::Error, lineno, 1,
                       "function @" + cur->fn.name + " has no blocks"});
    for (const Function& f : prog.functions)
      if (f.name == cur->fn.name)
        diags.push_back({Severity::Error, cur->fn.line, 1,
                         "duplicate function name @" + cur->fn.name});
    prog.functions.push_back(std::move(cur->fn));
    cur.reset();
    cur_block = nullptr;
  };

  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    lineno++;
    LineLexer lexer{line, lineno, 0, &diags};
    std::vector<Token> toks = lexer.lex();
    if (lexer.failed) continue;
    Parser p{std::move(toks), 0, lineno, &diags};
    if (p.at_end()) continue;

    const Token& first = p.peek();

    // const $NAME = value
    if (first.kind == Token::Kind::Ident && first.text == "const" && !cur) {
      p.next();
      if (p.peek().kind != Token::Kind::Named) {
        p.error("expected $NAME in constant declaration");
        continue;
      }
      std::string name = p.next().text;
      if (!p.expect_punct("=")) continue;
      if (p.peek().kind != Token::Kind::Number) {
        p.error("expected numeric constant value");
        continue;
      }
      uint32_t v = p.next().number;
      if (prog.named_constants.count(name))
        diags.push_back({Severity::Error, lineno, first.column,
                         "duplicate constant $" + name});
      else
        prog.named_constants.emplace(name, v);
      p.expect_end();
      continue;
    }

    // fn @name(params) {
    if (first.kind == Token::Kind::Ident && first.text == "fn") {
      finish_function(lineno);
      p.next();
      if (p.peek().kind != Token::Kind::Func) {
        p.error("expected @name after 'fn'");
        continue;
      }
      FunctionBuilder builder;
      builder.fn.name = p.next().text;
      builder.fn.line = lineno;
      if (!p.expect_punct("(")) continue;
      bool first_param = true;
      while (!p.accept_punct(")")) {
        if (!first_param && !p.expect_punct(",")) break;
        first_param = false;
        if (p.peek().kind != Token::Kind::Reg) {
          p.error("expected %param");
          break;
        }
        Param param;
        param.name = p.next().text;
        if (!p.expect_punct(":")) break;
        if (p.peek().kind != Token::Kind::Ident) {
          p.error("expected parameter kind (u32 or ptr)");
          break;
        }
        std::string kind = p.next().text;
        if (kind == "u32") {
          param.kind = ParamKind::Scalar32;
        } else if (kind == "ptr") {
          param.kind = ParamKind::Pointer;
          if (p.peek().kind == Token::Kind::Ident) {
            std::string anno = p.next().text;
            if (anno == "user") {
              param.anno = PtrAnno::UserBuffer;
            } else if (anno == "ko") {
              param.anno = PtrAnno::KernelObject;
              if (!p.expect_punct(":")) break;
              if (p.peek().kind != Token::Kind::Ident) {
                p.error("expected type name after ko:");
                break;
              }
              param.object_type = p.next().text;
            } else {
              p.error("unknown pointer annotation '" + anno + "'");
              break;
            }
          }
        } else {
          p.error("unknown parameter kind '" + kind + "'");
          break;
        }
        builder.reg(param.name);
        builder.fn.params.push_back(std::move(param));
      }
      if (p.line_failed) continue;
      if (!p.expect_punct("{")) continue;
      p.expect_end();
      cur = std::move(builder);
      cur_block = nullptr;
      continue;
    }

    if (first.kind == Token::Kind::Punct && first.text == "}") {
      if (!cur) {
        p.error("'}' outside function");
        continue;
      }
      p.next();
      p.expect_end();
      finish_function(lineno);
      continue;
    }

    if (!cur) {
      p.error("expected 'const', 'fn' or end of file at top level");
      continue;
    }

    // block label:  label(%p: u32, ...):
    if (first.kind == Token::Kind::Ident && looks_like_block_label(p)) {
      BasicBlock block;
      block.label = p.next().text;
      block.line = lineno;
      if (p.accept_punct("(")) {
        bool first_bp = true;
        while (!p.accept_punct(")")) {
          if (!first_bp && !p.expect_punct(",")) break;
          first_bp = false;
          if (p.peek().kind != Token::Kind::Reg) {
            p.error("expected %param in block parameter list");
            break;
          }
          BlockParam bp;
          bp.name = p.next().text;
          if (!p.expect_punct(":")) break;
          if (p.peek().kind != Token::Kind::Ident) {
            p.error("expected block parameter kind");
            break;
          }
          std::string kind = p.next().text;
          if (kind == "u32") bp.kind = ParamKind::Scalar32;
          else if (kind == "ptr") bp.kind = ParamKind::Pointer;
          else {
            p.error("unknown block parameter kind '" + kind + "'");
            break;
          }
          bp.reg = cur->reg(bp.name);
          block.params.push_back(std::move(bp));
        }
      }
      if (p.line_failed) continue;
      if (!p.expect_punct(":")) continue;
      p.expect_end();
      for (const BasicBlock& b : cur->fn.blocks)
        if (b.label == block.label)
          diags.push_back({Severity::Error, lineno, first.column,
                           "duplicate block label '" + block.label + "'"});
      cur->fn.blocks.push_back(std::move(block));
      cur_block = &cur->fn.blocks.back();
      continue;
    }

    // instruction
    if (!cur_block) {
      p.error("instruction before first block label");
      continue;
    }
    if (!cur_block->instructions.empty() &&
        cur_block->instructions.back().is_terminator()) {
      p.error("instruction after block terminator");
      continue;
    }

    Instruction ins;
    ins.line = lineno;

    auto parse_operand = [&]() -> std::optional<Operand> {
      Operand op;
      const Token& t = p.peek();
      if (t.kind == Token::Kind::Reg) {
        op.kind = Operand::Kind::Reg;
        op.reg = cur->reg(p.next().text);
        return op;
      }
      if (t.kind == Token::Kind::Number) {
        op.kind = Operand::Kind::Imm;
        op.imm = p.next().number;
        return op;
      }
      if (t.kind == Token::Kind::Named) {
        op.kind = Operand::Kind::Named;
        op.name = p.next().text;
        return op;
      }
      p.error("expected operand (register, number or $constant)");
      return std::nullopt;
    };

    auto parse_target = [&]() -> std::optional<JumpTarget> {
      if (p.peek().kind != Token::Kind::Ident) {
        p.error("expected block label");
        return std::nullopt;
      }
      JumpTarget t;
      t.label = p.next().text;
      if (p.accept_punct("(")) {
        bool first_arg = true;
        while (!p.accept_punct(")")) {
          if (!first_arg && !p.expect_punct(",")) return std::nullopt;
          first_arg = false;
          auto op = parse_operand();
          if (!op) return std::nullopt;
          t.args.push_back(*op);
        }
      }
      return t;
    };

    if (first.kind == Token::Kind::Reg) {
      // %r = opcode ...
      ins.result = cur->reg(p.next().text);
      if (!p.expect_punct("=")) continue;
      if (p.peek().kind != Token::Kind::Ident) {
        p.error("expected opcode");
        continue;
      }
      std::string opname = p.next().text;
      auto binary = [&](Opcode oc) {
        ins.op = oc;
        auto a = parse_operand();
        if (!a) return;
        if (!p.expect_punct(",")) return;
        auto b = parse_operand();
        if (!b) return;
        ins.operands = {*a, *b};
      };
      if (opname == "const") {
        ins.op = Opcode::Const;
        auto a = parse_operand();
        if (!a) continue;
        if (a->kind == Operand::Kind::Reg) {
          p.error("const operand must be an immediate or $constant");
          continue;
        }
        ins.operands = {*a};
      } else if (opname == "add") binary(Opcode::Add);
      else if (opname == "sub") binary(Opcode::Sub);
      else if (opname == "and") binary(Opcode::And);
      else if (opname == "or") binary(Opcode::Or);
      else if (opname == "xor") binary(Opcode::Xor);
      else if (opname == "shl") binary(Opcode::Shl);
      else if (opname == "lshr") binary(Opcode::Lshr);
      else if (opname == "icmp.eq") binary(Opcode::IcmpEq);
      else if (opname == "icmp.ne") binary(Opcode::IcmpNe);
      else if (opname == "icmp.ult") binary(Opcode::IcmpUlt);
      else if (opname == "icmp.ule") binary(Opcode::IcmpUle);
      else if (opname == "icmp.slt") binary(Opcode::IcmpSlt);
      else if (opname == "icmp.sle") binary(Opcode::IcmpSle);
      else if (opname == "gep") binary(Opcode::Gep);
      else if (opname == "select") {
        ins.op = Opcode::Select;
        auto c = parse_operand();
        if (!c) continue;
        if (!p.expect_punct(",")) continue;
        auto a = parse_operand();
        if (!a) continue;
        if (!p.expect_punct(",")) continue;
        auto b = parse_operand();
        if (!b) continue;
        ins.operands = {*c, *a, *b};
      } else if (opname == "load.w" || opname == "load.b") {
        ins.op = Opcode::Load;
        ins.width = opname == "load.w" ? 32 : 8;
        auto a = parse_operand();
        if (!a) continue;
        ins.operands = {*a};
      } else {
        p.error("unknown opcode '" + opname + "'");
        continue;
      }
    } else if (first.kind == Token::Kind::Ident) {
      std::string opname = p.next().text;
      if (opname == "store.w" || opname == "store.b") {
        ins.op = Opcode::Store;
        ins.width = opname == "store.w" ? 32 : 8;
        auto a = parse_operand();
        if (!a) continue;
        if (!p.expect_punct(",")) continue;
        auto v = parse_operand();
        if (!v) continue;
        ins.operands = {*a, *v};
      } else if (opname == "call") {
        ins.op = Opcode::Call;
        if (p.peek().kind != Token::Kind::Func) {
          p.error("expected @callee");
          continue;
        }
        ins.callee = p.next().text;
        if (!p.expect_punct("(")) continue;
        bool first_arg = true;
        bool bad = false;
        while (!p.accept_punct(")")) {
          if (!first_arg && !p.expect_punct(",")) { bad = true; break; }
          first_arg = false;
          auto a = parse_operand();
          if (!a) { bad = true; break; }
          ins.operands.push_back(*a);
        }
        if (bad) continue;
      } else if (opname == "br") {
        ins.op = Opcode::Br;
        auto c = parse_operand();
        if (!c) continue;
        ins.operands = {*c};
        if (!p.expect_punct(",")) continue;
        auto t1 = parse_target();
        if (!t1) continue;
        if (!p.expect_punct(",")) {
          // forced by grammar: a br needs both then and else labels
          continue;
        }
        auto t2 = parse_target();
        if (!t2) continue;
        ins.targets = {*t1, *t2};
      } else if (opname == "jmp") {
        ins.op = Opcode::Jmp;
        auto t = parse_target();
        if (!t) continue;
        ins.targets = {*t};
      } else if (opname == "ret") {
        ins.op = Opcode::Ret;
      } else {
        p.error("unknown instruction '" + opname + "'");
        continue;
      }
    } else {
      p.error("expected instruction");
      continue;
    }
    if (p.line_failed) continue;
    p.expect_end();
    if (p.line_failed) continue;
    cur_block->instructions.push_back(std::move(ins));
  }

  if (cur) {
    diags.push_back({Severity::Error, lineno, 1,
                     "unterminated function @" + cur->fn.name + " (missing '}')"});
    finish_function(lineno);
  }

  bool has_error = std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
    return d.severity == Severity::Error;
  });
  if (!has_error) {
    // resolve jump targets
    for (Function& f : prog.functions) {
      for (BasicBlock& b : f.blocks) {
        for (Instruction& ins : b.instructions) {
          for (JumpTarget& t : ins.targets) t.block = f.block_index(t.label);
        }
      }
    }
    result.program = std::move(prog);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::vector<std::vector<int>> successors(const Function& f) {
  std::vector<std::vector<int>> succ(f.blocks.size());
  for (size_t i = 0; i < f.blocks.size(); i++) {
    if (f.blocks[i].instructions.empty()) continue;
    const Instruction& term = f.blocks[i].instructions.back();
    for (const JumpTarget& t : term.targets)
      if (t.block >= 0) succ[i].push_back(t.block);
  }
  return succ;
}

} // namespace

std::vector<std::vector<bool>> dominators(const Function& f) {
  size_t n = f.blocks.size();
  std::vector<std::vector<bool>> dom(n, std::vector<bool>(n, true));
  if (n == 0) return dom;
  std::vector<std::vector<int>> pred(n);
  auto succ = successors(f);
  for (size_t i = 0; i < n; i++)
    for (int s : succ[i]) pred[s].push_back(static_cast<int>(i));
  dom[0].assign(n, false);
  dom[0][0] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t b = 1; b < n; b++) {
      std::vector<bool> nd(n, true);
      if (pred[b].empty()) {
        nd.assign(n, false); // unreachable
      } else {
        for (int pr : pred[b])
          for (size_t k = 0; k < n; k++) nd[k] = nd[k] && dom[pr][k];
      }
      nd[b] = true;
      if (nd != dom[b]) {
        dom[b] = nd;
        changed = true;
      }
    }
  }
  return dom;
}

std::vector<Diagnostic> validate_program(const Program& p,
                                         const std::map<std::string, uint32_t>* extra_constants) {
  std::vector<Diagnostic> diags;
  auto err = [&](int line, const std::string& msg) {
    diags.push_back({Severity::Error, line, 1, msg});
  };

  std::map<std::string, int> fn_names;
  for (const Function& f : p.functions) {
    if (++fn_names[f.name] == 2)
      err(f.line, "duplicate function name @" + f.name);
  }

  auto const_known = [&](const std::string& name) {
    if (p.named_constants.count(name)) return true;
    return extra_constants && extra_constants->count(name) > 0;
  };

  for (const Function& f : p.functions) {
    if (f.blocks.empty()) {
      err(f.line, "function @" + f.name + " has no entry block");
      continue;
    }

    // terminator discipline
    for (const BasicBlock& b : f.blocks) {
      if (b.instructions.empty()) {
        err(b.line, "block '" + b.label + "' is empty");
        continue;
      }
      if (!b.instructions.back().is_terminator())
        err(b.instructions.back().line,
            "block '" + b.label + "' does not end in a terminator");
      for (size_t i = 0; i + 1 < b.instructions.size(); i++)
        if (b.instructions[i].is_terminator())
          err(b.instructions[i].line,
              "terminator before end of block '" + b.label + "'");
    }

    // jump resolution + block-parameter arity
    std::vector<bool> referenced(f.blocks.size(), false);
    for (const BasicBlock& b : f.blocks) {
      for (const Instruction& ins : b.instructions) {
        for (const JumpTarget& t : ins.targets) {
          int idx = t.block >= 0 ? t.block : f.block_index(t.label);
          if (idx < 0) {
            err(ins.line, "jump to undefined label '" + t.label + "'");
            continue;
          }
          referenced[idx] = true;
          const BasicBlock& target = f.blocks[idx];
          if (t.args.size() != target.params.size())
            err(ins.line, "jump to '" + t.label + "' passes " +
                              std::to_string(t.args.size()) + " arguments, block expects " +
                              std::to_string(target.params.size()));
        }
        if (ins.op == Opcode::Call) {
          if (!is_intrinsic(ins.callee) && !p.function(ins.callee))
            err(ins.line, "call target @" + ins.callee +
                              " is neither a function nor a declared intrinsic");
          if (ins.callee == "memzero" && ins.operands.size() != 2)
            err(ins.line, "memzero takes (ptr, len)");
          if (ins.callee == "assume_user_buffer" && ins.operands.size() != 1)
            err(ins.line, "assume_user_buffer takes (ptr)");
        }
        for (const Operand& op : ins.operands)
          if (op.kind == Operand::Kind::Named && !const_known(op.name))
            err(ins.line, "undefined named constant $" + op.name);
        for (const JumpTarget& t : ins.targets)
          for (const Operand& op : t.args)
            if (op.kind == Operand::Kind::Named && !const_known(op.name))
              err(ins.line, "undefined named constant $" + op.name);
      }
    }
    for (size_t i = 1; i < f.blocks.size(); i++)
      if (!referenced[i])
        err(f.blocks[i].line, "unreferenced block label '" + f.blocks[i].label + "'");

    // single assignment + def-before-use along every path (via dominance)
    std::vector<int> def_block(f.registers.size(), -1);
    std::vector<int> def_count(f.registers.size(), 0);
    std::vector<int> def_pos(f.registers.size(), -1); // instruction index in block
    for (size_t pi = 0; pi < f.params.size(); pi++) {
      // parameters are defined at function entry
      for (size_t r = 0; r < f.registers.size(); r++)
        if (f.registers[r] == f.params[pi].name) {
          def_block[r] = 0;
          def_pos[r] = -1;
          def_count[r]++;
        }
    }
    for (size_t bi = 0; bi < f.blocks.size(); bi++) {
      for (const BlockParam& bp : f.blocks[bi].params) {
        if (bp.reg >= 0) {
          def_count[bp.reg]++;
          def_block[bp.reg] = static_cast<int>(bi);
          def_pos[bp.reg] = -1;
          if (def_count[bp.reg] > 1)
            err(f.blocks[bi].line, "register %" + bp.name + " defined more than once");
        }
      }
      for (size_t ii = 0; ii < f.blocks[bi].instructions.size(); ii++) {
        const Instruction& ins = f.blocks[bi].instructions[ii];
        if (ins.result >= 0) {
          def_count[ins.result]++;
          if (def_count[ins.result] > 1)
            err(ins.line,
                "register %" + f.registers[ins.result] + " defined more than once");
          def_block[ins.result] = static_cast<int>(bi);
          def_pos[ins.result] = static_cast<int>(ii);
        }
      }
    }
    auto dom = dominators(f);
    auto check_use = [&](int reg, int bi, int ii, int line) {
      if (reg < 0) return;
      if (def_count[reg] == 0) {
        err(line, "use of undefined register %" + f.registers[reg]);
        return;
      }
      int db = def_block[reg];
      if (db == bi) {
        if (def_pos[reg] >= ii)
          err(line, "register %" + f.registers[reg] + " used before its definition");
      } else if (db < 0 || !dom[bi][db]) {
        err(line, "register %" + f.registers[reg] +
                      " is not defined on every path to its use");
      }
    };
    for (size_t bi = 0; bi < f.blocks.size(); bi++) {
      for (size_t ii = 0; ii < f.blocks[bi].instructions.size(); ii++) {
        const Instruction& ins = f.blocks[bi].instructions[ii];
        for (const Operand& op : ins.operands)
          if (op.kind == Operand::Kind::Reg)
            check_use(op.reg, static_cast<int>(bi), static_cast<int>(ii), ins.line);
        for (const JumpTarget& t : ins.targets)
          for (const Operand& op : t.args)
            if (op.kind == Operand::Kind::Reg)
              check_use(op.reg, static_cast<int>(bi), static_cast<int>(ii), ins.line);
      }
    }

    // pointer-kind discipline: load/store addresses and gep bases
    enum class RKind { Unknown, Word, Ptr, Bool };
    std::vector<RKind> kinds(f.registers.size(), RKind::Unknown);
    for (const Param& param : f.params)
      for (size_t r = 0; r < f.registers.size(); r++)
        if (f.registers[r] == param.name)
          kinds[r] = param.kind == ParamKind::Pointer ? RKind::Ptr : RKind::Word;
    for (const BasicBlock& b : f.blocks)
      for (const BlockParam& bp : b.params)
        if (bp.reg >= 0)
          kinds[bp.reg] = bp.kind == ParamKind::Pointer ? RKind::Ptr : RKind::Word;
    for (const BasicBlock& b : f.blocks) {
      for (const Instruction& ins : b.instructions) {
        if (ins.result < 0) continue;
        switch (ins.op) {
        case Opcode::Gep: kinds[ins.result] = RKind::Ptr; break;
        case Opcode::IcmpEq:
        case Opcode::IcmpNe:
        case Opcode::IcmpUlt:
        case Opcode::IcmpUle:
        case Opcode::IcmpSlt:
        case Opcode::IcmpSle: kinds[ins.result] = RKind::Bool; break;
        case Opcode::Select: {
          const Operand& arm = ins.operands.size() == 3 ? ins.operands[1] : Operand{};
          kinds[ins.result] = arm.kind == Operand::Kind::Reg && kinds[arm.reg] == RKind::Ptr
                                  ? RKind::Ptr
                                  : RKind::Word;
          break;
        }
        default: kinds[ins.result] = RKind::Word; break;
        }
      }
    }
    auto is_ptr_operand = [&](const Operand& op) {
      return op.kind == Operand::Kind::Reg && kinds[op.reg] == RKind::Ptr;
    };
    for (const BasicBlock& b : f.blocks) {
      for (const Instruction& ins : b.instructions) {
        if (ins.op == Opcode::Load && !is_ptr_operand(ins.operands[0]))
          err(ins.line, "load address is not pointer-kinded (gep it first)");
        if (ins.op == Opcode::Store && !is_ptr_operand(ins.operands[0]))
          err(ins.line, "store address is not pointer-kinded (gep it first)");
        if (ins.op == Opcode::Br && ins.operands[0].kind == Operand::Kind::Reg &&
            kinds[ins.operands[0].reg] == RKind::Ptr)
          err(ins.line, "branch condition must be a comparison result");
      }
    }
  }
  return diags;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

std::string fmt_num(uint32_t v) {
  if (v < 256) return std::to_string(v);
  std::ostringstream os;
  os << "0x" << std::hex << std::uppercase << v;
  return os.str();
}

std::string fmt_operand(const Function& f, const Operand& op) {
  switch (op.kind) {
  case Operand::Kind::Reg: return "%" + f.registers[op.reg];
  case Operand::Kind::Imm: return fmt_num(op.imm);
  case Operand::Kind::Named: return "$" + op.name;
  }
  return "?";
}

std::string fmt_target(const Function& f, const JumpTarget& t) {
  std::string s = t.label;
  if (!t.args.empty()) {
    s += "(";
    for (size_t i = 0; i < t.args.size(); i++) {
      if (i) s += ", ";
      s += fmt_operand(f, t.args[i]);
    }
    s += ")";
  }
  return s;
}

const char* icmp_suffix(Opcode op) {
  switch (op) {
  case Opcode::IcmpEq: return "eq";
  case Opcode::IcmpNe: return "ne";
  case Opcode::IcmpUlt: return "ult";
  case Opcode::IcmpUle: return "ule";
  case Opcode::IcmpSlt: return "slt";
  case Opcode::IcmpSle: return "sle";
  default: return "?";
  }
}

} // namespace

std::string pretty_print(const Program& p) {
  std::ostringstream os;
  for (const auto& [name, value] : p.named_constants)
    os << "const $" << name << " = " << fmt_num(value) << "\n";
  if (!p.named_constants.empty()) os << "\n";
  for (const Function& f : p.functions) {
    os << "fn @" << f.name << "(";
    for (size_t i = 0; i < f.params.size(); i++) {
      if (i) os << ", ";
      const Param& pr = f.params[i];
      os << "%" << pr.name << ": ";
      if (pr.kind == ParamKind::Scalar32) os << "u32";
      else {
        os << "ptr";
        if (pr.anno == PtrAnno::UserBuffer) os << " user";
        if (pr.anno == PtrAnno::KernelObject) os << " ko:" << pr.object_type;
      }
    }
    os << ") {\n";
    for (const BasicBlock& b : f.blocks) {
      os << b.label;
      if (!b.params.empty()) {
        os << "(";
        for (size_t i = 0; i < b.params.size(); i++) {
          if (i) os << ", ";
          os << "%" << b.params[i].name << ": "
             << (b.params[i].kind == ParamKind::Pointer ? "ptr" : "u32");
        }
        os << ")";
      }
      os << ":\n";
      for (const Instruction& ins : b.instructions) {
        os << "  ";
        switch (ins.op) {
        case Opcode::Const:
          os << "%" << f.registers[ins.result] << " = const "
             << fmt_operand(f, ins.operands[0]);
          break;
        case Opcode::Add:
        case Opcode::Sub:
        case Opcode::And:
        case Opcode::Or:
        case Opcode::Xor:
        case Opcode::Shl:
        case Opcode::Lshr: {
          static const std::map<Opcode, std::string> names = {
              {Opcode::Add, "add"},  {Opcode::Sub, "sub"}, {Opcode::And, "and"},
              {Opcode::Or, "or"},    {Opcode::Xor, "xor"}, {Opcode::Shl, "shl"},
              {Opcode::Lshr, "lshr"}};
          os << "%" << f.registers[ins.result] << " = " << names.at(ins.op) << " "
             << fmt_operand(f, ins.operands[0]) << ", " << fmt_operand(f, ins.operands[1]);
          break;
        }
        case Opcode::IcmpEq:
        case Opcode::IcmpNe:
        case Opcode::IcmpUlt:
        case Opcode::IcmpUle:
        case Opcode::IcmpSlt:
        case Opcode::IcmpSle:
          os << "%" << f.registers[ins.result] << " = icmp." << icmp_suffix(ins.op) << " "
             << fmt_operand(f, ins.operands[0]) << ", " << fmt_operand(f, ins.operands[1]);
          break;
        case Opcode::Select:
          os << "%" << f.registers[ins.result] << " = select "
             << fmt_operand(f, ins.operands[0]) << ", " << fmt_operand(f, ins.operands[1])
             << ", " << fmt_operand(f, ins.operands[2]);
          break;
        case Opcode::Load:
          os << "%" << f.registers[ins.result] << " = load."
             << (ins.width == 32 ? "w" : "b") << " " << fmt_operand(f, ins.operands[0]);
          break;
        case Opcode::Store:
          os << "store." << (ins.width == 32 ? "w" : "b") << " "
             << fmt_operand(f, ins.operands[0]) << ", " << fmt_operand(f, ins.operands[1]);
          break;
        case Opcode::Gep:
          os << "%" << f.registers[ins.result] << " = gep "
             << fmt_operand(f, ins.operands[0]) << ", " << fmt_operand(f, ins.operands[1]);
          break;
        case Opcode::Call: {
          os << "call @" << ins.callee << "(";
          for (size_t i = 0; i < ins.operands.size(); i++) {
            if (i) os << ", ";
            os << fmt_operand(f, ins.operands[i]);
          }
          os << ")";
          break;
        }
        case Opcode::Br:
          os << "br " << fmt_operand(f, ins.operands[0]) << ", "
             << fmt_target(f, ins.targets[0]) << ", " << fmt_target(f, ins.targets[1]);
          break;
        case Opcode::Jmp:
          os << "jmp " << fmt_target(f, ins.targets[0]);
          break;
        case Opcode::Ret:
          os << "ret";
          break;
        }
        os << "\n";
      }
    }
    os << "}\n\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Structural equality

namespace {

bool operand_equal(const Function& fa, const Operand& a, const Function& fb,
                   const Operand& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
  case Operand::Kind::Reg: return fa.registers[a.reg] == fb.registers[b.reg];
  case Operand::Kind::Imm: return a.imm == b.imm;
  case Operand::Kind::Named: return a.name == b.name;
  }
  return false;
}

} // namespace

bool structurally_equal(const Program& pa, const Program& pb) {
  if (pa.named_constants != pb.named_constants) return false;
  if (pa.functions.size() != pb.functions.size()) return false;
  for (size_t fi = 0; fi < pa.functions.size(); fi++) {
    const Function& fa = pa.functions[fi];
    const Function& fb = pb.functions[fi];
    if (fa.name != fb.name || fa.params.size() != fb.params.size() ||
        fa.blocks.size() != fb.blocks.size())
      return false;
    for (size_t i = 0; i < fa.params.size(); i++) {
      const Param& a = fa.params[i];
      const Param& b = fb.params[i];
      if (a.name != b.name || a.kind != b.kind || a.anno != b.anno ||
          a.object_type != b.object_type)
        return false;
    }
    for (size_t bi = 0; bi < fa.blocks.size(); bi++) {
      const BasicBlock& ba = fa.blocks[bi];
      const BasicBlock& bb = fb.blocks[bi];
      if (ba.label != bb.label || ba.params.size() != bb.params.size() ||
          ba.instructions.size() != bb.instructions.size())
        return false;
      for (size_t i = 0; i < ba.params.size(); i++)
        if (ba.params[i].name != bb.params[i].name || ba.params[i].kind != bb.params[i].kind)
          return false;
      for (size_t i = 0; i < ba.instructions.size(); i++) {
        const Instruction& ia = ba.instructions[i];
        const Instruction& ib = bb.instructions[i];
        if (ia.op != ib.op || ia.width != ib.width || ia.callee != ib.callee ||
            ia.operands.size() != ib.operands.size() || ia.targets.size() != ib.targets.size())
          return false;
        if ((ia.result >= 0) != (ib.result >= 0)) return false;
        if (ia.result >= 0 && fa.registers[ia.result] != fb.registers[ib.result])
          return false;
        for (size_t k = 0; k < ia.operands.size(); k++)
          if (!operand_equal(fa, ia.operands[k], fb, ib.operands[k])) return false;
        for (size_t k = 0; k < ia.targets.size(); k++) {
          if (ia.targets[k].label != ib.targets[k].label) return false;
          if (ia.targets[k].args.size() != ib.targets[k].args.size()) return false;
          for (size_t m = 0; m < ia.targets[k].args.size(); m++)
            if (!operand_equal(fa, ia.targets[k].args[m], fb, ib.targets[k].args[m]))
              return false;
        }
      }
    }
  }
  return true;
}

} // namespace kom::ir
