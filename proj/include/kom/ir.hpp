#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace kom::ir {

// Compact, line-oriented IR for modeled system calls. One instruction per
// line, `%name` registers, `@name` functions, `$NAME` named constants, `#`
// comments. Grammar in docs/ir.md.

enum class Severity { Error, Warning };

struct Diagnostic {
  Severity severity = Severity::Error;
  int line = 0;
  int column = 0;
  std::string message;
  std::string to_string(const std::string& file = "") const;
};

enum class ParamKind { Scalar32, Pointer };
enum class PtrAnno { None, KernelObject, UserBuffer };

struct Param {
  std::string name;
  ParamKind kind = ParamKind::Scalar32;
  PtrAnno anno = PtrAnno::None;
  std::string object_type; // for kernel-object annotations
};

enum class Opcode {
  Const,
  Add,
  Sub,
  And,
  Or,
  Xor,
  Shl,
  Lshr,
  IcmpEq,
  IcmpNe,
  IcmpUlt,
  IcmpUle,
  IcmpSlt,
  IcmpSle,
  Select,
  Load,
  Store,
  Gep,
  Call,
  Br,
  Jmp,
  Ret,
};

struct Operand {
  enum class Kind { Reg, Imm, Named } kind = Kind::Imm;
  int reg = -1;
  uint32_t imm = 0;
  std::string name; // named constant
};

struct JumpTarget {
  std::string label;
  int block = -1; // resolved index
  std::vector<Operand> args;
};

struct Instruction {
  Opcode op = Opcode::Ret;
  int width = 32; // load/store: 8 or 32
  int result = -1;
  std::vector<Operand> operands;
  std::string callee;          // call
  std::vector<JumpTarget> targets; // br: [then, else]; jmp: [target]
  int line = 0;

  bool is_terminator() const {
    return op == Opcode::Br || op == Opcode::Jmp || op == Opcode::Ret;
  }
};

struct BlockParam {
  std::string name;
  int reg = -1;
  ParamKind kind = ParamKind::Scalar32;
};

struct BasicBlock {
  std::string label;
  std::vector<BlockParam> params;
  std::vector<Instruction> instructions;
  int line = 0;
};

struct Function {
  std::string name;
  std::vector<Param> params;
  std::vector<BasicBlock> blocks; // blocks[0] is the entry
  std::vector<std::string> registers; // reg id -> name
  int line = 0;

  int block_index(const std::string& label) const;
};

struct Program {
  std::vector<Function> functions;
  std::map<std::string, uint32_t> named_constants;
  std::string source_name;

  const Function* function(const std::string& name) const;
};

bool structurally_equal(const Program& a, const Program& b);

struct ParseResult {
  std::optional<Program> program;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return program.has_value(); }
};

// Total: malformed input yields diagnostics, never aborts.
ParseResult parse_program(const std::string& text, const std::string& source_name = "");

// Structural invariant checks for a parsed (or built) program. The optional
// extra constant map supplies manifest-level constants for resolution checks.
std::vector<Diagnostic> validate_program(const Program& p,
                                         const std::map<std::string, uint32_t>* extra_constants = nullptr);

std::string pretty_print(const Program& p);

// Dominator computation over a function's block graph, exposed because the
// executor reuses it for back-edge detection. dom[b] = bitset of blocks that
// dominate b (as indices into blocks).
std::vector<std::vector<bool>> dominators(const Function& f);

bool is_intrinsic(const std::string& name);

} // namespace kom::ir
