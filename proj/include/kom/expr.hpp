#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace kom {

// 32-bit bitvector expression trees. Widths are 1 (booleans), 8 (memory
// cells) and 32 (words). Nodes are immutable and hash-consed; Expr values
// are plain pointers owned by their ExprPool.

enum class ExprOp : uint8_t {
  Const,
  Symbol,
  Add,
  Sub,
  And,
  Or,
  Xor,
  Shl,
  Lshr,
  Eq,
  Ult,
  Slt,
  Not,
  Ite,
  ZExt,     // 8 -> 32
  Extract,  // 32 -> 8, byte index in `aux`
};

enum class SymbolOrigin : uint8_t {
  Param,       // function parameter, aux = param index
  MemCell,     // fresh under-constrained read, object() + offset()
  ObjectBase,  // base address of a symbolic object
  Free,        // solver scripts / tests
};

struct SymbolInfo {
  uint32_t id = 0;
  uint8_t width = 32;
  SymbolOrigin origin = SymbolOrigin::Free;
  std::string name;
  uint32_t object_id = 0;   // MemCell / ObjectBase
  uint32_t offset = 0;      // MemCell
  uint32_t param_index = 0; // Param
  bool param_derived = false;
  bool kernel_cell = false; // read from a kernel-object-tainted object
};

struct ExprNode {
  ExprOp op;
  uint8_t width;
  uint32_t value = 0; // Const payload or Symbol id
  uint32_t aux = 0;   // Extract byte index
  const ExprNode* a = nullptr;
  const ExprNode* b = nullptr;
  const ExprNode* c = nullptr;

  bool is_const() const { return op == ExprOp::Const; }
  bool is_symbol() const { return op == ExprOp::Symbol; }
};

using Expr = const ExprNode*;

// Abstract value for known-bits reasoning: bit i is known iff mask bit i is
// set, in which case its value is the corresponding bit of `bits`.
struct KnownBits {
  uint32_t mask = 0;
  uint32_t bits = 0;
  uint32_t umin() const { return bits & mask; }
  uint32_t umax(uint32_t width_mask) const { return (bits & mask) | (width_mask & ~mask); }
};

class ExprPool {
public:
  ExprPool();
  ~ExprPool();
  ExprPool(const ExprPool&) = delete;
  ExprPool& operator=(const ExprPool&) = delete;

  Expr constant(uint32_t value, int width);
  Expr bool_const(bool v) { return constant(v ? 1 : 0, 1); }

  uint32_t fresh_symbol(SymbolInfo info); // returns id
  Expr symbol_expr(uint32_t id);
  const SymbolInfo& symbol(uint32_t id) const;
  size_t symbol_count() const;

  // Binary/unary builders. All apply local simplification; the results are
  // canonical enough that structural equality doubles as cheap semantic
  // equality for the common identities.
  Expr add(Expr a, Expr b);
  Expr sub(Expr a, Expr b);
  Expr band(Expr a, Expr b);
  Expr bor(Expr a, Expr b);
  Expr bxor(Expr a, Expr b);
  Expr shl(Expr a, Expr b);
  Expr lshr(Expr a, Expr b);
  Expr eq(Expr a, Expr b);
  Expr ne(Expr a, Expr b) { return lnot(eq(a, b)); }
  Expr ult(Expr a, Expr b);
  Expr ule(Expr a, Expr b) { return lnot(ult(b, a)); }
  Expr slt(Expr a, Expr b);
  Expr sle(Expr a, Expr b) { return lnot(slt(b, a)); }
  Expr lnot(Expr a);
  Expr ite(Expr cond, Expr then_e, Expr else_e);
  Expr zext(Expr a);                // 8 -> 32
  Expr extract_byte(Expr a, int k); // byte k of a 32-bit expr

  // Rebuilds an arbitrary tree through the simplifying constructors.
  Expr simplify(Expr e);

  // Concrete evaluation under a model mapping symbol id -> value.
  // Unmapped symbols evaluate to 0.
  uint32_t eval(Expr e, const std::map<uint32_t, uint32_t>& model) const;

  // Known-bits under a partial model (symbol id -> fully known value).
  KnownBits known_bits(Expr e, const std::map<uint32_t, uint32_t>& partial) const;

  // Replaces bound symbols by constants and re-simplifies.
  Expr substitute(Expr e, const std::map<uint32_t, uint32_t>& bindings);

  void collect_symbols(Expr e, std::vector<uint32_t>& out) const;

  std::string to_string(Expr e) const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  Expr intern(ExprNode n);
};

uint32_t width_mask(int width);

} // namespace kom
