#include "kom/expr.hpp"

#include <cassert>
#include <deque>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace kom {

uint32_t width_mask(int width) {
  switch (width) {
  case 1: return 1u;
  case 8: return 0xFFu;
  case 32: return 0xFFFFFFFFu;
  default: throw std::logic_error("bad expr width");
  }
}

namespace {

struct NodeKey {
  ExprOp op;
  uint8_t width;
  uint32_t value, aux;
  Expr a, b, c;
  bool operator==(const NodeKey& o) const {
    return op == o.op && width == o.width && value == o.value && aux == o.aux &&
           a == o.a && b == o.b && c == o.c;
  }
};

struct NodeKeyHash {
  size_t operator()(const NodeKey& k) const {
    size_t h = static_cast<size_t>(k.op) * 0x9E3779B97F4A7C15ull;
    auto mix = [&h](size_t v) { h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2); };
    mix(k.width);
    mix(k.value);
    mix(k.aux);
    mix(reinterpret_cast<size_t>(k.a));
    mix(reinterpret_cast<size_t>(k.b));
    mix(reinterpret_cast<size_t>(k.c));
    return h;
  }
};

} // namespace

struct ExprPool::Impl {
  std::mutex mu;
  std::deque<ExprNode> nodes;
  std::unordered_map<NodeKey, Expr, NodeKeyHash> interned;
  std::deque<SymbolInfo> symbols;
};

ExprPool::ExprPool() : impl_(new Impl) {}
ExprPool::~ExprPool() = default;

Expr ExprPool::intern(ExprNode n) {
  NodeKey key{n.op, n.width, n.value, n.aux, n.a, n.b, n.c};
  std::lock_guard<std::mutex> lock(impl_->mu);
  auto it = impl_->interned.find(key);
  if (it != impl_->interned.end())
    return it->second;
  impl_->nodes.push_back(n);
  Expr e = &impl_->nodes.back();
  impl_->interned.emplace(key, e);
  return e;
}

Expr ExprPool::constant(uint32_t value, int width) {
  ExprNode n;
  n.op = ExprOp::Const;
  n.width = static_cast<uint8_t>(width);
  n.value = value & width_mask(width);
  return intern(n);
}

uint32_t ExprPool::fresh_symbol(SymbolInfo info) {
  std::lock_guard<std::mutex> lock(impl_->mu);
  info.id = static_cast<uint32_t>(impl_->symbols.size());
  impl_->symbols.push_back(info);
  return info.id;
}

Expr ExprPool::symbol_expr(uint32_t id) {
  ExprNode n;
  n.op = ExprOp::Symbol;
  n.width = symbol(id).width;
  n.value = id;
  return intern(n);
}

const SymbolInfo& ExprPool::symbol(uint32_t id) const {
  return impl_->symbols.at(id);
}

size_t ExprPool::symbol_count() const {
  std::lock_guard<std::mutex> lock(impl_->mu);
  return impl_->symbols.size();
}

namespace {
bool const_val(Expr e, uint32_t& out) {
  if (e->op == ExprOp::Const) {
    out = e->value;
    return true;
  }
  return false;
}
} // namespace

Expr ExprPool::add(Expr a, Expr b) {
  uint32_t ca, cb;
  bool ka = const_val(a, ca), kb = const_val(b, cb);
  uint32_t wm = width_mask(a->width);
  if (ka && kb) return constant((ca + cb) & wm, a->width);
  if (ka && ca == 0) return b;
  if (kb && cb == 0) return a;
  // (x + c1) + c2 -> x + (c1+c2)
  if (kb && a->op == ExprOp::Add && a->b->op == ExprOp::Const)
    return add(a->a, constant((a->b->value + cb) & wm, a->width));
  // canonical order: constants on the right
  if (ka) std::swap(a, b);
  ExprNode n;
  n.op = ExprOp::Add;
  n.width = a->width;
  n.a = a;
  n.b = b;
  return intern(n);
}

Expr ExprPool::sub(Expr a, Expr b) {
  uint32_t ca, cb;
  uint32_t wm = width_mask(a->width);
  if (const_val(a, ca) && const_val(b, cb)) return constant((ca - cb) & wm, a->width);
  if (const_val(b, cb)) return add(a, constant((0u - cb) & wm, a->width));
  if (a == b) return constant(0, a->width);
  ExprNode n;
  n.op = ExprOp::Sub;
  n.width = a->width;
  n.a = a;
  n.b = b;
  return intern(n);
}

Expr ExprPool::band(Expr a, Expr b) {
  uint32_t ca, cb;
  bool ka = const_val(a, ca), kb = const_val(b, cb);
  uint32_t wm = width_mask(a->width);
  if (ka && kb) return constant(ca & cb, a->width);
  if (ka) { std::swap(a, b); std::swap(ka, kb); std::swap(ca, cb); }
  if (kb && cb == 0) return constant(0, a->width);
  if (kb && cb == wm) return a;
  if (a == b) return a;
  ExprNode n;
  n.op = ExprOp::And;
  n.width = a->width;
  n.a = a;
  n.b = b;
  return intern(n);
}

Expr ExprPool::bor(Expr a, Expr b) {
  uint32_t ca, cb;
  bool ka = const_val(a, ca), kb = const_val(b, cb);
  uint32_t wm = width_mask(a->width);
  if (ka && kb) return constant(ca | cb, a->width);
  if (ka) { std::swap(a, b); std::swap(ka, kb); std::swap(ca, cb); }
  if (kb && cb == 0) return a;
  if (kb && cb == wm) return constant(wm, a->width);
  if (a == b) return a;
  ExprNode n;
  n.op = ExprOp::Or;
  n.width = a->width;
  n.a = a;
  n.b = b;
  return intern(n);
}

Expr ExprPool::bxor(Expr a, Expr b) {
  uint32_t ca, cb;
  bool ka = const_val(a, ca), kb = const_val(b, cb);
  if (ka && kb) return constant(ca ^ cb, a->width);
  if (ka) { std::swap(a, b); std::swap(ka, kb); std::swap(ca, cb); }
  if (kb && cb == 0) return a;
  if (a == b) return constant(0, a->width);
  ExprNode n;
  n.op = ExprOp::Xor;
  n.width = a->width;
  n.a = a;
  n.b = b;
  return intern(n);
}

Expr ExprPool::shl(Expr a, Expr b) {
  uint32_t ca, cb;
  if (const_val(b, cb)) {
    if (cb == 0) return a;
    if (cb >= 32) return constant(0, a->width);
    if (const_val(a, ca)) return constant((ca << cb) & width_mask(a->width), a->width);
  }
  ExprNode n;
  n.op = ExprOp::Shl;
  n.width = a->width;
  n.a = a;
  n.b = b;
  return intern(n);
}

Expr ExprPool::lshr(Expr a, Expr b) {
  uint32_t ca, cb;
  if (const_val(b, cb)) {
    if (cb == 0) return a;
    if (cb >= 32) return constant(0, a->width);
    if (const_val(a, ca)) return constant(ca >> cb, a->width);
  }
  ExprNode n;
  n.op = ExprOp::Lshr;
  n.width = a->width;
  n.a = a;
  n.b = b;
  return intern(n);
}

Expr ExprPool::eq(Expr a, Expr b) {
  uint32_t ca, cb;
  if (const_val(a, ca) && const_val(b, cb)) return bool_const(ca == cb);
  if (a == b) return bool_const(true);
  if (a->width == 1) {
    // (c == true) -> c, (c == false) -> !c
    if (const_val(b, cb)) return cb ? a : lnot(a);
    if (const_val(a, ca)) return ca ? b : lnot(b);
  }
  if (const_val(a, ca)) std::swap(a, b);
  ExprNode n;
  n.op = ExprOp::Eq;
  n.width = 1;
  n.a = a;
  n.b = b;
  return intern(n);
}

Expr ExprPool::ult(Expr a, Expr b) {
  uint32_t ca, cb;
  if (const_val(a, ca) && const_val(b, cb)) return bool_const(ca < cb);
  if (a == b) return bool_const(false);
  if (const_val(b, cb) && cb == 0) return bool_const(false);
  ExprNode n;
  n.op = ExprOp::Ult;
  n.width = 1;
  n.a = a;
  n.b = b;
  return intern(n);
}

Expr ExprPool::slt(Expr a, Expr b) {
  uint32_t ca, cb;
  if (const_val(a, ca) && const_val(b, cb))
    return bool_const(static_cast<int32_t>(ca) < static_cast<int32_t>(cb));
  if (a == b) return bool_const(false);
  ExprNode n;
  n.op = ExprOp::Slt;
  n.width = 1;
  n.a = a;
  n.b = b;
  return intern(n);
}

Expr ExprPool::lnot(Expr a) {
  uint32_t ca;
  if (const_val(a, ca)) return bool_const(ca == 0);
  if (a->op == ExprOp::Not) return a->a;
  ExprNode n;
  n.op = ExprOp::Not;
  n.width = 1;
  n.a = a;
  return intern(n);
}

Expr ExprPool::ite(Expr cond, Expr then_e, Expr else_e) {
  uint32_t cc;
  if (const_val(cond, cc)) return cc ? then_e : else_e;
  if (then_e == else_e) return then_e;
  ExprNode n;
  n.op = ExprOp::Ite;
  n.width = then_e->width;
  n.a = cond;
  n.b = then_e;
  n.c = else_e;
  return intern(n);
}

Expr ExprPool::zext(Expr a) {
  uint32_t ca;
  if (const_val(a, ca)) return constant(ca, 32);
  if (a->op == ExprOp::Extract && a->aux == 0) {
    // zext(extract0(e)) == e & 0xFF
    return band(a->a, constant(0xFF, 32));
  }
  ExprNode n;
  n.op = ExprOp::ZExt;
  n.width = 32;
  n.a = a;
  return intern(n);
}

Expr ExprPool::extract_byte(Expr a, int k) {
  uint32_t ca;
  if (const_val(a, ca)) return constant((ca >> (8 * k)) & 0xFF, 8);
  ExprNode n;
  n.op = ExprOp::Extract;
  n.width = 8;
  n.aux = static_cast<uint32_t>(k);
  n.a = a;
  return intern(n);
}

Expr ExprPool::simplify(Expr e) {
  switch (e->op) {
  case ExprOp::Const:
  case ExprOp::Symbol:
    return e;
  case ExprOp::Add: return add(simplify(e->a), simplify(e->b));
  case ExprOp::Sub: return sub(simplify(e->a), simplify(e->b));
  case ExprOp::And: return band(simplify(e->a), simplify(e->b));
  case ExprOp::Or: return bor(simplify(e->a), simplify(e->b));
  case ExprOp::Xor: return bxor(simplify(e->a), simplify(e->b));
  case ExprOp::Shl: return shl(simplify(e->a), simplify(e->b));
  case ExprOp::Lshr: return lshr(simplify(e->a), simplify(e->b));
  case ExprOp::Eq: return eq(simplify(e->a), simplify(e->b));
  case ExprOp::Ult: return ult(simplify(e->a), simplify(e->b));
  case ExprOp::Slt: return slt(simplify(e->a), simplify(e->b));
  case ExprOp::Not: return lnot(simplify(e->a));
  case ExprOp::Ite: return ite(simplify(e->a), simplify(e->b), simplify(e->c));
  case ExprOp::ZExt: return zext(simplify(e->a));
  case ExprOp::Extract: return extract_byte(simplify(e->a), static_cast<int>(e->aux));
  }
  return e;
}

uint32_t ExprPool::eval(Expr e, const std::map<uint32_t, uint32_t>& model) const {
  std::unordered_map<Expr, uint32_t> memo;
  std::function<uint32_t(Expr)> go = [&](Expr x) -> uint32_t {
    auto it = memo.find(x);
    if (it != memo.end()) return it->second;
    uint32_t r = 0;
    uint32_t wm = width_mask(x->width);
    switch (x->op) {
    case ExprOp::Const: r = x->value; break;
    case ExprOp::Symbol: {
      auto mit = model.find(x->value);
      r = (mit == model.end() ? 0u : mit->second) & wm;
      break;
    }
    case ExprOp::Add: r = (go(x->a) + go(x->b)) & wm; break;
    case ExprOp::Sub: r = (go(x->a) - go(x->b)) & wm; break;
    case ExprOp::And: r = go(x->a) & go(x->b); break;
    case ExprOp::Or: r = go(x->a) | go(x->b); break;
    case ExprOp::Xor: r = go(x->a) ^ go(x->b); break;
    case ExprOp::Shl: {
      uint32_t s = go(x->b);
      r = s >= 32 ? 0 : (go(x->a) << s) & wm;
      break;
    }
    case ExprOp::Lshr: {
      uint32_t s = go(x->b);
      r = s >= 32 ? 0 : go(x->a) >> s;
      break;
    }
    case ExprOp::Eq: r = go(x->a) == go(x->b) ? 1 : 0; break;
    case ExprOp::Ult: r = go(x->a) < go(x->b) ? 1 : 0; break;
    case ExprOp::Slt:
      r = static_cast<int32_t>(go(x->a)) < static_cast<int32_t>(go(x->b)) ? 1 : 0;
      break;
    case ExprOp::Not: r = go(x->a) == 0 ? 1 : 0; break;
    case ExprOp::Ite: r = go(x->a) ? go(x->b) : go(x->c); break;
    case ExprOp::ZExt: r = go(x->a); break;
    case ExprOp::Extract: r = (go(x->a) >> (8 * x->aux)) & 0xFF; break;
    }
    memo.emplace(x, r);
    return r;
  };
  return go(e);
}

KnownBits ExprPool::known_bits(Expr e, const std::map<uint32_t, uint32_t>& partial) const {
  std::unordered_map<Expr, KnownBits> memo;
  std::function<KnownBits(Expr)> go = [&](Expr x) -> KnownBits {
    auto it = memo.find(x);
    if (it != memo.end()) return it->second;
    KnownBits r;
    uint32_t wm = width_mask(x->width);
    switch (x->op) {
    case ExprOp::Const: r = {wm, x->value}; break;
    case ExprOp::Symbol: {
      auto mit = partial.find(x->value);
      if (mit != partial.end()) r = {wm, mit->second & wm};
      break;
    }
    case ExprOp::Add:
    case ExprOp::Sub: {
      KnownBits a = go(x->a), b = go(x->b);
      // carries: result bit i known iff all lower bits of both sides known
      uint32_t both = a.mask & b.mask;
      uint32_t prefix = 0;
      while (prefix < 32 && (both & (1u << prefix))) prefix++;
      uint32_t m = prefix >= 32 ? 0xFFFFFFFFu : ((1u << prefix) - 1);
      uint32_t v = x->op == ExprOp::Add ? a.bits + b.bits : a.bits - b.bits;
      r = {m & wm, v & m & wm};
      break;
    }
    case ExprOp::And: {
      KnownBits a = go(x->a), b = go(x->b);
      uint32_t known = (a.mask & b.mask) | (a.mask & ~a.bits) | (b.mask & ~b.bits);
      r = {known & wm, (a.bits & b.bits) & known & wm};
      break;
    }
    case ExprOp::Or: {
      KnownBits a = go(x->a), b = go(x->b);
      uint32_t known = (a.mask & b.mask) | (a.mask & a.bits) | (b.mask & b.bits);
      r = {known & wm, (a.bits | b.bits) & known & wm};
      break;
    }
    case ExprOp::Xor: {
      KnownBits a = go(x->a), b = go(x->b);
      uint32_t known = a.mask & b.mask;
      r = {known & wm, (a.bits ^ b.bits) & known & wm};
      break;
    }
    case ExprOp::Shl: {
      KnownBits a = go(x->a), b = go(x->b);
      if (b.mask == 0xFFFFFFFFu) {
        uint32_t s = b.bits;
        if (s >= 32) r = {wm, 0};
        else r = {((a.mask << s) | ((1u << s) - 1)) & wm, (a.bits << s) & wm};
      }
      break;
    }
    case ExprOp::Lshr: {
      KnownBits a = go(x->a), b = go(x->b);
      if (b.mask == 0xFFFFFFFFu) {
        uint32_t s = b.bits;
        if (s >= 32) r = {wm, 0};
        else r = {(a.mask >> s) | ~(0xFFFFFFFFu >> s), a.bits >> s};
      }
      break;
    }
    case ExprOp::Eq: {
      KnownBits a = go(x->a), b = go(x->b);
      uint32_t both = a.mask & b.mask;
      if ((a.bits & both) != (b.bits & both)) r = {1, 0};
      else if (a.mask == width_mask(x->a->width) && b.mask == a.mask)
        r = {1, a.bits == b.bits ? 1u : 0u};
      break;
    }
    case ExprOp::Ult: {
      KnownBits a = go(x->a), b = go(x->b);
      uint32_t awm = width_mask(x->a->width);
      if (a.umax(awm) < b.umin()) r = {1, 1};
      else if (a.umin() >= b.umax(awm)) r = {1, 0};
      break;
    }
    case ExprOp::Slt: {
      KnownBits a = go(x->a), b = go(x->b);
      // compare via biased values when the sign bits are known
      if ((a.mask & 0x80000000u) && (b.mask & 0x80000000u)) {
        uint32_t awm = width_mask(x->a->width);
        uint32_t amin = a.umin() ^ 0x80000000u, amax = a.umax(awm) ^ 0x80000000u;
        uint32_t bmin = b.umin() ^ 0x80000000u, bmax = b.umax(awm) ^ 0x80000000u;
        if (amin > amax) std::swap(amin, amax);
        if (bmin > bmax) std::swap(bmin, bmax);
        if (amax < bmin) r = {1, 1};
        else if (amin >= bmax) r = {1, 0};
      }
      break;
    }
    case ExprOp::Not: {
      KnownBits a = go(x->a);
      if (a.mask & 1) r = {1, (a.bits & 1) ^ 1};
      break;
    }
    case ExprOp::Ite: {
      KnownBits c = go(x->a);
      if (c.mask & 1) r = (c.bits & 1) ? go(x->b) : go(x->c);
      else {
        KnownBits t = go(x->b), f = go(x->c);
        uint32_t agree = t.mask & f.mask & ~(t.bits ^ f.bits);
        r = {agree & wm, t.bits & agree & wm};
      }
      break;
    }
    case ExprOp::ZExt: {
      KnownBits a = go(x->a);
      r = {(a.mask & 0xFF) | 0xFFFFFF00u, a.bits & 0xFF};
      break;
    }
    case ExprOp::Extract: {
      KnownBits a = go(x->a);
      r = {(a.mask >> (8 * x->aux)) & 0xFF, (a.bits >> (8 * x->aux)) & 0xFF};
      break;
    }
    }
    memo.emplace(x, r);
    return r;
  };
  return go(e);
}

Expr ExprPool::substitute(Expr e, const std::map<uint32_t, uint32_t>& bindings) {
  std::unordered_map<Expr, Expr> memo;
  std::function<Expr(Expr)> go = [&](Expr x) -> Expr {
    auto it = memo.find(x);
    if (it != memo.end()) return it->second;
    Expr r;
    switch (x->op) {
    case ExprOp::Const: r = x; break;
    case ExprOp::Symbol: {
      auto bit = bindings.find(x->value);
      r = bit == bindings.end() ? x : constant(bit->second, x->width);
      break;
    }
    case ExprOp::Add: r = add(go(x->a), go(x->b)); break;
    case ExprOp::Sub: r = sub(go(x->a), go(x->b)); break;
    case ExprOp::And: r = band(go(x->a), go(x->b)); break;
    case ExprOp::Or: r = bor(go(x->a), go(x->b)); break;
    case ExprOp::Xor: r = bxor(go(x->a), go(x->b)); break;
    case ExprOp::Shl: r = shl(go(x->a), go(x->b)); break;
    case ExprOp::Lshr: r = lshr(go(x->a), go(x->b)); break;
    case ExprOp::Eq: r = eq(go(x->a), go(x->b)); break;
    case ExprOp::Ult: r = ult(go(x->a), go(x->b)); break;
    case ExprOp::Slt: r = slt(go(x->a), go(x->b)); break;
    case ExprOp::Not: r = lnot(go(x->a)); break;
    case ExprOp::Ite: r = ite(go(x->a), go(x->b), go(x->c)); break;
    case ExprOp::ZExt: r = zext(go(x->a)); break;
    case ExprOp::Extract: r = extract_byte(go(x->a), static_cast<int>(x->aux)); break;
    }
    memo.emplace(x, r);
    return r;
  };
  return go(e);
}

void ExprPool::collect_symbols(Expr e, std::vector<uint32_t>& out) const {
  std::unordered_map<Expr, bool> seen;
  std::function<void(Expr)> go = [&](Expr x) {
    if (!x || seen.count(x)) return;
    seen.emplace(x, true);
    if (x->op == ExprOp::Symbol) out.push_back(x->value);
    go(x->a);
    go(x->b);
    go(x->c);
  };
  go(e);
}

std::string ExprPool::to_string(Expr e) const {
  std::ostringstream os;
  std::function<void(Expr)> go = [&](Expr x) {
    switch (x->op) {
    case ExprOp::Const: {
      os << "0x" << std::hex << x->value << std::dec;
      return;
    }
    case ExprOp::Symbol: {
      const SymbolInfo& s = symbol(x->value);
      os << (s.name.empty() ? ("s" + std::to_string(s.id)) : s.name);
      return;
    }
    default: break;
    }
    static const char* names[] = {"const", "sym",  "add", "sub", "and", "or",
                                  "xor",   "shl",  "lshr", "eq",  "ult", "slt",
                                  "not",   "ite",  "zext", "extract"};
    os << "(" << names[static_cast<int>(x->op)];
    if (x->op == ExprOp::Extract) os << "." << x->aux;
    for (Expr k : {x->a, x->b, x->c}) {
      if (!k) break;
      os << " ";
      go(k);
    }
    os << ")";
  };
  go(e);
  return os.str();
}

} // namespace kom
