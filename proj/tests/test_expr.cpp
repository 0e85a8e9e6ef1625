#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "kom/expr.hpp"

#include <random>

using namespace kom;

namespace {

uint32_t fresh32(ExprPool& pool, const char* name) {
  SymbolInfo si;
  si.width = 32;
  si.origin = SymbolOrigin::Free;
  si.name = name;
  return pool.fresh_symbol(si);
}

} // namespace

TEST_CASE("constant folding and identities") {
  ExprPool pool;
  Expr x = pool.symbol_expr(fresh32(pool, "x"));

  CHECK(pool.add(pool.constant(2, 32), pool.constant(3, 32))->value == 5);
  CHECK(pool.add(x, pool.constant(0, 32)) == x);
  CHECK(pool.band(x, pool.constant(0xFFFFFFFF, 32)) == x);
  CHECK(pool.band(x, pool.constant(0, 32))->value == 0);
  CHECK(pool.eq(x, x) == pool.bool_const(true));
  CHECK(pool.lnot(pool.lnot(pool.eq(x, pool.constant(1, 32)))) ==
        pool.eq(x, pool.constant(1, 32)));
  CHECK(pool.bxor(x, x)->value == 0);
  CHECK(pool.ult(x, pool.constant(0, 32)) == pool.bool_const(false));
  // (x + 1) + 2 folds the constants together
  Expr e = pool.add(pool.add(x, pool.constant(1, 32)), pool.constant(2, 32));
  CHECK(e->op == ExprOp::Add);
  CHECK(e->b->value == 3);
}

TEST_CASE("hash consing is structural") {
  ExprPool pool;
  Expr x = pool.symbol_expr(fresh32(pool, "x"));
  Expr a = pool.add(x, pool.constant(4, 32));
  Expr b = pool.add(x, pool.constant(4, 32));
  CHECK(a == b);
}

TEST_CASE("ite simplification") {
  ExprPool pool;
  Expr x = pool.symbol_expr(fresh32(pool, "x"));
  Expr y = pool.symbol_expr(fresh32(pool, "y"));
  Expr c = pool.eq(x, y);
  CHECK(pool.ite(pool.bool_const(true), x, y) == x);
  CHECK(pool.ite(pool.bool_const(false), x, y) == y);
  CHECK(pool.ite(c, x, x) == x);
}

TEST_CASE("extract and zext round-trip through eval") {
  ExprPool pool;
  Expr x = pool.symbol_expr(fresh32(pool, "x"));
  std::map<uint32_t, uint32_t> model{{0, 0xAABBCCDD}};
  CHECK(pool.eval(pool.extract_byte(x, 0), model) == 0xDD);
  CHECK(pool.eval(pool.extract_byte(x, 3), model) == 0xAA);
  CHECK(pool.eval(pool.zext(pool.extract_byte(x, 1)), model) == 0xCC);
}

TEST_CASE("simplify preserves semantics on random expressions") {
  // property: eval(e) == eval(simplify(e)) for random trees and assignments
  std::mt19937 rng(7);
  for (int iter = 0; iter < 300; iter++) {
    ExprPool pool;
    uint32_t xa = fresh32(pool, "a");
    uint32_t xb = fresh32(pool, "b");
    std::vector<Expr> nodes{pool.symbol_expr(xa), pool.symbol_expr(xb),
                            pool.constant(rng(), 32), pool.constant(rng() % 5, 32)};
    for (int step = 0; step < 12; step++) {
      Expr a = nodes[rng() % nodes.size()];
      Expr b = nodes[rng() % nodes.size()];
      Expr e = nullptr;
      switch (rng() % 8) {
      case 0: e = pool.add(a, b); break;
      case 1: e = pool.sub(a, b); break;
      case 2: e = pool.band(a, b); break;
      case 3: e = pool.bor(a, b); break;
      case 4: e = pool.bxor(a, b); break;
      case 5: e = pool.shl(a, pool.constant(rng() % 40, 32)); break;
      case 6: e = pool.lshr(a, pool.constant(rng() % 40, 32)); break;
      case 7:
        e = pool.ite(pool.ult(a, b), a, b);
        break;
      }
      nodes.push_back(e);
    }
    Expr top = nodes.back();
    Expr simplified = pool.simplify(top);
    for (int trial = 0; trial < 8; trial++) {
      std::map<uint32_t, uint32_t> model{{xa, rng()}, {xb, rng()}};
      CHECK(pool.eval(top, model) == pool.eval(simplified, model));
    }
  }
}

TEST_CASE("known bits narrows masked values") {
  ExprPool pool;
  Expr x = pool.symbol_expr(fresh32(pool, "x"));
  std::map<uint32_t, uint32_t> empty;
  KnownBits kb = pool.known_bits(pool.band(x, pool.constant(0xFF, 32)), empty);
  CHECK(kb.mask == 0xFFFFFF00u);
  CHECK((kb.bits & 0xFFFFFF00u) == 0);
  // a definitely-false equality is visible without any assignment
  Expr e = pool.eq(pool.band(x, pool.constant(0xFFFF0000u, 32)),
                   pool.constant(0x54485244u, 32));
  KnownBits ke = pool.known_bits(e, empty);
  CHECK(ke.mask == 1u);
  CHECK(ke.bits == 0u);
}
