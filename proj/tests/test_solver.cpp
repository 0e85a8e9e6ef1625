#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "kom/solver.hpp"

#include <random>

using namespace kom;

namespace {

uint32_t fresh(ExprPool& pool, int width, const char* name) {
  SymbolInfo si;
  si.width = static_cast<uint8_t>(width);
  si.origin = SymbolOrigin::Free;
  si.name = name;
  return pool.fresh_symbol(si);
}

} // namespace

TEST_CASE("contradiction is unsat") {
  ExprPool pool;
  Solver solver(&pool);
  Expr x = pool.symbol_expr(fresh(pool, 32, "x"));
  std::vector<Expr> cs{pool.eq(x, pool.constant(5, 32)),
                       pool.ne(x, pool.constant(5, 32))};
  CHECK(solver.check_sat(cs).status == SatStatus::Unsat);
}

TEST_CASE("empty set is sat with the empty model") {
  ExprPool pool;
  Solver solver(&pool);
  std::vector<Expr> cs;
  SolverVerdict v = solver.check_sat(cs);
  CHECK(v.status == SatStatus::Sat);
  CHECK(v.model.empty());
}

TEST_CASE("masked byte equation: model agrees with the 256-value oracle") {
  // oracle first: enumerate all 256 low-byte values
  std::vector<uint32_t> sat_lows;
  for (uint32_t low = 0; low < 256; low++)
    if ((low & 0xFF) == 0x44) sat_lows.push_back(low);
  REQUIRE(sat_lows == std::vector<uint32_t>{0x44});

  ExprPool pool;
  Solver solver(&pool);
  uint32_t xid = fresh(pool, 32, "x");
  Expr x = pool.symbol_expr(xid);
  std::vector<Expr> cs{
      pool.eq(pool.band(x, pool.constant(0xFF, 32)), pool.constant(0x44, 32))};
  SolverVerdict v = solver.check_sat(cs);
  REQUIRE(v.status == SatStatus::Sat);
  CHECK((v.model.at(xid) & 0xFF) == 0x44);
}

TEST_CASE("can_equal spec cases") {
  ExprPool pool;
  Solver solver(&pool);
  Expr p = pool.symbol_expr(fresh(pool, 32, "p"));
  std::vector<Expr> none;

  // unconstrained symbol reaches a type id
  CHECK(solver.can_equal(p, 0x54485244u, none) == Tri::True);

  // high-half mask forces the low bits to zero: provably unreachable
  Expr masked = pool.band(p, pool.constant(0xFFFF0000u, 32));
  CHECK(solver.can_equal(masked, 0x54485244u, none) == Tri::False);

  // a bound excludes the value
  std::vector<Expr> bounded{pool.ult(p, pool.constant(10, 32))};
  CHECK(solver.can_equal(p, 0x54485244u, bounded) == Tri::False);
}

TEST_CASE("must_equal spec cases") {
  ExprPool pool;
  Solver solver(&pool);
  Expr p = pool.symbol_expr(fresh(pool, 32, "p"));
  Expr q = pool.symbol_expr(fresh(pool, 32, "q"));
  std::vector<Expr> none;
  CHECK(solver.must_equal(p, p, none) == Tri::True);
  CHECK(solver.must_equal(p, q, none) == Tri::False);
  CHECK(solver.must_equal(p, pool.add(p, pool.constant(0, 32)), none) == Tri::True);
}

TEST_CASE("brute-force agreement on random small constraint sets") {
  // 1000 random conjunctions over <= 16 free bits; exhaustive enumeration is
  // the oracle
  std::mt19937 rng(0x5EED);
  int checked = 0;
  for (int iter = 0; iter < 1000; iter++) {
    ExprPool pool;
    Solver solver(&pool);
    int nsyms = 1 + static_cast<int>(rng() % 2);
    std::vector<uint32_t> ids;
    for (int i = 0; i < nsyms; i++) ids.push_back(fresh(pool, 8, "s"));

    auto operand = [&]() -> Expr {
      if (rng() % 3 == 0) return pool.constant(rng() % 256, 8);
      return pool.symbol_expr(ids[rng() % ids.size()]);
    };
    auto expr8 = [&]() -> Expr {
      Expr a = operand();
      Expr b = operand();
      switch (rng() % 5) {
      case 0: return pool.add(a, b);
      case 1: return pool.sub(a, b);
      case 2: return pool.band(a, b);
      case 3: return pool.bor(a, b);
      default: return pool.bxor(a, b);
      }
    };
    int ncs = 1 + static_cast<int>(rng() % 3);
    std::vector<Expr> cs;
    for (int i = 0; i < ncs; i++) {
      Expr a = expr8();
      Expr b = operand();
      switch (rng() % 4) {
      case 0: cs.push_back(pool.eq(a, b)); break;
      case 1: cs.push_back(pool.ne(a, b)); break;
      case 2: cs.push_back(pool.ult(a, b)); break;
      default: cs.push_back(pool.ule(a, b)); break;
      }
    }

    // oracle: exhaustive enumeration over all assignments
    bool oracle_sat = false;
    uint32_t limit = 1u << (8 * nsyms);
    for (uint32_t v = 0; v < limit && !oracle_sat; v++) {
      std::map<uint32_t, uint32_t> model;
      for (int i = 0; i < nsyms; i++) model[ids[i]] = (v >> (8 * i)) & 0xFF;
      bool ok = true;
      for (Expr c : cs)
        if (pool.eval(c, model) == 0) {
          ok = false;
          break;
        }
      oracle_sat = ok;
    }

    SolverVerdict verdict = solver.check_sat(cs);
    REQUIRE(verdict.status != SatStatus::Unknown); // inside the completeness class
    CHECK((verdict.status == SatStatus::Sat) == oracle_sat);
    if (verdict.status == SatStatus::Sat) {
      for (Expr c : cs) CHECK(pool.eval(c, verdict.model) == 1);
    }
    checked++;
  }
  CHECK(checked == 1000);
}

TEST_CASE("sat models always evaluate true (random wide sets)") {
  // wider symbols leave the completeness class; Sat verdicts must still
  // carry verified models, everything else may be Unknown but never wrong
  std::mt19937 rng(0xABCD);
  for (int iter = 0; iter < 200; iter++) {
    ExprPool pool;
    Solver solver(&pool);
    Expr x = pool.symbol_expr(fresh(pool, 32, "x"));
    Expr y = pool.symbol_expr(fresh(pool, 32, "y"));
    std::vector<Expr> cs;
    int ncs = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < ncs; i++) {
      Expr a = rng() % 2 ? x : y;
      uint32_t k = rng();
      switch (rng() % 3) {
      case 0: cs.push_back(pool.ult(a, pool.constant(k, 32))); break;
      case 1: cs.push_back(pool.eq(pool.band(a, pool.constant(0xFF, 32)),
                                   pool.constant(k % 256, 32))); break;
      default: cs.push_back(pool.ne(a, pool.constant(k, 32))); break;
      }
    }
    SolverVerdict v = solver.check_sat(cs);
    if (v.status == SatStatus::Sat)
      for (Expr c : cs) CHECK(pool.eval(c, v.model) == 1);
  }
}

TEST_CASE("monotone budget") {
  // a verdict reached at budget B holds for every larger budget
  ExprPool pool;
  Solver solver(&pool);
  uint32_t xid = fresh(pool, 8, "x");
  uint32_t yid = fresh(pool, 8, "y");
  Expr x = pool.symbol_expr(xid);
  Expr y = pool.symbol_expr(yid);
  std::vector<Expr> cs{pool.eq(pool.bxor(x, y), pool.constant(0x5A, 8)),
                       pool.ult(x, y)};
  SolverVerdict small = solver.check_sat(cs, 1u << 14);
  if (small.status != SatStatus::Unknown) {
    for (uint64_t budget : {1u << 16, 1u << 18, 1u << 20}) {
      SolverVerdict big = solver.check_sat(cs, budget);
      CHECK(big.status == small.status);
    }
  }
  // unsat case
  std::vector<Expr> bad{pool.ult(x, pool.constant(4, 8)),
                        pool.ult(pool.constant(9, 8), x)};
  SolverVerdict v1 = solver.check_sat(bad, 1u << 12);
  SolverVerdict v2 = solver.check_sat(bad, 1u << 20);
  if (v1.status != SatStatus::Unknown) CHECK(v1.status == v2.status);
  CHECK(v2.status == SatStatus::Unsat);
}

TEST_CASE("incompleteness is reported as unknown, never guessed") {
  // two wide symbols under a mixing function: outside the completeness
  // class, and random probing cannot prove the unsat direction
  ExprPool pool;
  Solver solver(&pool);
  Expr a = pool.symbol_expr(fresh(pool, 32, "a"));
  Expr b = pool.symbol_expr(fresh(pool, 32, "b"));
  Expr mix = pool.add(pool.bxor(a, pool.shl(b, pool.constant(1, 32))),
                      pool.shl(a, pool.constant(7, 32)));
  std::vector<Expr> cs{pool.eq(mix, pool.constant(0x54485244u, 32))};
  SolverVerdict v = solver.check_sat(cs);
  CHECK(v.status != SatStatus::Unsat); // it is actually satisfiable
}
