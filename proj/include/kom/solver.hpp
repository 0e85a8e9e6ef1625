#pragma once

#include "kom/expr.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace kom {

// Decision procedure for conjunctions of width-1 bitvector constraints.
//
// The procedure is complete (never answers Unknown) when, after unit
// propagation, every connected component of the constraint graph has at most
// `complete_bits` free symbol bits; beyond that it falls back to guided
// probing, which can only ever answer Sat, and reports Unknown otherwise.

enum class SatStatus { Sat, Unsat, Unknown };
enum class Tri { True, False, Unknown };

struct SolverVerdict {
  SatStatus status = SatStatus::Unknown;
  std::map<uint32_t, uint32_t> model; // symbol id -> value, valid when Sat
};

struct SolverConfig {
  uint64_t budget = 1ull << 20; // search steps per query
  int complete_bits = 24;      // exhaustive-search ceiling per component
  uint32_t probe_seed = 0x4B4F4D46u;
};

class Solver {
public:
  Solver(ExprPool* pool, SolverConfig cfg = {});

  SolverVerdict check_sat(std::span<const Expr> constraints) const;
  SolverVerdict check_sat(std::span<const Expr> constraints, uint64_t budget) const;

  // true iff constraints + (e == v) is satisfiable
  Tri can_equal(Expr e, uint32_t v, std::span<const Expr> constraints) const;
  // true iff constraints + (a != b) is unsatisfiable
  Tri must_equal(Expr a, Expr b, std::span<const Expr> constraints) const;

  const SolverConfig& config() const { return cfg_; }
  void set_budget(uint64_t b) { cfg_.budget = b; }

private:
  ExprPool* pool_;
  SolverConfig cfg_;
};

} // namespace kom
