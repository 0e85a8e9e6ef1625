#include "kom/solver.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <set>

namespace kom {

namespace {

struct UnionFind {
  std::vector<int> parent;
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

struct Budget {
  uint64_t remaining;
  bool spend(uint64_t n = 1) {
    if (remaining < n) {
      remaining = 0;
      return false;
    }
    remaining -= n;
    return true;
  }
};

struct Component {
  std::vector<Expr> constraints;
  std::vector<uint32_t> symbols; // sorted
};

} // namespace

Solver::Solver(ExprPool* pool, SolverConfig cfg) : pool_(pool), cfg_(cfg) {}

SolverVerdict Solver::check_sat(std::span<const Expr> constraints) const {
  return check_sat(constraints, cfg_.budget);
}

SolverVerdict Solver::check_sat(std::span<const Expr> constraints, uint64_t budget) const {
  Budget bud{budget};
  std::map<uint32_t, uint32_t> bindings;
  std::vector<Expr> work;
  work.reserve(constraints.size());
  for (Expr c : constraints) work.push_back(pool_->simplify(c));

  // Unit propagation: (sym == const) binds the symbol; substitution may
  // expose further units or a contradiction.
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<Expr> next;
    for (Expr c : work) {
      if (c->is_const()) {
        if (c->value == 0) return {SatStatus::Unsat, {}};
        continue;
      }
      if (c->op == ExprOp::Eq && c->a->is_symbol() && c->b->is_const()) {
        uint32_t id = c->a->value;
        uint32_t v = c->b->value & width_mask(c->a->width);
        auto it = bindings.find(id);
        if (it != bindings.end()) {
          if (it->second != v) return {SatStatus::Unsat, {}};
        } else {
          bindings.emplace(id, v);
          changed = true;
        }
        continue;
      }
      next.push_back(c);
    }
    work.swap(next);
    if (changed) {
      for (Expr& c : work) c = pool_->substitute(c, bindings);
    }
    if (!bud.spend(work.size() + 1)) return {SatStatus::Unknown, {}};
  }

  // Constraint-level known-bits: a constraint whose abstract value is a
  // definite 0 under the empty assignment can never hold.
  {
    std::map<uint32_t, uint32_t> empty;
    for (Expr c : work) {
      KnownBits kb = pool_->known_bits(c, empty);
      if ((kb.mask & 1) && (kb.bits & 1) == 0) return {SatStatus::Unsat, {}};
    }
  }

  // Partition by shared symbols.
  std::vector<std::vector<uint32_t>> per_constraint_syms(work.size());
  std::map<uint32_t, int> sym_slot;
  for (size_t i = 0; i < work.size(); i++) {
    pool_->collect_symbols(work[i], per_constraint_syms[i]);
    std::sort(per_constraint_syms[i].begin(), per_constraint_syms[i].end());
    per_constraint_syms[i].erase(
        std::unique(per_constraint_syms[i].begin(), per_constraint_syms[i].end()),
        per_constraint_syms[i].end());
    for (uint32_t s : per_constraint_syms[i])
      sym_slot.emplace(s, static_cast<int>(sym_slot.size()));
  }
  UnionFind uf;
  uf.parent.resize(sym_slot.size());
  std::iota(uf.parent.begin(), uf.parent.end(), 0);
  for (auto& syms : per_constraint_syms) {
    for (size_t j = 1; j < syms.size(); j++)
      uf.unite(sym_slot[syms[0]], sym_slot[syms[j]]);
  }
  std::map<int, Component> comps;
  for (size_t i = 0; i < work.size(); i++) {
    if (per_constraint_syms[i].empty()) continue; // const-true, already dropped
    int root = uf.find(sym_slot[per_constraint_syms[i][0]]);
    comps[root].constraints.push_back(work[i]);
    for (uint32_t s : per_constraint_syms[i]) comps[root].symbols.push_back(s);
  }

  SolverVerdict result;
  result.status = SatStatus::Sat;
  result.model = bindings;

  for (auto& [root, comp] : comps) {
    std::sort(comp.symbols.begin(), comp.symbols.end());
    comp.symbols.erase(std::unique(comp.symbols.begin(), comp.symbols.end()),
                       comp.symbols.end());

    uint64_t free_bits = 0;
    for (uint32_t s : comp.symbols) free_bits += pool_->symbol(s).width;

    auto eval_all = [&](const std::map<uint32_t, uint32_t>& m) -> bool {
      for (Expr c : comp.constraints)
        if (pool_->eval(c, m) == 0) return false;
      return true;
    };

    bool solved = false;
    std::map<uint32_t, uint32_t> comp_model;

    if (free_bits <= static_cast<uint64_t>(cfg_.complete_bits)) {
      // Exhaustive backtracking, byte by byte, pruned with known-bits.
      struct Slot {
        uint32_t sym;
        int byte; // byte index within the symbol
      };
      std::vector<Slot> slots;
      for (uint32_t s : comp.symbols) {
        int bytes = pool_->symbol(s).width == 32 ? 4 : 1;
        for (int b = 0; b < bytes; b++) slots.push_back({s, b});
      }
      std::map<uint32_t, uint32_t> partial; // fully-assigned symbols only
      std::map<uint32_t, uint32_t> acc;     // accumulating byte values
      std::map<uint32_t, int> acc_bytes;

      std::function<bool(size_t)> rec = [&](size_t idx) -> bool {
        if (!bud.spend()) return false;
        if (idx == slots.size()) {
          if (eval_all(partial)) {
            comp_model = partial;
            return true;
          }
          return false;
        }
        const Slot& sl = slots[idx];
        int width = pool_->symbol(sl.sym).width;
        int total_bytes = width == 32 ? 4 : 1;
        int limit = width == 1 ? 2 : 256;
        for (int v = 0; v < limit; v++) {
          if (!bud.spend()) return false;
          uint32_t prev = acc.count(sl.sym) ? acc[sl.sym] : 0;
          acc[sl.sym] = prev | (static_cast<uint32_t>(v) << (8 * sl.byte));
          acc_bytes[sl.sym] = sl.byte + 1;
          bool full = acc_bytes[sl.sym] == total_bytes;
          if (full) partial[sl.sym] = acc[sl.sym] & width_mask(width);
          bool viable = true;
          if (full) {
            for (Expr c : comp.constraints) {
              KnownBits kb = pool_->known_bits(c, partial);
              if ((kb.mask & 1) && (kb.bits & 1) == 0) {
                viable = false;
                break;
              }
            }
          }
          if (viable && rec(idx + 1)) return true;
          if (full) partial.erase(sl.sym);
          acc[sl.sym] = prev;
          acc_bytes[sl.sym] = sl.byte;
          if (bud.remaining == 0) return false;
        }
        return false;
      };
      solved = rec(0);
      if (!solved && bud.remaining == 0) return {SatStatus::Unknown, {}};
      if (!solved) return {SatStatus::Unsat, {}};
    } else {
      // Guided probing: constants appearing in the constraints (and small
      // perturbations of them) first, then seeded random assignments. Can
      // only establish Sat.
      std::set<uint32_t> const_pool{0u, 1u, 0xFFFFFFFFu};
      std::function<void(Expr)> harvest = [&](Expr x) {
        if (!x) return;
        if (x->is_const()) {
          const_pool.insert(x->value);
          const_pool.insert(x->value + 1);
          const_pool.insert(x->value - 1);
        }
        harvest(x->a);
        harvest(x->b);
        harvest(x->c);
      };
      for (Expr c : comp.constraints) harvest(c);
      std::vector<uint32_t> cands(const_pool.begin(), const_pool.end());

      std::mt19937 rng(cfg_.probe_seed ^ static_cast<uint32_t>(root * 0x9E3779B9u));
      uint64_t attempts = std::max<uint64_t>(64, budget >> 8);
      std::map<uint32_t, uint32_t> trial;

      // Cartesian sweep of candidate constants over the (few) symbols,
      // bounded, then random fill.
      uint64_t sweep = 1;
      for (size_t i = 0; i < comp.symbols.size() && sweep < attempts; i++)
        sweep *= cands.size();
      bool do_sweep = comp.symbols.size() <= 3 && sweep <= attempts / 2;
      if (do_sweep) {
        std::vector<size_t> idx(comp.symbols.size(), 0);
        bool done = false;
        while (!done && !solved) {
          if (!bud.spend(comp.constraints.size())) return {SatStatus::Unknown, {}};
          for (size_t i = 0; i < comp.symbols.size(); i++)
            trial[comp.symbols[i]] =
                cands[idx[i]] & width_mask(pool_->symbol(comp.symbols[i]).width);
          if (eval_all(trial)) {
            solved = true;
            comp_model = trial;
            break;
          }
          size_t k = 0;
          while (k < idx.size()) {
            if (++idx[k] < cands.size()) break;
            idx[k] = 0;
            k++;
          }
          done = k == idx.size();
        }
      }
      for (uint64_t t = 0; t < attempts && !solved; t++) {
        if (!bud.spend(comp.constraints.size())) return {SatStatus::Unknown, {}};
        for (uint32_t s : comp.symbols) {
          uint32_t v;
          if (t % 3 == 0 && !cands.empty())
            v = cands[rng() % cands.size()];
          else
            v = rng();
          trial[s] = v & width_mask(pool_->symbol(s).width);
        }
        if (eval_all(trial)) {
          solved = true;
          comp_model = trial;
        }
      }
      if (!solved) return {SatStatus::Unknown, {}};
    }
    for (auto& [s, v] : comp_model) result.model[s] = v;
  }

  // Internal soundness check: the model must evaluate every original
  // constraint to true.
  for (Expr c : constraints) {
    if (pool_->eval(c, result.model) == 0) return {SatStatus::Unknown, {}};
  }
  return result;
}

Tri Solver::can_equal(Expr e, uint32_t v, std::span<const Expr> constraints) const {
  std::vector<Expr> cs(constraints.begin(), constraints.end());
  cs.push_back(pool_->eq(e, pool_->constant(v, e->width)));
  SolverVerdict verdict = check_sat(cs);
  switch (verdict.status) {
  case SatStatus::Sat: return Tri::True;
  case SatStatus::Unsat: return Tri::False;
  default: return Tri::Unknown;
  }
}

Tri Solver::must_equal(Expr a, Expr b, std::span<const Expr> constraints) const {
  std::vector<Expr> cs(constraints.begin(), constraints.end());
  cs.push_back(pool_->ne(a, b));
  SolverVerdict verdict = check_sat(cs);
  switch (verdict.status) {
  case SatStatus::Unsat: return Tri::True;
  case SatStatus::Sat: return Tri::False;
  default: return Tri::Unknown;
  }
}

} // namespace kom
