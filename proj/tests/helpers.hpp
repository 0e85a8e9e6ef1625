#pragma once

#include "kom/classifier.hpp"
#include "kom/concrete.hpp"
#include "kom/pipeline.hpp"
#include "kom/solver.hpp"
#include "kom/symex.hpp"

#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef KOM_SOURCE_DIR
#define KOM_SOURCE_DIR "."
#endif

namespace kom::test {

inline std::string source_dir() { return KOM_SOURCE_DIR; }
inline std::string fixtures_dir() { return source_dir() + "/fixtures/ir"; }
inline std::string manifest_path() { return source_dir() + "/fixtures/model.toml"; }

inline const pipeline::Corpus& corpus() {
  static pipeline::Corpus c = [] {
    pipeline::LoadOutcome out = pipeline::load_corpus(manifest_path(), fixtures_dir());
    if (!out.ok()) {
      for (const auto& e : out.errors) fprintf(stderr, "%s\n", e.c_str());
      abort();
    }
    return *out.corpus;
  }();
  return c;
}

inline const pipeline::Analysis& analysis() {
  static pipeline::Analysis a = pipeline::analyze(corpus(), {});
  return a;
}

inline const classifier::SyscallProfile& profile(const std::string& name) {
  for (const auto& p : analysis().profiles)
    if (p.name == name) return p;
  fprintf(stderr, "no profile for %s\n", name.c_str());
  abort();
}

// ---------------------------------------------------------------------------
// Random loop-free fixtures over one or two under-constrained input bytes.
// Inputs are byte loads from a user-buffer parameter, so the solver sees
// 8-bit symbols and stays inside its completeness class.

struct GeneratedFixture {
  std::string text;
  int input_bytes = 1; // 1 or 2
  bool writes_object = false;
};

inline GeneratedFixture generate_fixture(std::mt19937& rng, bool with_stores) {
  GeneratedFixture out;
  out.input_bytes = (rng() % 3 == 0) ? 2 : 1;
  out.writes_object = with_stores;
  int blocks = 2 + static_cast<int>(rng() % 6); // branchy DAG depth
  std::ostringstream os;
  os << "fn @generated(%t: ptr ko:Timer, %in: ptr user) {\n";
  os << "entry:\n";
  os << "  %p0 = gep %in, 0\n  %a = load.b %p0\n";
  if (out.input_bytes == 2) os << "  %p1 = gep %in, 1\n  %b = load.b %p1\n";
  int reg = 0;
  int store = 0;
  auto value = [&](std::ostringstream& o) -> std::string {
    // a small expression over the inputs
    auto operand = [&]() -> std::string {
      int pick = rng() % 3;
      if (pick == 0) return "%a";
      if (pick == 1 && out.input_bytes == 2) return "%b";
      return std::to_string(rng() % 200);
    };
    static const char* ops[] = {"add", "sub", "and", "or", "xor"};
    std::string r = "%v" + std::to_string(reg++);
    o << "  " << r << " = " << ops[rng() % 5] << " " << operand() << ", " << operand()
      << "\n";
    return r;
  };
  auto emit_block_body = [&](std::ostringstream& o, int index) {
    if (with_stores && rng() % 2 == 0) {
      std::string v = value(o);
      uint32_t off = 4 * (rng() % 16);
      std::string addr = "%s" + std::to_string(store++);
      o << "  " << addr << " = gep %t, " << off << "\n";
      o << "  store.w " << addr << ", " << (rng() % 3 == 0 ? std::to_string(rng() % 100) : v)
        << "\n";
    }
    (void)index;
  };
  // entry branches into the DAG
  std::ostringstream body;
  static const char* ccs[] = {"eq", "ne", "ult", "ule", "slt", "sle"};
  {
    std::string v = value(body);
    std::string c = "%c_entry";
    body << "  " << c << " = icmp." << ccs[rng() % 6] << " " << v << ", "
         << std::to_string(rng() % 260) << "\n";
    body << "  br " << c << ", blk0, blk" << (blocks > 1 ? 1 : 0) << "\n";
  }
  os << body.str();
  for (int bi = 0; bi < blocks; bi++) {
    os << "blk" << bi << ":\n";
    std::ostringstream o;
    emit_block_body(o, bi);
    bool last = bi + 2 >= blocks;
    if (last || rng() % 4 == 0) {
      o << "  ret\n";
    } else {
      std::string v = value(o);
      std::string c = "%c" + std::to_string(bi);
      int t1 = bi + 1 + static_cast<int>(rng() % (blocks - bi - 1));
      int t2 = bi + 1 + static_cast<int>(rng() % (blocks - bi - 1));
      o << "  " << c << " = icmp." << ccs[rng() % 6] << " " << v << ", "
        << std::to_string(rng() % 260) << "\n";
      o << "  br " << c << ", blk" << t1 << ", blk" << t2 << "\n";
    }
    os << o.str();
  }
  os << "}\n";
  out.text = os.str();
  return out;
}

// map-backed concrete environment accepting every address
struct MapEnv {
  std::map<uint32_t, uint8_t> bytes;
  concrete::Env env;
  MapEnv() {
    env.load = [this](uint32_t addr, int width) -> uint32_t {
      int n = width == 32 ? 4 : 1;
      uint32_t v = 0;
      for (int b = 0; b < n; b++) {
        auto it = bytes.find(addr + b);
        v |= static_cast<uint32_t>(it == bytes.end() ? 0 : it->second) << (8 * b);
      }
      return v;
    };
    env.store = [this](uint32_t addr, uint32_t value, int width) {
      int n = width == 32 ? 4 : 1;
      for (int b = 0; b < n; b++)
        bytes[addr + b] = static_cast<uint8_t>((value >> (8 * b)) & 0xFF);
    };
  }
};

// Materializes a symex path model into concrete memory and reruns the
// fixture concretely: object bases get disjoint addresses, fresh-read cells
// get their model values.
struct DifferentialRun {
  bool skipped = false; // path model unavailable
  bool trace_match = false;
  bool writes_match = false;
  std::string detail;
};

inline DifferentialRun differential_check(ExprPool& pool, const Solver& solver,
                                          const ir::Program& program,
                                          const ir::Function& fn,
                                          const model::Model& m,
                                          const symex::PathRecord& path) {
  DifferentialRun result;
  // pin object bases to disjoint addresses
  std::vector<Expr> constraints = path.constraints;
  std::map<uint32_t, uint32_t> object_base;
  for (const symex::ObjectInfo& oi : path.objects) {
    uint32_t addr;
    if (oi.fixed_address) {
      addr = *oi.fixed_address;
    } else if (oi.origin == symex::ObjectOrigin::UserBuffer) {
      addr = m.layout.thread_region.base + 0x400 * (oi.id + 1);
    } else {
      addr = 0x40000000u + 0x10000u * (oi.id + 1);
    }
    object_base[oi.id] = addr;
    if (oi.bound_symbol)
      constraints.push_back(
          pool.eq(pool.symbol_expr(*oi.bound_symbol), pool.constant(addr, 32)));
  }
  SolverVerdict v = solver.check_sat(constraints);
  if (v.status != SatStatus::Sat) {
    result.skipped = true;
    result.detail = "path model unavailable";
    return result;
  }

  MapEnv env;
  // initial memory: model values of fresh-read cells, global initial values
  for (const auto& [sid, value] : v.model) {
    const SymbolInfo& si = pool.symbol(sid);
    if (si.origin != SymbolOrigin::MemCell) continue;
    auto it = object_base.find(si.object_id);
    if (it == object_base.end()) continue;
    uint32_t addr = it->second + si.offset;
    int n = si.width == 32 ? 4 : 1;
    for (int b = 0; b < n; b++)
      env.bytes[addr + b] = static_cast<uint8_t>((value >> (8 * b)) & 0xFF);
  }
  for (const model::GlobalSpec& g : m.layout.globals)
    for (int b = 0; b < 4; b++)
      env.bytes[g.address + b] = static_cast<uint8_t>((g.value >> (8 * b)) & 0xFF);

  std::vector<uint32_t> args;
  for (const ir::Param& p : fn.params) {
    uint32_t value = 0;
    for (const auto& [sid, mv] : v.model) {
      const SymbolInfo& si = pool.symbol(sid);
      if (si.origin == SymbolOrigin::Param && si.name == p.name) value = mv;
    }
    args.push_back(value);
  }

  concrete::RunLimits limits;
  limits.fail_blocks_reject = false;
  concrete::RunResult run =
      concrete::run_function(program, fn, args, m.constants, env.env, limits);

  result.trace_match = run.block_trace == path.block_trace;
  if (!result.trace_match) {
    result.detail = "block trace mismatch";
    return result;
  }
  std::vector<std::pair<uint32_t, uint32_t>> expected;
  for (const symex::WriteEvent& w : path.writes) {
    uint32_t addr = pool.eval(w.address, v.model);
    uint32_t data = pool.eval(w.data, v.model);
    expected.push_back({addr, w.width == 8 ? (data & 0xFF) : data});
  }
  std::vector<std::pair<uint32_t, uint32_t>> actual;
  for (const concrete::ConcreteWrite& w : run.writes) actual.push_back({w.address, w.value});
  result.writes_match = expected == actual;
  if (!result.writes_match) result.detail = "write sequence mismatch";
  return result;
}

} // namespace kom::test
