#pragma once

#include "kom/expr.hpp"
#include "kom/ir.hpp"
#include "kom/model.hpp"
#include "kom/solver.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kom::symex {

enum class Taint { Clean, ParamDerived, KernelObject };

enum class ObjectOrigin { LazyParam, LazyNested, Global, UserBuffer };

struct ObjectInfo {
  uint32_t id = 0;
  uint32_t size = 0;
  ObjectOrigin origin = ObjectOrigin::LazyParam;
  Taint taint = Taint::Clean;
  std::string label; // param/global name for reporting
  // for LazyNested: the kernel-object field the pointer was loaded from
  std::optional<uint32_t> via_kernel_field;
  std::optional<uint32_t> fixed_address; // globals only
  std::optional<uint32_t> bound_symbol;  // pointer symbol resolved to this object
};

struct WriteEvent {
  Expr address = nullptr;
  Expr data = nullptr;
  int width = 32;
  std::optional<std::pair<uint32_t, uint32_t>> resolved; // (object id, offset)
  Taint target_taint = Taint::Clean;
  size_t constraint_prefix = 0; // constraints active at the moment of the write
  bool data_param_tainted = false;
  bool data_kernel_tainted = false;
  std::optional<uint32_t> via_kernel_ptr_field;
  int line = 0;
};

struct DerefReadEvent {
  Expr address = nullptr;
  int width = 32;
  std::optional<uint32_t> src_field_offset;
  size_t constraint_prefix = 0;
};

enum class PathStatus { Returned, LoopBounded, PrunedInfeasible, SolverUnknown, Abnormal };

struct PathRecord {
  PathStatus status = PathStatus::Returned;
  std::vector<Expr> constraints;
  std::vector<WriteEvent> writes;
  std::vector<DerefReadEvent> deref_reads;
  std::vector<int> block_trace;
  std::vector<ObjectInfo> objects;
  std::string abnormal_reason;

  bool counts_for_classification() const {
    return status == PathStatus::Returned || status == PathStatus::LoopBounded ||
           status == PathStatus::Abnormal;
  }
};

struct ExplorationStats {
  double wall_ms = 0;
  long paths = 0;
  long instructions = 0;
  char status = 'N';
};

struct Limits {
  int loop_threshold = 16;
  long max_paths = 100000;
  long max_instructions = 10000000;
  uint64_t solver_budget = 1ull << 20;
};

struct ExecutionResult {
  std::vector<PathRecord> paths;
  ExplorationStats stats;
};

class Executor {
public:
  Executor(ExprPool* pool, const Solver* solver, const model::Model* model,
           Limits limits = {});

  // Runs one syscall function under-constrained: parameters are fresh
  // symbols, pointed-to memory materializes lazily, the annotated kernel
  // object is tainted at lazy initialization.
  ExecutionResult execute_syscall(const ir::Program& program, const ir::Function& fn);

private:
  ExprPool* pool_;
  const Solver* solver_;
  const model::Model* model_;
  Limits limits_;
};

// Convenience wrapper resolving the function through the syscall manifest.
ExecutionResult run_syscall(ExprPool* pool, const Solver* solver,
                            const model::Model* model, const ir::Program& program,
                            const model::SyscallManifest& manifest, Limits limits = {});

} // namespace kom::symex
