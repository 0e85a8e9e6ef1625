#pragma once

#include "kom/expr.hpp"
#include "kom/model.hpp"
#include "kom/solver.hpp"
#include "kom/symex.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kom::classifier {

// Per-field classification flags. The implication chain m4 => m3 => m2 => m1
// is enforced when flags are set.
struct FieldClass {
  uint32_t offset = 0;
  int width = 32;
  bool m1 = false;
  bool m2 = false;            // parameter-affected
  bool m3 = false;            // reaches at least one forged type id
  bool m4 = false;            // reaches every probe constant
  bool unknown_limited = false; // solver could not decide the probes
  bool identical_member = false; // non-representative member of a value group
  int witnessing_path = -1;
};

struct ConditionField {
  uint32_t offset = 0;
  std::vector<Expr> constraints; // the path constraints referencing it
};

// Condition requirement digested for the planner: when the guard is a plain
// equality against a constant the value is recorded, other shapes are kept
// as opaque requirements.
struct ConditionReq {
  uint32_t offset = 0;
  int width = 32;
  std::optional<uint32_t> eq_value;
  bool is_type_id = false;
};

enum class DerefClass { None, FixedValue, FullyControllable };

// One canonical-path write, exported so the planner can replay side effects.
struct WriteTemplateEntry {
  enum class Base { KernelObject, ParamPointer, Global, Deref } base = Base::KernelObject;
  int base_param = -1; // param index for KernelObject/ParamPointer bases
  uint32_t offset = 0;
  int width = 32;
  enum class Source { Const, Param, Opaque } source = Source::Opaque;
  uint32_t const_value = 0;
  int param_index = -1;
};

struct SyscallProfile {
  std::string name;
  std::string object_type;
  std::optional<int> object_param;
  std::string reset_before_reuse;
  int m1 = 0, m2 = 0, m3 = 0, m4 = 0, r = 0, i = 0;
  std::optional<int> cmax, cmin; // absent when m1 == 0
  DerefClass deref = DerefClass::None;
  std::optional<uint32_t> deref_field;        // pointer field the deref goes through
  std::optional<uint32_t> deref_fixed_value;  // for fixed-value derefs
  bool deref_downgraded = false;              // solver Unknown forced a downgrade
  symex::ExplorationStats stats;
  std::vector<FieldClass> fields;               // sorted by offset
  std::vector<uint32_t> condition_offsets;      // union over paths, sorted
  std::vector<ConditionReq> condition_reqs;     // canonical path
  std::vector<WriteTemplateEntry> write_template; // canonical path
  std::map<std::string, uint32_t> arg_model;    // canonical path argument model
  std::vector<std::string> param_names;
  int canonical_path = -1;
  std::vector<std::string> diagnostics;      // unknown-limited notes, skipped writes
  std::vector<std::string> unaligned_writes;
  std::vector<std::string> raw_constraints;  // per-path dumps for review
};

// The probe set deciding arbitrary-writability: a field is arbitrary-writable
// iff every probe value is reachable.
std::vector<uint32_t> m4_probe_set(const model::Model& m);

struct WriteClassification {
  bool in_kernel_object = false;
  bool m1 = false, m2 = false, m3 = false, m4 = false;
  bool unknown_limited = false;
  bool definite_restriction = false; // some probe is provably unreachable
};

WriteClassification classify_write(ExprPool* pool, const Solver* solver,
                                   const symex::WriteEvent& w,
                                   const std::vector<Expr>& path_constraints,
                                   const model::Model& m);

std::vector<ConditionField> extract_condition_fields(ExprPool* pool,
                                                     const symex::PathRecord& path);

DerefClass classify_deref(ExprPool* pool, const Solver* solver,
                          const std::vector<symex::PathRecord>& paths,
                          const model::Model& m, std::optional<uint32_t>* field,
                          std::optional<uint32_t>* fixed_value, bool* downgraded);

SyscallProfile build_profile(ExprPool* pool, const Solver* solver,
                             const std::string& name,
                             const model::SyscallManifest& manifest,
                             const ir::Function& fn,
                             const std::vector<symex::PathRecord>& paths,
                             const symex::ExplorationStats& stats,
                             const model::Model& m);

} // namespace kom::classifier
