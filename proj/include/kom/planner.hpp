#pragma once

#include "kom/classifier.hpp"
#include "kom/kernelsim.hpp"
#include "kom/model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kom::planner {

// Digest of one syscall profile as the chain search consumes it.

struct FieldCap {
  uint32_t offset = 0;
  int width = 32;
  enum class Kind { Const, Param, Opaque } kind = Kind::Opaque;
  uint32_t const_value = 0;
  int param_index = -1;
  bool can_typeid = false;    // value can be a forged type id
  bool can_arbitrary = false; // value can be any probe constant
};

struct SyscallModel {
  std::string name;
  std::string object_type;
  std::optional<int> object_param;
  std::vector<FieldCap> fields; // modifiable in-object fields, ascending offset
  std::vector<classifier::ConditionReq> conds;
  std::vector<classifier::WriteTemplateEntry> template_writes;
  std::map<std::string, uint32_t> arg_model;
  std::vector<std::string> param_names;
  std::string reset_before_reuse;
  classifier::DerefClass deref = classifier::DerefClass::None;
  std::optional<uint32_t> deref_field;
  std::optional<uint32_t> deref_fixed_value;
  int best_m3 = 0; // per-syscall M3 count (for type ranking)
};

SyscallModel digest(const classifier::SyscallProfile& profile,
                    const model::SyscallManifest& manifest);

// Type selection over the digested corpus.
struct TypeSelection {
  struct MaliciousEntry {
    std::string type;
    int m3 = 0;
  };
  std::vector<MaliciousEntry> malicious; // descending m3, then name
  struct AccompliceEntry {
    std::string type;
    classifier::DerefClass deref = classifier::DerefClass::None;
  };
  std::vector<AccompliceEntry> accomplice; // deref != none, by name
};
TypeSelection select_types(const std::vector<SyscallModel>& corpus);

// One hop of the depth-first walk: a syscall invocation and the modifiable
// field it uses. Non-final hops advance the forged-object base by the field
// offset; the final hop writes at base + offset == target.
struct Hop {
  int syscall = -1;
  uint32_t field_offset = 0;
};

struct Solution {
  std::vector<Hop> hops;
};

struct PlanProblem {
  uint32_t start = 0;  // S: start of the malicious kernel object
  uint32_t target = 0; // D: target memory location
  std::string malicious_type;
  std::vector<SyscallModel> syscalls; // sorted by name
  int max_depth = 8;
  uint32_t memory_bound = 0;
  // bytes known before the first step (allocator header etc.)
  std::map<uint32_t, uint8_t> initial_bytes;
};

struct SearchOutcome {
  std::vector<Solution> solutions;
  bool depth_limited = false;
  std::string no_solution_reason;
};

// The depth-first enumeration: first syscall operates on the malicious type
// with its conditions genuinely satisfied by the initial state; later
// syscalls must have every condition field covered by the previous step's
// modifiable fields with a compatible value class.
SearchOutcome search_chains(const PlanProblem& p);

// Minimal length, ties broken by lexicographically smallest
// (syscall name, field offset) sequence.
std::optional<Solution> optimal_chain(const PlanProblem& p,
                                      const std::vector<Solution>& solutions);

// Layered search returning one shortest solution without materializing the
// full solution set (the RQ2 sweep walks targets hundreds of bytes out).
std::optional<Solution> shortest_solution(const PlanProblem& p);

// All solutions of the minimal depth (up to `cap`); with
// `arbitrary_final_only` the final write must go through an
// arbitrary-writable field.
std::vector<Solution> shortest_solutions(const PlanProblem& p, size_t cap,
                                         bool arbitrary_final_only);

// Addresses in (S, S+range] for which some chain exists (memoized
// reachability; equivalent to exhaustive search construction).
std::vector<uint32_t> reachable_offsets(const PlanProblem& p, uint32_t range);

// ---------------------------------------------------------------------------
// Full attack workflow: create malicious + accomplice objects, forge the
// unmet condition fields and the pointer field, dereference.

struct SetupStep {
  std::string syscall;
  std::vector<uint32_t> args;
};

struct AttackProblem {
  std::string malicious_type;
  uint32_t malicious_address = 0;
  std::map<std::string, uint32_t> malicious_create_args;
  std::string accomplice_type;
  uint32_t accomplice_address = 0;
  std::vector<SetupStep> pre_create; // before the accomplice creator
  std::map<std::string, uint32_t> accomplice_create_args;
  std::string deref_syscall;
  uint32_t final_value = 0;
  int max_depth = 8;
};

struct PlanResult {
  kernelsim::AttackChain chain;
  int solution_count = 0;
  bool depth_limited = false;
  std::string error; // non-empty: no chain produced
};

PlanResult plan_attack(const model::Model& m, const std::vector<SyscallModel>& corpus,
                       const AttackProblem& problem);

// Raw single-target planning: forge steps only, starting from a freshly
// allocated malicious object. `shortest_only` skips the full enumeration and
// plans over one shortest walk.
PlanResult plan_simple(const model::Model& m, const std::vector<SyscallModel>& corpus,
                       const std::string& malicious_type, uint32_t start,
                       uint32_t target, int max_depth, bool shortest_only = false);

struct Rq2Row {
  uint32_t offset = 0; // relative to S
  bool reachable = false;
  int chain_length = 0;
  bool uses_reset = false;
};

std::vector<Rq2Row> rq2_sweep(const model::Model& m,
                              const std::vector<SyscallModel>& corpus,
                              const std::string& malicious_type, uint32_t start,
                              uint32_t range, int max_depth);

} // namespace kom::planner
