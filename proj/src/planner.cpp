#include "kom/planner.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

namespace kom::planner {

using classifier::ConditionReq;
using classifier::DerefClass;
using classifier::WriteTemplateEntry;
using kernelsim::ArgValue;
using kernelsim::AttackChain;
using kernelsim::ChainStep;

SyscallModel digest(const classifier::SyscallProfile& profile,
                    const model::SyscallManifest& manifest) {
  SyscallModel s;
  s.name = profile.name;
  s.object_type = profile.object_type;
  s.object_param = manifest.object_param;
  s.conds = profile.condition_reqs;
  s.template_writes = profile.write_template;
  s.arg_model = profile.arg_model;
  s.param_names = profile.param_names;
  s.reset_before_reuse = manifest.reset_before_reuse;
  s.deref = profile.deref;
  s.deref_field = profile.deref_field;
  s.deref_fixed_value = profile.deref_fixed_value;
  s.best_m3 = profile.m3;
  for (const classifier::FieldClass& f : profile.fields) {
    FieldCap cap;
    cap.offset = f.offset;
    cap.width = f.width;
    cap.can_typeid = f.m3 || f.m4;
    cap.can_arbitrary = f.m4;
    cap.kind = FieldCap::Kind::Opaque;
    for (const WriteTemplateEntry& w : profile.write_template) {
      if (w.base != WriteTemplateEntry::Base::KernelObject || w.offset != f.offset)
        continue;
      if (w.source == WriteTemplateEntry::Source::Const) {
        cap.kind = FieldCap::Kind::Const;
        cap.const_value = w.const_value;
      } else if (w.source == WriteTemplateEntry::Source::Param) {
        cap.kind = FieldCap::Kind::Param;
        cap.param_index = w.param_index;
      }
    }
    s.fields.push_back(cap);
  }
  std::sort(s.fields.begin(), s.fields.end(),
            [](const FieldCap& a, const FieldCap& b) { return a.offset < b.offset; });
  return s;
}

TypeSelection select_types(const std::vector<SyscallModel>& corpus) {
  std::map<std::string, int> best_m3;
  std::map<std::string, DerefClass> best_deref;
  for (const SyscallModel& s : corpus) {
    if (s.object_type.empty()) continue;
    int& m3 = best_m3[s.object_type];
    m3 = std::max(m3, s.best_m3);
    DerefClass& d = best_deref[s.object_type];
    if (static_cast<int>(s.deref) > static_cast<int>(d)) d = s.deref;
  }
  TypeSelection sel;
  for (const auto& [type, m3] : best_m3)
    if (m3 >= 1) sel.malicious.push_back({type, m3});
  std::sort(sel.malicious.begin(), sel.malicious.end(),
            [](const TypeSelection::MaliciousEntry& a, const TypeSelection::MaliciousEntry& b) {
              if (a.m3 != b.m3) return a.m3 > b.m3;
              return a.type < b.type;
            });
  for (const auto& [type, deref] : best_deref)
    if (deref != DerefClass::None) sel.accomplice.push_back({type, deref});
  return sel;
}

namespace {

// value-class coverage: a previous-step field can plant a required condition
// value when the write is a matching constant, or a parameter-driven field
// whose reachable set covers the value's class.
bool field_covers(const FieldCap& f, uint32_t value, bool is_type_id) {
  switch (f.kind) {
  case FieldCap::Kind::Const: return f.const_value == value;
  case FieldCap::Kind::Param:
    return is_type_id ? (f.can_typeid || f.can_arbitrary) : f.can_arbitrary;
  case FieldCap::Kind::Opaque: return false;
  }
  return false;
}

bool aligned_after(const SyscallModel& next, uint32_t next_base,
                   const SyscallModel& prev, uint32_t prev_base) {
  for (const ConditionReq& c : next.conds) {
    if (!c.eq_value) return false;
    bool covered = false;
    for (const FieldCap& f : prev.fields) {
      if (prev_base + f.offset == next_base + c.offset && f.width == c.width &&
          field_covers(f, *c.eq_value, c.is_type_id)) {
        covered = true;
        break;
      }
    }
    if (!covered) return false;
  }
  return true;
}

bool initial_satisfies(const SyscallModel& s, uint32_t base,
                       const std::map<uint32_t, uint8_t>& bytes) {
  for (const ConditionReq& c : s.conds) {
    if (!c.eq_value) return false;
    int n = c.width == 32 ? 4 : 1;
    uint32_t have = 0;
    for (int b = 0; b < n; b++) {
      auto it = bytes.find(base + c.offset + b);
      uint8_t byte = it == bytes.end() ? 0 : it->second;
      have |= static_cast<uint32_t>(byte) << (8 * b);
    }
    if (have != *c.eq_value) return false;
  }
  return true;
}

} // namespace

SearchOutcome search_chains(const PlanProblem& p) {
  SearchOutcome out;
  if (p.target < p.start) {
    out.no_solution_reason = "target below start";
    return out;
  }
  uint32_t bound = p.memory_bound ? p.memory_bound : 0xFFFFFFFFu;

  struct Key {
    uint32_t base;
    int prev_sys;
    uint32_t prev_field;
    int remaining;
    bool operator<(const Key& o) const {
      return std::tie(base, prev_sys, prev_field, remaining) <
             std::tie(o.base, o.prev_sys, o.prev_field, o.remaining);
    }
  };
  struct Entry {
    std::vector<Solution> sols;
    bool limited = false;
  };
  std::map<Key, Entry> memo;

  // suffix solutions from `base` given the previous hop
  std::function<const Entry&(uint32_t, int, uint32_t, int)> expand =
      [&](uint32_t base, int prev_sys, uint32_t prev_field, int remaining) -> const Entry& {
    Key key{base, prev_sys, prev_field, remaining};
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    Entry entry;
    uint32_t prev_base = base - prev_field;
    for (size_t si = 0; si < p.syscalls.size(); si++) {
      const SyscallModel& s = p.syscalls[si];
      if (s.fields.empty()) continue;
      if (prev_sys < 0) {
        if (s.object_type != p.malicious_type) continue;
        if (!initial_satisfies(s, base, p.initial_bytes)) continue;
      } else {
        if (!aligned_after(s, base, p.syscalls[prev_sys], prev_base)) continue;
      }
      for (const FieldCap& f : s.fields) {
        uint32_t tgt = base + f.offset;
        if (tgt > bound) continue;
        if (tgt == p.target) {
          Solution sol;
          sol.hops.push_back({static_cast<int>(si), f.offset});
          entry.sols.push_back(std::move(sol));
          continue;
        }
        if (tgt > p.target) continue; // prune: overshoot at this field
        if (remaining <= 1) {
          entry.limited = true;
          continue;
        }
        const Entry& sub = expand(tgt, static_cast<int>(si), f.offset, remaining - 1);
        if (sub.limited) entry.limited = true;
        for (const Solution& suffix : sub.sols) {
          Solution sol;
          sol.hops.push_back({static_cast<int>(si), f.offset});
          sol.hops.insert(sol.hops.end(), suffix.hops.begin(), suffix.hops.end());
          entry.sols.push_back(std::move(sol));
        }
      }
    }
    return memo.emplace(key, std::move(entry)).first->second;
  };

  const Entry& top = expand(p.start, -1, 0, p.max_depth);
  out.solutions = top.sols;
  out.depth_limited = top.limited;
  if (out.solutions.empty() && out.no_solution_reason.empty())
    out.no_solution_reason = out.depth_limited ? "no solution within depth limit"
                                               : "no solution";
  return out;
}

std::optional<Solution> optimal_chain(const PlanProblem& p,
                                      const std::vector<Solution>& solutions) {
  const Solution* best = nullptr;
  auto lex_key = [&](const Solution& s) {
    std::vector<std::pair<std::string, uint32_t>> k;
    for (const Hop& h : s.hops) k.push_back({p.syscalls[h.syscall].name, h.field_offset});
    return k;
  };
  for (const Solution& s : solutions) {
    if (!best || s.hops.size() < best->hops.size() ||
        (s.hops.size() == best->hops.size() && lex_key(s) < lex_key(*best)))
      best = &s;
  }
  if (!best) return std::nullopt;
  return *best;
}

std::vector<Solution> shortest_solutions(const PlanProblem& p, size_t cap,
                                         bool arbitrary_final_only) {
  std::vector<Solution> found;
  if (p.target < p.start) return found;
  uint32_t bound = p.memory_bound ? p.memory_bound : 0xFFFFFFFFu;
  struct Node {
    uint32_t base;
    int prev_sys;
    uint32_t prev_field;
    int parent;
  };
  std::vector<Node> nodes{{p.start, -1, 0, -1}};
  std::set<std::tuple<uint32_t, int, uint32_t>> seen{{p.start, -1, 0}};
  size_t layer_begin = 0, layer_end = 1;
  for (int depth = 1; depth <= p.max_depth; depth++) {
    for (size_t ni = layer_begin; ni < layer_end; ni++) {
      Node node = nodes[ni];
      uint32_t prev_base = node.base - node.prev_field;
      for (size_t si = 0; si < p.syscalls.size(); si++) {
        const SyscallModel& s = p.syscalls[si];
        if (s.fields.empty()) continue;
        if (node.prev_sys < 0) {
          if (s.object_type != p.malicious_type) continue;
          if (!initial_satisfies(s, node.base, p.initial_bytes)) continue;
        } else if (!aligned_after(s, node.base, p.syscalls[node.prev_sys], prev_base)) {
          continue;
        }
        for (const FieldCap& f : s.fields) {
          uint32_t tgt = node.base + f.offset;
          if (tgt > bound) continue;
          if (tgt == p.target) {
            if (arbitrary_final_only && !f.can_arbitrary) continue;
            if (found.size() < cap) {
              Solution sol;
              sol.hops.push_back({static_cast<int>(si), f.offset});
              for (int cur = static_cast<int>(ni); cur > 0; cur = nodes[cur].parent)
                sol.hops.push_back({nodes[cur].prev_sys, nodes[cur].prev_field});
              std::reverse(sol.hops.begin(), sol.hops.end());
              found.push_back(std::move(sol));
            }
            continue;
          }
          if (tgt > p.target) continue;
          auto key = std::make_tuple(tgt, static_cast<int>(si), f.offset);
          if (!seen.count(key)) {
            seen.insert(key);
            nodes.push_back({tgt, static_cast<int>(si), f.offset,
                             static_cast<int>(ni)});
          }
        }
      }
    }
    if (!found.empty()) return found; // all solutions of the minimal depth
    layer_begin = layer_end;
    layer_end = nodes.size();
    if (layer_begin == layer_end) break;
  }
  return found;
}

std::optional<Solution> shortest_solution(const PlanProblem& p) {
  std::vector<Solution> found = shortest_solutions(p, 1, false);
  if (found.empty()) return std::nullopt;
  return found[0];
}

std::vector<uint32_t> reachable_offsets(const PlanProblem& p, uint32_t range) {
  std::set<uint32_t> reachable;
  // forward closure over (base, prev hop) states within the depth budget
  struct State {
    uint32_t base;
    int prev_sys;
    uint32_t prev_field;
  };
  std::set<std::tuple<uint32_t, int, uint32_t>> seen;
  std::vector<State> frontier{{p.start, -1, 0}};
  seen.insert({p.start, -1, 0});
  uint32_t limit = p.start + range;
  for (int depth = 1; depth <= p.max_depth && !frontier.empty(); depth++) {
    std::vector<State> next;
    for (const State& st : frontier) {
      uint32_t prev_base = st.base - st.prev_field;
      for (size_t si = 0; si < p.syscalls.size(); si++) {
        const SyscallModel& s = p.syscalls[si];
        if (s.fields.empty()) continue;
        if (st.prev_sys < 0) {
          if (s.object_type != p.malicious_type) continue;
          if (!initial_satisfies(s, st.base, p.initial_bytes)) continue;
        } else if (!aligned_after(s, st.base, p.syscalls[st.prev_sys], prev_base)) {
          continue;
        }
        for (const FieldCap& f : s.fields) {
          uint32_t tgt = st.base + f.offset;
          if (tgt > p.start && tgt <= limit) reachable.insert(tgt);
          if (tgt > st.base && tgt < limit) {
            auto key = std::make_tuple(tgt, static_cast<int>(si), f.offset);
            if (!seen.count(key)) {
              seen.insert(key);
              next.push_back({tgt, static_cast<int>(si), f.offset});
            }
          } else if (tgt == st.base) {
            // zero-offset hop: same base, new predecessor context
            auto key = std::make_tuple(tgt, static_cast<int>(si), f.offset);
            if (!seen.count(key)) {
              seen.insert(key);
              next.push_back({tgt, static_cast<int>(si), f.offset});
            }
          }
        }
      }
    }
    frontier = std::move(next);
  }
  return {reachable.begin(), reachable.end()};
}

// ---------------------------------------------------------------------------
// Chain instantiation and replay

namespace {

struct VirtualMemory {
  std::map<uint32_t, int> bytes; // 0..255, or -1 for unknown

  void write(uint32_t addr, uint32_t value, int width, bool known) {
    int n = width == 32 ? 4 : 1;
    for (int b = 0; b < n; b++)
      bytes[addr + b] = known ? static_cast<int>((value >> (8 * b)) & 0xFF) : -1;
  }
  std::optional<uint32_t> read(uint32_t addr, int width) const {
    int n = width == 32 ? 4 : 1;
    uint32_t v = 0;
    for (int b = 0; b < n; b++) {
      auto it = bytes.find(addr + b);
      int byte = it == bytes.end() ? 0 : it->second;
      if (byte < 0) return std::nullopt;
      v |= static_cast<uint32_t>(byte) << (8 * b);
    }
    return v;
  }
};

struct BuiltStep {
  const SyscallModel* model = nullptr;
  ChainStep step;
  std::vector<uint32_t> concrete_args; // placeholders resolved via defaults
};

class ChainBuilder {
public:
  ChainBuilder(const model::Model& m, const std::vector<SyscallModel>& corpus)
      : model_(m), corpus_(corpus) {}

  const SyscallModel* find(const std::string& name) const {
    for (const SyscallModel& s : corpus_)
      if (s.name == name) return &s;
    return nullptr;
  }

  // default argument vector from the canonical-path model
  std::vector<uint32_t> default_args(const SyscallModel& s) const {
    std::vector<uint32_t> args;
    for (const std::string& p : s.param_names) {
      auto it = s.arg_model.find(p);
      args.push_back(it == s.arg_model.end() ? 0 : it->second);
    }
    return args;
  }

  bool append(const SyscallModel& s, uint32_t base, std::optional<uint32_t> field,
              const std::map<int, uint32_t>& overrides,
              const std::map<int, std::string>& placeholder_params,
              const std::string& role, std::string* error) {
    BuiltStep b;
    b.model = &s;
    b.step.syscall = s.name;
    b.step.base = base;
    b.step.field_offset = field;
    b.step.role = role;
    b.concrete_args = default_args(s);
    if (s.object_param) {
      if (static_cast<size_t>(*s.object_param) >= b.concrete_args.size()) {
        if (error) *error = s.name + ": object parameter index out of range";
        return false;
      }
      b.concrete_args[*s.object_param] = base;
    }
    for (const auto& [idx, v] : overrides) {
      if (idx < 0 || static_cast<size_t>(idx) >= b.concrete_args.size()) {
        if (error) *error = s.name + ": argument index out of range";
        return false;
      }
      b.concrete_args[idx] = v;
    }
    for (size_t ai = 0; ai < b.concrete_args.size(); ai++) {
      ArgValue av;
      auto pit = placeholder_params.find(static_cast<int>(ai));
      if (pit != placeholder_params.end()) av.placeholder = pit->second;
      else av.constant = b.concrete_args[ai];
      b.step.args.push_back(av);
    }
    steps_.push_back(std::move(b));
    return true;
  }

  // inserts reset steps before repeated uses of syscalls that declare one
  bool insert_resets(std::string* error) {
    std::vector<BuiltStep> out;
    std::set<std::string> used;
    for (BuiltStep& b : steps_) {
      if (used.count(b.model->name) && !b.model->reset_before_reuse.empty()) {
        const SyscallModel* reset = find(b.model->reset_before_reuse);
        if (!reset) {
          if (error)
            *error = "reset syscall '" + b.model->reset_before_reuse + "' not in corpus";
          return false;
        }
        BuiltStep r;
        r.model = reset;
        r.step.syscall = reset->name;
        r.step.base = b.step.base;
        r.step.role = "service";
        r.concrete_args = default_args(*reset);
        if (reset->object_param &&
            static_cast<size_t>(*reset->object_param) < r.concrete_args.size())
          r.concrete_args[*reset->object_param] = b.step.base;
        for (uint32_t v : r.concrete_args) {
          ArgValue av;
          av.constant = v;
          r.step.args.push_back(av);
        }
        out.push_back(std::move(r));
      }
      used.insert(b.model->name);
      out.push_back(std::move(b));
    }
    steps_ = std::move(out);
    return true;
  }

  // replays condition checks and template writes over a virtual memory
  bool replay(const std::map<uint32_t, uint8_t>& initial, std::string* why) const {
    VirtualMemory vm;
    for (const auto& [a, b] : initial) vm.bytes[a] = b;
    for (const BuiltStep& b : steps_) {
      const SyscallModel& s = *b.model;
      uint32_t base = b.step.base;
      for (const ConditionReq& c : s.conds) {
        if (!c.eq_value) {
          if (why) *why = s.name + ": opaque condition requirement";
          return false;
        }
        auto have = vm.read(base + c.offset, c.width);
        if (!have || *have != *c.eq_value) {
          if (why)
            *why = s.name + " at base " + std::to_string(base) +
                   ": condition at offset " + std::to_string(c.offset) + " unmet";
          return false;
        }
      }
      for (const WriteTemplateEntry& w : s.template_writes) {
        if (w.base == WriteTemplateEntry::Base::Global ||
            w.base == WriteTemplateEntry::Base::Deref)
          continue;
        if (w.base_param < 0 ||
            static_cast<size_t>(w.base_param) >= b.concrete_args.size())
          continue;
        uint32_t addr = b.concrete_args[w.base_param] + w.offset;
        switch (w.source) {
        case WriteTemplateEntry::Source::Const:
          vm.write(addr, w.const_value, w.width, true);
          break;
        case WriteTemplateEntry::Source::Param:
          if (w.param_index >= 0 &&
              static_cast<size_t>(w.param_index) < b.concrete_args.size())
            vm.write(addr, b.concrete_args[w.param_index], w.width, true);
          else
            vm.write(addr, 0, w.width, false);
          break;
        case WriteTemplateEntry::Source::Opaque:
          vm.write(addr, 0, w.width, false);
          break;
        }
      }
    }
    return true;
  }

  // final value of a word in the replayed memory
  std::optional<uint32_t> final_word(const std::map<uint32_t, uint8_t>& initial,
                                     uint32_t addr) const {
    VirtualMemory vm;
    for (const auto& [a, b] : initial) vm.bytes[a] = b;
    for (const BuiltStep& b : steps_) {
      for (const WriteTemplateEntry& w : b.model->template_writes) {
        if (w.base == WriteTemplateEntry::Base::Global ||
            w.base == WriteTemplateEntry::Base::Deref)
          continue;
        if (w.base_param < 0 ||
            static_cast<size_t>(w.base_param) >= b.concrete_args.size())
          continue;
        uint32_t a = b.concrete_args[w.base_param] + w.offset;
        if (w.source == WriteTemplateEntry::Source::Const)
          vm.write(a, w.const_value, w.width, true);
        else if (w.source == WriteTemplateEntry::Source::Param && w.param_index >= 0)
          vm.write(a, b.concrete_args[w.param_index], w.width, true);
        else
          vm.write(a, 0, w.width, false);
      }
    }
    return vm.read(addr, 32);
  }

  AttackChain take(std::map<std::string, uint32_t> defaults, int solution_count,
                   bool depth_limited) {
    AttackChain chain;
    for (BuiltStep& b : steps_) chain.steps.push_back(std::move(b.step));
    chain.default_bindings = std::move(defaults);
    chain.solution_count = solution_count;
    chain.depth_limited = depth_limited;
    return chain;
  }

  size_t size() const { return steps_.size(); }
  void truncate(size_t n) { steps_.resize(n); }

private:
  const model::Model& model_;
  const std::vector<SyscallModel>& corpus_;
  std::vector<BuiltStep> steps_;
};

// Computes the per-step argument overrides that plant the next step's
// condition values and the final target value. Returns false when a needed
// plant is not expressible (conflicting assignments, const mismatch).
struct WalkInstantiation {
  // per hop: argument overrides (param index -> value)
  std::vector<std::map<int, uint32_t>> overrides;
  // final hop param carrying the target value (placeholder candidate)
  int final_param = -1;
};

bool instantiate_walk(const PlanProblem& p, const Solution& sol, uint32_t final_value,
                      bool final_is_type_id, WalkInstantiation* out, std::string* why) {
  out->overrides.assign(sol.hops.size(), {});
  std::vector<uint32_t> bases(sol.hops.size());
  uint32_t base = p.start;
  for (size_t i = 0; i < sol.hops.size(); i++) {
    bases[i] = base;
    if (i + 1 < sol.hops.size()) base += sol.hops[i].field_offset;
  }
  auto assign = [&](size_t hop, int param, uint32_t value) -> bool {
    auto& ov = out->overrides[hop];
    auto it = ov.find(param);
    if (it != ov.end() && it->second != value) {
      if (why) *why = "conflicting plant assignments";
      return false;
    }
    ov[param] = value;
    return true;
  };
  // plants: step i covers step i+1's conditions
  for (size_t i = 0; i + 1 < sol.hops.size(); i++) {
    const SyscallModel& cur = p.syscalls[sol.hops[i].syscall];
    const SyscallModel& nxt = p.syscalls[sol.hops[i + 1].syscall];
    uint32_t next_base = bases[i + 1];
    for (const ConditionReq& c : nxt.conds) {
      if (!c.eq_value) {
        if (why) *why = nxt.name + ": opaque condition";
        return false;
      }
      bool placed = false;
      for (const FieldCap& f : cur.fields) {
        if (bases[i] + f.offset != next_base + c.offset || f.width != c.width) continue;
        if (!field_covers(f, *c.eq_value, c.is_type_id)) continue;
        if (f.kind == FieldCap::Kind::Const) {
          placed = f.const_value == *c.eq_value;
        } else {
          placed = assign(i, f.param_index, *c.eq_value);
          if (!placed) return false;
        }
        if (placed) break;
      }
      if (!placed) {
        if (why) *why = nxt.name + ": condition not plantable";
        return false;
      }
    }
  }
  // final write value
  const Hop& last = sol.hops.back();
  const SyscallModel& fin = p.syscalls[last.syscall];
  for (const FieldCap& f : fin.fields) {
    if (f.offset != last.field_offset) continue;
    if (f.kind == FieldCap::Kind::Const) {
      if (f.const_value != final_value) {
        if (why) *why = fin.name + ": final field writes a fixed value";
        return false;
      }
      out->final_param = -1;
      return true;
    }
    if (f.kind == FieldCap::Kind::Param) {
      if (!field_covers(f, final_value, final_is_type_id)) {
        if (why) *why = fin.name + ": final field cannot hold the target value";
        return false;
      }
      if (!assign(sol.hops.size() - 1, f.param_index, final_value)) return false;
      out->final_param = f.param_index;
      return true;
    }
  }
  if (why) *why = fin.name + ": final field value not expressible";
  return false;
}

std::vector<const Solution*> ordered_solutions(const PlanProblem& p,
                                               const std::vector<Solution>& sols,
                                               size_t cap) {
  std::vector<const Solution*> ptrs;
  for (const Solution& s : sols) ptrs.push_back(&s);
  auto lex_key = [&](const Solution& s) {
    std::vector<std::pair<std::string, uint32_t>> k;
    for (const Hop& h : s.hops) k.push_back({p.syscalls[h.syscall].name, h.field_offset});
    return k;
  };
  std::sort(ptrs.begin(), ptrs.end(), [&](const Solution* a, const Solution* b) {
    if (a->hops.size() != b->hops.size()) return a->hops.size() < b->hops.size();
    return lex_key(*a) < lex_key(*b);
  });
  if (ptrs.size() > cap) ptrs.resize(cap);
  return ptrs;
}

std::map<uint32_t, uint8_t> allocator_header_bytes(const SyscallModel& alloc,
                                                   uint32_t chunk, uint32_t size) {
  // replays the allocator's own template with (chunk, size) arguments
  std::map<uint32_t, uint8_t> bytes;
  std::vector<uint32_t> args(alloc.param_names.size(), 0);
  // convention: the allocator takes (chunk pointer, size)
  if (!args.empty()) args[0] = chunk;
  if (args.size() > 1) args[1] = size;
  for (const WriteTemplateEntry& w : alloc.template_writes) {
    if (w.base_param < 0 || static_cast<size_t>(w.base_param) >= args.size()) continue;
    uint32_t addr = args[w.base_param] + w.offset;
    uint32_t value = 0;
    if (w.source == WriteTemplateEntry::Source::Const) value = w.const_value;
    else if (w.source == WriteTemplateEntry::Source::Param && w.param_index >= 0)
      value = args[w.param_index];
    else continue;
    int n = w.width == 32 ? 4 : 1;
    for (int b = 0; b < n; b++)
      bytes[addr + b] = static_cast<uint8_t>((value >> (8 * b)) & 0xFF);
  }
  return bytes;
}

} // namespace

PlanResult plan_simple(const model::Model& m, const std::vector<SyscallModel>& corpus,
                       const std::string& malicious_type, uint32_t start,
                       uint32_t target, int max_depth, bool shortest_only) {
  PlanResult result;
  const model::KernelObjectTypeSpec* type = m.type_named(malicious_type);
  if (!type) {
    result.error = "unknown malicious type '" + malicious_type + "'";
    return result;
  }

  PlanProblem p;
  p.start = start;
  p.target = target;
  p.malicious_type = malicious_type;
  p.max_depth = max_depth;
  p.memory_bound = m.layout.kernel_region.end;
  for (const SyscallModel& s : corpus) p.syscalls.push_back(s);
  std::sort(p.syscalls.begin(), p.syscalls.end(),
            [](const SyscallModel& a, const SyscallModel& b) { return a.name < b.name; });

  ChainBuilder builder(m, corpus);
  const SyscallModel* alloc = builder.find("module_object_allocate");
  if (alloc)
    p.initial_bytes = allocator_header_bytes(*alloc, start, type->size);

  std::vector<Solution> found_solutions;
  if (shortest_only) {
    if (target < start) {
      result.error = "target below start";
      return result;
    }
    found_solutions = shortest_solutions(p, 64, true);
    if (found_solutions.empty()) {
      result.error = "no solution within depth limit";
      return result;
    }
    result.solution_count = static_cast<int>(found_solutions.size());
  } else {
    SearchOutcome found = search_chains(p);
    result.depth_limited = found.depth_limited;
    result.solution_count = static_cast<int>(found.solutions.size());
    if (found.solutions.empty()) {
      result.error = found.no_solution_reason;
      return result;
    }
    found_solutions = std::move(found.solutions);
  }

  for (const Solution* sol : ordered_solutions(p, found_solutions, 64)) {
    WalkInstantiation inst;
    std::string why;
    if (!instantiate_walk(p, *sol, 0, false, &inst, &why)) continue;
    ChainBuilder b(m, corpus);
    if (alloc) {
      std::map<int, uint32_t> ov;
      if (alloc->param_names.size() > 1) ov[1] = type->size;
      ov[0] = start;
      b.append(*alloc, start, std::nullopt, ov, {}, "setup", nullptr);
    }
    uint32_t base = start;
    bool ok = true;
    for (size_t i = 0; i < sol->hops.size() && ok; i++) {
      const SyscallModel& s = p.syscalls[sol->hops[i].syscall];
      std::map<int, std::string> placeholders;
      if (i + 1 == sol->hops.size() && inst.final_param >= 0)
        placeholders[inst.final_param] = "target_value";
      ok = b.append(s, base, sol->hops[i].field_offset, inst.overrides[i], placeholders,
                    "forge", &result.error);
      base += sol->hops[i].field_offset;
    }
    if (!ok) continue;
    if (!b.insert_resets(&result.error)) continue;
    if (!b.replay(p.initial_bytes, &why)) continue;
    result.chain = b.take({{"target_value", 0}}, result.solution_count,
                          result.depth_limited);
    result.error.clear();
    return result;
  }
  if (result.error.empty()) result.error = "no instantiable solution";
  return result;
}

PlanResult plan_attack(const model::Model& m, const std::vector<SyscallModel>& corpus,
                       const AttackProblem& problem) {
  PlanResult result;
  ChainBuilder probe_builder(m, corpus);

  const model::KernelObjectTypeSpec* mal_type = m.type_named(problem.malicious_type);
  const model::KernelObjectTypeSpec* acc_type = m.type_named(problem.accomplice_type);
  if (!mal_type || !acc_type) {
    result.error = "unknown malicious or accomplice type";
    return result;
  }
  const SyscallModel* alloc = probe_builder.find("module_object_allocate");
  const SyscallModel* mal_creator = mal_type->creator.empty()
                                        ? nullptr
                                        : probe_builder.find(mal_type->creator);
  const SyscallModel* acc_creator = acc_type->creator.empty()
                                        ? nullptr
                                        : probe_builder.find(acc_type->creator);
  const SyscallModel* deref = probe_builder.find(problem.deref_syscall);
  if (!alloc || !mal_creator || !acc_creator || !deref) {
    result.error = "corpus lacks allocator, creators or deref syscall";
    return result;
  }
  if (deref->deref == DerefClass::None || !deref->deref_field) {
    result.error = problem.deref_syscall + " has no pointer dereference";
    return result;
  }

  auto args_by_name = [&](const SyscallModel& s,
                          const std::map<std::string, uint32_t>& named) {
    std::map<int, uint32_t> ov;
    for (const auto& [name, value] : named) {
      for (size_t i = 0; i < s.param_names.size(); i++)
        if (s.param_names[i] == name) ov[static_cast<int>(i)] = value;
    }
    return ov;
  };

  // accomplice post-creation state decides which deref conditions are unmet
  auto acc_create_ov = args_by_name(*acc_creator, problem.accomplice_create_args);
  std::vector<uint32_t> acc_args;
  {
    for (size_t i = 0; i < acc_creator->param_names.size(); i++) {
      auto it = acc_create_ov.find(static_cast<int>(i));
      if (it != acc_create_ov.end()) acc_args.push_back(it->second);
      else {
        auto mit = acc_creator->arg_model.find(acc_creator->param_names[i]);
        acc_args.push_back(mit == acc_creator->arg_model.end() ? 0 : mit->second);
      }
    }
    if (acc_creator->object_param) acc_args[*acc_creator->object_param] = problem.accomplice_address;
  }
  std::map<uint32_t, uint32_t> acc_state; // offset -> value after creation
  for (const WriteTemplateEntry& w : acc_creator->template_writes) {
    if (w.base != WriteTemplateEntry::Base::KernelObject) continue;
    if (w.source == WriteTemplateEntry::Source::Const) acc_state[w.offset] = w.const_value;
    else if (w.source == WriteTemplateEntry::Source::Param && w.param_index >= 0 &&
             static_cast<size_t>(w.param_index) < acc_args.size())
      acc_state[w.offset] = acc_args[w.param_index];
  }

  struct Target {
    uint32_t address;
    uint32_t value;
    bool is_pointer;
  };
  std::vector<Target> targets;
  targets.push_back(
      {problem.accomplice_address + *deref->deref_field, problem.final_value, true});
  for (const ConditionReq& c : deref->conds) {
    if (!c.eq_value) {
      result.error = problem.deref_syscall + ": opaque condition requirement";
      return result;
    }
    auto it = acc_state.find(c.offset);
    if (it != acc_state.end() && it->second == *c.eq_value) continue; // genuine
    targets.push_back({problem.accomplice_address + c.offset, *c.eq_value, false});
  }

  // per-target walk problem rooted at the malicious object
  PlanProblem p;
  p.start = problem.malicious_address;
  p.malicious_type = problem.malicious_type;
  p.max_depth = problem.max_depth;
  p.memory_bound = m.layout.kernel_region.end;
  for (const SyscallModel& s : corpus) p.syscalls.push_back(s);
  std::sort(p.syscalls.begin(), p.syscalls.end(),
            [](const SyscallModel& a, const SyscallModel& b) { return a.name < b.name; });
  p.initial_bytes = allocator_header_bytes(*alloc, problem.malicious_address, mal_type->size);

  // Iterative deepening keeps the enumeration small: the first depth at
  // which every target has a walk is tried first, widening up to the limit.
  std::vector<std::vector<Solution>> per_target_sols(targets.size());
  std::vector<std::vector<const Solution*>> per_target(targets.size());
  int total_solutions = 0;

  // target orders: pointer walk first is preferred, but every permutation is
  // tried until the replay accepts one
  std::vector<std::vector<size_t>> orders;
  {
    std::vector<size_t> idx(targets.size());
    for (size_t i = 0; i < idx.size(); i++) idx[i] = i;
    std::sort(idx.begin(), idx.end());
    do {
      orders.push_back(idx);
    } while (std::next_permutation(idx.begin(), idx.end()));
  }

  std::string last_why = "no instantiable combination";
  std::vector<size_t> choice(targets.size(), 0);
  std::function<bool(const std::vector<size_t>&, size_t, std::vector<size_t>&)> try_combo =
      [&](const std::vector<size_t>& order, size_t oi, std::vector<size_t>& sel) -> bool {
    if (oi == order.size()) {
      // assemble: setup + walks (in `order`) + deref
      ChainBuilder b(m, corpus);
      std::string err;
      // malicious allocation
      std::map<int, uint32_t> mal_alloc_ov{{0, problem.malicious_address}};
      if (alloc->param_names.size() > 1) mal_alloc_ov[1] = mal_type->size;
      b.append(*alloc, problem.malicious_address, std::nullopt, mal_alloc_ov, {}, "setup",
               &err);
      // malicious creation doubles as the first forge step of every walk
      std::map<int, uint32_t> creator_ov =
          args_by_name(*mal_creator, problem.malicious_create_args);
      std::vector<WalkInstantiation> insts(order.size());
      std::vector<const Solution*> sols(order.size());
      for (size_t k = 0; k < order.size(); k++) {
        const Target& t = targets[order[k]];
        sols[k] = per_target[order[k]][sel[k]];
        p.target = t.address;
        std::string why;
        if (!instantiate_walk(p, *sols[k], t.value, m.is_type_id(t.value), &insts[k],
                              &why)) {
          last_why = why;
          return false;
        }
        if (sols[k]->hops.empty() ||
            p.syscalls[sols[k]->hops[0].syscall].name != mal_creator->name) {
          last_why = "walk does not start with the malicious creator";
          return false;
        }
        // merge first-hop plants into the creation step
        for (const auto& [param, value] : insts[k].overrides[0]) {
          auto it = creator_ov.find(param);
          if (it != creator_ov.end() && it->second != value) {
            last_why = "conflicting creation plants";
            return false;
          }
          creator_ov[param] = value;
        }
      }
      if (!b.append(*mal_creator, problem.malicious_address,
                    sols[0]->hops[0].field_offset, creator_ov, {}, "forge", &err)) {
        last_why = err;
        return false;
      }
      // accomplice allocation + prerequisites + creation
      std::map<int, uint32_t> acc_alloc_ov{{0, problem.accomplice_address}};
      if (alloc->param_names.size() > 1) acc_alloc_ov[1] = acc_type->size;
      b.append(*alloc, problem.accomplice_address, std::nullopt, acc_alloc_ov, {}, "setup",
               &err);
      for (const SetupStep& s : problem.pre_create) {
        const SyscallModel* sm = b.find(s.syscall);
        if (!sm) {
          last_why = "pre-create syscall '" + s.syscall + "' not in corpus";
          return false;
        }
        std::map<int, uint32_t> ov;
        for (size_t ai = 0; ai < s.args.size(); ai++) ov[static_cast<int>(ai)] = s.args[ai];
        uint32_t base = s.args.empty() ? 0 : s.args[0];
        if (!b.append(*sm, base, std::nullopt, ov, {}, "setup", &err)) {
          last_why = err;
          return false;
        }
      }
      if (!b.append(*acc_creator, problem.accomplice_address, std::nullopt, acc_create_ov,
                    {}, "setup", &err)) {
        last_why = err;
        return false;
      }
      // forge walks, skipping each walk's merged first hop
      for (size_t k = 0; k < order.size(); k++) {
        const Solution& sol = *sols[k];
        uint32_t base = problem.malicious_address + sol.hops[0].field_offset;
        for (size_t i = 1; i < sol.hops.size(); i++) {
          const SyscallModel& s = p.syscalls[sol.hops[i].syscall];
          std::map<int, std::string> placeholders;
          std::map<int, uint32_t> ov = insts[k].overrides[i];
          if (i + 1 == sol.hops.size() && targets[order[k]].is_pointer &&
              insts[k].final_param >= 0) {
            // the emitted argument is a placeholder; the replay still uses
            // the bound value from the overrides
            placeholders[insts[k].final_param] = "target_value";
          }
          if (!b.append(s, base, sol.hops[i].field_offset, ov, placeholders, "forge",
                        &err)) {
            last_why = err;
            return false;
          }
          base += sol.hops[i].field_offset;
        }
      }
      // the dereference
      if (!b.append(*deref, problem.accomplice_address, deref->deref_field, {}, {},
                    "deref", &err)) {
        last_why = err;
        return false;
      }
      if (!b.insert_resets(&err)) {
        last_why = err;
        return false;
      }
      std::string why;
      if (!b.replay(p.initial_bytes, &why)) {
        last_why = why;
        return false;
      }
      auto ptr_word = b.final_word(
          p.initial_bytes, problem.accomplice_address + *deref->deref_field);
      if (!ptr_word || *ptr_word != problem.final_value) {
        last_why = "pointer field does not hold the target value after replay";
        return false;
      }
      result.chain = b.take({{"target_value", problem.final_value}}, total_solutions,
                            false);
      return true;
    }
    for (size_t c = 0; c < per_target[order[oi]].size(); c++) {
      sel[oi] = c;
      if (try_combo(order, oi + 1, sel)) return true;
    }
    return false;
  };

  std::string missing_target;
  for (int depth = 1; depth <= problem.max_depth; depth++) {
    p.max_depth = depth;
    bool all_have = true;
    total_solutions = 0;
    for (size_t ti = 0; ti < targets.size(); ti++) {
      p.target = targets[ti].address;
      SearchOutcome found = search_chains(p);
      per_target_sols[ti] = std::move(found.solutions);
      total_solutions += static_cast<int>(per_target_sols[ti].size());
      if (per_target_sols[ti].empty()) {
        all_have = false;
        char buf[16];
        snprintf(buf, sizeof buf, "0x%08X", targets[ti].address);
        missing_target = "target " + std::string(buf) + ": " + found.no_solution_reason;
      }
    }
    if (!all_have) continue;
    for (size_t ti = 0; ti < targets.size(); ti++)
      per_target[ti] = ordered_solutions(p, per_target_sols[ti], 256);
    result.solution_count = total_solutions;
    for (const auto& order : orders) {
      std::vector<size_t> sel(targets.size(), 0);
      if (try_combo(order, 0, sel)) {
        result.error.clear();
        return result;
      }
    }
  }
  result.depth_limited = true;
  result.error = !missing_target.empty() && result.solution_count == 0 ? missing_target
                                                                       : last_why;
  return result;
}

std::vector<Rq2Row> rq2_sweep(const model::Model& m,
                              const std::vector<SyscallModel>& corpus,
                              const std::string& malicious_type, uint32_t start,
                              uint32_t range, int max_depth) {
  std::vector<Rq2Row> rows;
  const model::KernelObjectTypeSpec* type = m.type_named(malicious_type);
  if (!type) return rows;

  PlanProblem p;
  p.start = start;
  p.malicious_type = malicious_type;
  p.max_depth = max_depth;
  p.memory_bound = m.layout.kernel_region.end;
  for (const SyscallModel& s : corpus) p.syscalls.push_back(s);
  std::sort(p.syscalls.begin(), p.syscalls.end(),
            [](const SyscallModel& a, const SyscallModel& b) { return a.name < b.name; });
  ChainBuilder builder(m, corpus);
  const SyscallModel* alloc = builder.find("module_object_allocate");
  if (alloc) p.initial_bytes = allocator_header_bytes(*alloc, start, type->size);

  p.target = 0;
  std::vector<uint32_t> reach = reachable_offsets(p, range);
  std::set<uint32_t> reach_set(reach.begin(), reach.end());

  for (uint32_t off = 4; off <= range; off += 4) {
    Rq2Row row;
    row.offset = off;
    row.reachable = reach_set.count(start + off) > 0;
    if (row.reachable) {
      PlanResult pr =
          plan_simple(m, corpus, malicious_type, start, start + off, max_depth, true);
      if (pr.error.empty()) {
        row.chain_length = static_cast<int>(pr.chain.steps.size());
        for (const kernelsim::ChainStep& s : pr.chain.steps)
          if (s.role == "service") row.uses_reset = true;
      } else {
        row.reachable = false;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

} // namespace kom::planner
