#include "kom/classifier.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace kom::classifier {

using symex::PathRecord;
using symex::Taint;
using symex::WriteEvent;

std::vector<uint32_t> m4_probe_set(const model::Model& m) {
  std::set<uint32_t> probes{0x00000000u, 0x00000001u, 0x7FFFFFFFu, 0x80000000u,
                            0xFFFFFFFFu, 0xE000ED94u};
  for (uint32_t id : m.type_ids()) probes.insert(id);
  return {probes.begin(), probes.end()};
}

namespace {

std::span<const Expr> prefix_of(const std::vector<Expr>& constraints, size_t prefix) {
  return {constraints.data(), std::min(prefix, constraints.size())};
}

// probes `data` against every value in `values`; outcome per Tri
struct ProbeOutcome {
  bool any_true = false;
  bool all_true = true;
  bool any_false = false;
  bool any_unknown = false;
};

ProbeOutcome probe_values(const Solver* solver, Expr data,
                          std::span<const Expr> constraints,
                          const std::vector<uint32_t>& values) {
  ProbeOutcome out;
  for (uint32_t v : values) {
    uint32_t vv = data->width == 8 ? (v & 0xFF) : v;
    Tri t = solver->can_equal(data, vv, constraints);
    switch (t) {
    case Tri::True: out.any_true = true; break;
    case Tri::False:
      out.all_true = false;
      out.any_false = true;
      break;
    case Tri::Unknown:
      out.all_true = false;
      out.any_unknown = true;
      break;
    }
  }
  if (values.empty()) out.all_true = false;
  return out;
}

} // namespace

WriteClassification classify_write(ExprPool* pool, const Solver* solver,
                                   const WriteEvent& w,
                                   const std::vector<Expr>& path_constraints,
                                   const model::Model& m) {
  (void)pool;
  WriteClassification c;
  if (!w.resolved || w.target_taint != Taint::KernelObject) return c; // criterion (i) fails
  c.in_kernel_object = true;
  c.m1 = true;
  c.m2 = w.data_param_tainted;
  if (!c.m2) return c;

  auto constraints = prefix_of(path_constraints, w.constraint_prefix);
  ProbeOutcome ids = probe_values(solver, w.data, constraints, m.type_ids());
  c.m3 = ids.any_true;
  ProbeOutcome all = probe_values(solver, w.data, constraints, m4_probe_set(m));
  c.m4 = all.all_true;
  if (c.m4) c.m3 = true; // implication chain
  c.definite_restriction = all.any_false;
  c.unknown_limited = !c.m4 && all.any_unknown && !all.any_false;
  if (c.unknown_limited) c.m3 = false; // conservative downgrade
  return c;
}

std::vector<ConditionField> extract_condition_fields(ExprPool* pool,
                                                     const PathRecord& path) {
  // constraints active up to the last classified write
  size_t prefix = 0;
  for (const WriteEvent& w : path.writes)
    if (w.resolved && w.target_taint == Taint::KernelObject)
      prefix = std::max(prefix, w.constraint_prefix);
  std::map<uint32_t, ConditionField> fields;
  for (size_t i = 0; i < std::min(prefix, path.constraints.size()); i++) {
    std::vector<uint32_t> syms;
    pool->collect_symbols(path.constraints[i], syms);
    for (uint32_t s : syms) {
      const SymbolInfo& si = pool->symbol(s);
      if (!si.kernel_cell || si.origin != SymbolOrigin::MemCell) continue;
      ConditionField& cf = fields[si.offset];
      cf.offset = si.offset;
      cf.constraints.push_back(path.constraints[i]);
    }
  }
  std::vector<ConditionField> out;
  for (auto& [off, cf] : fields) out.push_back(std::move(cf));
  return out;
}

DerefClass classify_deref(ExprPool* pool, const Solver* solver,
                          const std::vector<PathRecord>& paths, const model::Model& m,
                          std::optional<uint32_t>* field,
                          std::optional<uint32_t>* fixed_value, bool* downgraded) {
  (void)pool;
  DerefClass cls = DerefClass::None;
  auto upgrade = [&](DerefClass n, uint32_t f, std::optional<uint32_t> fv) {
    if (static_cast<int>(n) > static_cast<int>(cls)) {
      cls = n;
      if (field) *field = f;
      if (fixed_value) *fixed_value = fv;
    }
  };
  for (const PathRecord& path : paths) {
    if (!path.counts_for_classification()) continue;
    for (const WriteEvent& w : path.writes) {
      if (!w.via_kernel_ptr_field) continue;
      if (w.data->is_const()) {
        upgrade(DerefClass::FixedValue, *w.via_kernel_ptr_field, w.data->value);
        continue;
      }
      if (!w.data_param_tainted && !w.data_kernel_tainted) continue;
      auto constraints = prefix_of(path.constraints, w.constraint_prefix);
      ProbeOutcome probes = probe_values(solver, w.data, constraints, m4_probe_set(m));
      if (probes.all_true) {
        upgrade(DerefClass::FullyControllable, *w.via_kernel_ptr_field, std::nullopt);
      } else if (probes.any_unknown) {
        if (downgraded) *downgraded = true;
        upgrade(DerefClass::FixedValue, *w.via_kernel_ptr_field, std::nullopt);
      }
    }
    // reads through kernel pointer fields give an arbitrary-read primitive
    for (const symex::DerefReadEvent& r : path.deref_reads) {
      if (r.src_field_offset)
        upgrade(DerefClass::FullyControllable, *r.src_field_offset, std::nullopt);
    }
  }
  return cls;
}

SyscallProfile build_profile(ExprPool* pool, const Solver* solver,
                             const std::string& name,
                             const model::SyscallManifest& manifest,
                             const ir::Function& fn,
                             const std::vector<PathRecord>& paths,
                             const symex::ExplorationStats& stats,
                             const model::Model& m) {
  SyscallProfile prof;
  prof.name = name;
  prof.object_type = manifest.object_type;
  prof.object_param = manifest.object_param;
  prof.reset_before_reuse = manifest.reset_before_reuse;
  prof.stats = stats;
  for (const ir::Param& p : fn.params) prof.param_names.push_back(p.name);

  const model::KernelObjectTypeSpec* type_spec =
      manifest.object_type.empty() ? nullptr : m.type_named(manifest.object_type);

  struct FieldAgg {
    FieldClass fc;
    bool any_unknown_probe = false;
    bool any_definite_restriction = false;
    // data exprs per path for identical grouping
    std::map<int, Expr> data_by_path;
  };
  std::map<std::pair<uint32_t, int>, FieldAgg> agg; // (offset,width) -> agg

  for (size_t pi = 0; pi < paths.size(); pi++) {
    const PathRecord& path = paths[pi];
    if (!path.counts_for_classification()) {
      if (path.status == symex::PathStatus::SolverUnknown)
        prof.diagnostics.push_back("path " + std::to_string(pi) +
                                   ": solver-unknown, writes excluded from counts");
      continue;
    }
    for (const WriteEvent& w : path.writes) {
      if (!w.resolved) {
        prof.diagnostics.push_back("path " + std::to_string(pi) +
                                   ": unresolved symbolic-offset write at line " +
                                   std::to_string(w.line));
        continue;
      }
      WriteClassification wc = classify_write(pool, solver, w, path.constraints, m);
      if (!wc.in_kernel_object) continue;
      uint32_t off = w.resolved->second;
      if (type_spec) {
        const model::FieldSpec* fs = type_spec->field_at_offset(off);
        if (!fs || fs->offset != off || fs->width != w.width)
          prof.unaligned_writes.push_back(
              "offset " + std::to_string(off) + " width " + std::to_string(w.width) +
              " (line " + std::to_string(w.line) + ")");
      }
      FieldAgg& fa = agg[{off, w.width}];
      fa.fc.offset = off;
      fa.fc.width = w.width;
      if (!fa.fc.m1) fa.fc.witnessing_path = static_cast<int>(pi);
      fa.fc.m1 = true;
      fa.fc.m2 = fa.fc.m2 || wc.m2;
      fa.fc.m3 = fa.fc.m3 || wc.m3;
      fa.fc.m4 = fa.fc.m4 || wc.m4;
      fa.any_unknown_probe = fa.any_unknown_probe || wc.unknown_limited;
      fa.any_definite_restriction = fa.any_definite_restriction || wc.definite_restriction;
      if (wc.m2 && !fa.data_by_path.count(static_cast<int>(pi)))
        fa.data_by_path[static_cast<int>(pi)] = w.data;
    }
  }

  // field-level flag resolution
  for (auto& [key, fa] : agg) {
    if (fa.fc.m4) {
      fa.fc.unknown_limited = false;
    } else {
      fa.fc.unknown_limited = fa.any_unknown_probe && !fa.any_definite_restriction;
      if (fa.fc.unknown_limited) {
        fa.fc.m3 = false;
        prof.diagnostics.push_back("field at offset " + std::to_string(fa.fc.offset) +
                                   ": unknown-limited (probes exceeded the solver's "
                                   "completeness class; M3/M4 not claimed)");
      }
    }
  }

  // identical-value groups over parameter-affected fields sharing a path
  {
    std::vector<std::pair<uint32_t, int>> keys;
    for (auto& [key, fa] : agg)
      if (fa.fc.m2) keys.push_back(key);
    std::map<std::pair<uint32_t, int>, std::pair<uint32_t, int>> parent;
    for (auto& k : keys) parent[k] = k;
    std::function<std::pair<uint32_t, int>(std::pair<uint32_t, int>)> find =
        [&](std::pair<uint32_t, int> x) {
          while (parent[x] != x) x = parent[x] = parent[parent[x]];
          return x;
        };
    for (size_t a = 0; a < keys.size(); a++) {
      for (size_t b = a + 1; b < keys.size(); b++) {
        const FieldAgg& fa = agg[keys[a]];
        const FieldAgg& fb = agg[keys[b]];
        for (const auto& [pi, da] : fa.data_by_path) {
          auto it = fb.data_by_path.find(pi);
          if (it == fb.data_by_path.end()) continue;
          Tri t = solver->must_equal(da, it->second, paths[pi].constraints);
          if (t == Tri::True) {
            parent[find(keys[a])] = find(keys[b]);
            break;
          }
        }
      }
    }
    std::map<std::pair<uint32_t, int>, std::vector<std::pair<uint32_t, int>>> groups;
    for (auto& k : keys) groups[find(k)].push_back(k);
    for (auto& [root, members] : groups) {
      if (members.size() < 2) continue;
      prof.i += static_cast<int>(members.size()) - 1;
      std::sort(members.begin(), members.end());
      for (size_t gi = 1; gi < members.size(); gi++)
        agg[members[gi]].fc.identical_member = true;
    }
  }

  for (auto& [key, fa] : agg) {
    prof.fields.push_back(fa.fc);
    prof.m1++;
    if (fa.fc.m2) prof.m2++;
    if (fa.fc.m3) prof.m3++;
    if (fa.fc.m4 && !fa.fc.identical_member) prof.m4++;
    bool restricted = fa.fc.m2 && !fa.fc.m4 && !fa.fc.unknown_limited &&
                      !fa.fc.identical_member;
    if (restricted) prof.r++;
  }

  // condition fields per path: offsets read into constraints before the last
  // classified write
  std::set<uint32_t> cond_union;
  std::optional<int> cmin, cmax;
  struct PathCond {
    int count = 0;
    int writes = 0;
  };
  std::vector<PathCond> path_conds(paths.size());
  for (size_t pi = 0; pi < paths.size(); pi++) {
    const PathRecord& path = paths[pi];
    if (!path.counts_for_classification()) continue;
    int classified = 0;
    for (const WriteEvent& w : path.writes)
      if (w.resolved && w.target_taint == Taint::KernelObject) classified++;
    path_conds[pi].writes = classified;
    if (classified == 0) continue;
    auto cfs = extract_condition_fields(pool, path);
    path_conds[pi].count = static_cast<int>(cfs.size());
    for (const ConditionField& cf : cfs) cond_union.insert(cf.offset);
    if (!cmin || path_conds[pi].count < *cmin) cmin = path_conds[pi].count;
    if (!cmax || path_conds[pi].count > *cmax) cmax = path_conds[pi].count;
  }
  prof.condition_offsets.assign(cond_union.begin(), cond_union.end());
  if (prof.m1 > 0) {
    prof.cmin = cmin;
    prof.cmax = cmax;
  }

  // canonical path: fewest conditions, most classified writes, then simplest
  // (fewest constraints: no stray under-constrained branch assumptions), then
  // first in deterministic path order; syscalls with no kernel-object writes
  // (allocators, services) fall back to the returned path with most writes
  int best = -1;
  auto canon_key = [&](size_t pi) {
    return std::make_tuple(path_conds[pi].count, -path_conds[pi].writes,
                           paths[pi].constraints.size(), pi);
  };
  for (size_t pi = 0; pi < paths.size(); pi++) {
    if (paths[pi].status != symex::PathStatus::Returned) continue;
    if (path_conds[pi].writes == 0) continue;
    if (best < 0 || canon_key(pi) < canon_key(static_cast<size_t>(best)))
      best = static_cast<int>(pi);
  }
  if (best < 0) {
    size_t best_writes = 0;
    for (size_t pi = 0; pi < paths.size(); pi++) {
      if (paths[pi].status != symex::PathStatus::Returned) continue;
      size_t resolved = 0;
      for (const WriteEvent& w : paths[pi].writes)
        if (w.resolved) resolved++;
      if (best < 0 || resolved > best_writes) {
        best = static_cast<int>(pi);
        best_writes = resolved;
      }
    }
  }
  prof.canonical_path = best;

  if (best >= 0) {
    const PathRecord& path = paths[best];
    // condition requirements from equality guards
    for (const ConditionField& cf : extract_condition_fields(pool, path)) {
      ConditionReq req;
      req.offset = cf.offset;
      req.width = 32;
      for (Expr c : cf.constraints) {
        if (c->op == ExprOp::Eq && c->b->is_const() && c->a->is_symbol()) {
          const SymbolInfo& si = pool->symbol(c->a->value);
          if (si.origin == SymbolOrigin::MemCell && si.offset == cf.offset) {
            req.eq_value = c->b->value;
            req.is_type_id = m.is_type_id(c->b->value);
          }
        }
      }
      prof.condition_reqs.push_back(req);
    }
    // write template
    std::map<uint32_t, int> object_param; // object id -> param index
    for (const symex::ObjectInfo& oi : path.objects) {
      if (oi.origin != symex::ObjectOrigin::LazyParam &&
          oi.origin != symex::ObjectOrigin::UserBuffer)
        continue;
      for (size_t k = 0; k < prof.param_names.size(); k++)
        if (prof.param_names[k] == oi.label)
          object_param[oi.id] = static_cast<int>(k);
    }
    for (const WriteEvent& w : path.writes) {
      if (!w.resolved) continue;
      const symex::ObjectInfo& oi = path.objects[w.resolved->first];
      WriteTemplateEntry e;
      if (oi.origin == symex::ObjectOrigin::Global) e.base = WriteTemplateEntry::Base::Global;
      else if (oi.via_kernel_field) e.base = WriteTemplateEntry::Base::Deref;
      else if (oi.taint == Taint::KernelObject)
        e.base = WriteTemplateEntry::Base::KernelObject;
      else e.base = WriteTemplateEntry::Base::ParamPointer;
      auto it = object_param.find(w.resolved->first);
      e.base_param = it == object_param.end() ? -1 : it->second;
      e.offset = w.resolved->second;
      e.width = w.width;
      if (w.data->is_const()) {
        e.source = WriteTemplateEntry::Source::Const;
        e.const_value = w.data->value;
      } else if (w.data->is_symbol() &&
                 pool->symbol(w.data->value).origin == SymbolOrigin::Param) {
        e.source = WriteTemplateEntry::Source::Param;
        const SymbolInfo& si = pool->symbol(w.data->value);
        for (size_t k = 0; k < prof.param_names.size(); k++)
          if (prof.param_names[k] == si.name) e.param_index = static_cast<int>(k);
      } else {
        e.source = WriteTemplateEntry::Source::Opaque;
      }
      prof.write_template.push_back(e);
    }
    // argument model satisfying the canonical path
    SolverVerdict v = solver->check_sat(path.constraints);
    if (v.status == SatStatus::Sat) {
      for (const ir::Param& p : fn.params) {
        uint32_t value = 0;
        for (const auto& [sid, sv] : v.model) {
          const SymbolInfo& si = pool->symbol(sid);
          if (si.origin == SymbolOrigin::Param && si.name == p.name) value = sv;
        }
        prof.arg_model[p.name] = value;
      }
    } else {
      prof.diagnostics.push_back("canonical path model unavailable (solver " +
                                 std::string(v.status == SatStatus::Unsat ? "unsat"
                                                                          : "unknown") +
                                 ")");
    }
  }

  prof.deref = classify_deref(pool, solver, paths, m, &prof.deref_field,
                              &prof.deref_fixed_value, &prof.deref_downgraded);

  // raw constraint dump, one line per path, for manual condition-field review
  for (size_t pi = 0; pi < paths.size(); pi++) {
    std::string line = "path " + std::to_string(pi) + " [";
    switch (paths[pi].status) {
    case symex::PathStatus::Returned: line += "returned"; break;
    case symex::PathStatus::LoopBounded: line += "loop-bounded"; break;
    case symex::PathStatus::PrunedInfeasible: line += "pruned"; break;
    case symex::PathStatus::SolverUnknown: line += "solver-unknown"; break;
    case symex::PathStatus::Abnormal: line += "abnormal"; break;
    }
    line += "]:";
    for (Expr c : paths[pi].constraints) line += " " + pool->to_string(c);
    prof.raw_constraints.push_back(line);
  }

  std::sort(prof.fields.begin(), prof.fields.end(),
            [](const FieldClass& a, const FieldClass& b) { return a.offset < b.offset; });
  return prof;
}

} // namespace kom::classifier
