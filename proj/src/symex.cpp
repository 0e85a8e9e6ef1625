#include "kom/symex.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <set>
#include <stdexcept>

namespace kom::symex {

using ir::Opcode;
using ir::Operand;

namespace {

struct SymObject {
  ObjectInfo info;
  std::map<uint32_t, Expr> cells; // byte offset -> width-8 expr
};

struct PathState {
  std::vector<Expr> regs;
  std::vector<SymObject> objects;
  std::map<uint32_t, uint32_t> lazy_bindings; // symbol id -> object id
  std::vector<Expr> constraints;
  std::map<std::pair<int, int>, int> back_edge_counts;
  std::vector<int> block_trace;
  std::vector<WriteEvent> writes;
  std::vector<DerefReadEvent> deref_reads;
  bool solver_unknown = false;
  int block = 0;
  size_t ins = 0;
};

struct Resolved {
  uint32_t object = 0;
  uint32_t offset = 0;
};

} // namespace

Executor::Executor(ExprPool* pool, const Solver* solver, const model::Model* model,
                   Limits limits)
    : pool_(pool), solver_(solver), model_(model), limits_(limits) {}

ExecutionResult Executor::execute_syscall(const ir::Program& program,
                                          const ir::Function& fn) {
  auto t0 = std::chrono::steady_clock::now();
  ExecutionResult result;

  // static back edges: edge (a -> b) where b dominates a
  auto dom = ir::dominators(fn);
  std::set<std::pair<int, int>> back_edges;
  for (size_t bi = 0; bi < fn.blocks.size(); bi++) {
    if (fn.blocks[bi].instructions.empty()) continue;
    for (const ir::JumpTarget& t : fn.blocks[bi].instructions.back().targets)
      if (t.block >= 0 && dom[bi][t.block])
        back_edges.insert({static_cast<int>(bi), t.block});
  }

  auto named_const = [&](const std::string& name) -> uint32_t {
    auto it = program.named_constants.find(name);
    if (it != program.named_constants.end()) return it->second;
    auto mit = model_->constants.find(name);
    if (mit != model_->constants.end()) return mit->second;
    throw std::runtime_error("unresolved named constant $" + name);
  };

  PathState initial;
  initial.regs.assign(fn.registers.size(), nullptr);

  // globals with concrete initial values
  for (const model::GlobalSpec& g : model_->layout.globals) {
    SymObject obj;
    obj.info.id = static_cast<uint32_t>(initial.objects.size());
    obj.info.size = 4;
    obj.info.origin = ObjectOrigin::Global;
    obj.info.taint = Taint::Clean;
    obj.info.label = g.name;
    obj.info.fixed_address = g.address;
    for (int b = 0; b < 4; b++)
      obj.cells[b] = pool_->constant((g.value >> (8 * b)) & 0xFF, 8);
    initial.objects.push_back(std::move(obj));
  }

  // symbolize all parameters before entry
  std::map<int, const ir::Param*> param_by_reg;
  for (const ir::Param& p : fn.params) {
    SymbolInfo si;
    si.width = 32;
    si.origin = SymbolOrigin::Param;
    si.name = p.name;
    si.param_derived = true;
    uint32_t id = pool_->fresh_symbol(si);
    for (size_t r = 0; r < fn.registers.size(); r++)
      if (fn.registers[r] == p.name) {
        initial.regs[r] = pool_->symbol_expr(id);
        param_by_reg[static_cast<int>(r)] = &p;
      }
  }

  // taint caches
  std::map<Expr, bool> param_taint_cache, kernel_taint_cache;
  auto expr_tainted = [&](Expr e, bool kernel) -> bool {
    auto& cache = kernel ? kernel_taint_cache : param_taint_cache;
    auto it = cache.find(e);
    if (it != cache.end()) return it->second;
    std::vector<uint32_t> syms;
    pool_->collect_symbols(e, syms);
    bool r = false;
    for (uint32_t s : syms) {
      const SymbolInfo& si = pool_->symbol(s);
      if (kernel ? si.kernel_cell : si.param_derived) {
        r = true;
        break;
      }
    }
    cache.emplace(e, r);
    return r;
  };

  auto lazy_init = [&](PathState& st, uint32_t sym_id) -> uint32_t {
    const SymbolInfo& si = pool_->symbol(sym_id);
    SymObject obj;
    obj.info.id = static_cast<uint32_t>(st.objects.size());
    obj.info.size = 64;
    obj.info.taint = Taint::Clean;
    if (si.origin == SymbolOrigin::Param) {
      obj.info.origin = ObjectOrigin::LazyParam;
      obj.info.label = si.name;
      // find the parameter annotation
      for (const ir::Param& p : fn.params) {
        if (p.name != si.name) continue;
        if (p.anno == ir::PtrAnno::KernelObject) {
          const model::KernelObjectTypeSpec* spec = model_->type_named(p.object_type);
          if (spec) obj.info.size = spec->size;
          obj.info.taint = Taint::KernelObject;
        } else if (p.anno == ir::PtrAnno::UserBuffer) {
          obj.info.origin = ObjectOrigin::UserBuffer;
          obj.info.taint = Taint::ParamDerived;
          auto bound = model_->layout.thread_region;
          Expr ptr = pool_->symbol_expr(sym_id);
          st.constraints.push_back(
              pool_->lnot(pool_->ult(ptr, pool_->constant(bound.base, 32))));
          st.constraints.push_back(pool_->ult(ptr, pool_->constant(bound.end, 32)));
        }
      }
    } else {
      obj.info.origin = ObjectOrigin::LazyNested;
      obj.info.label = "nested:" + std::to_string(sym_id);
      if (si.origin == SymbolOrigin::MemCell && si.kernel_cell)
        obj.info.via_kernel_field = si.offset;
    }
    obj.info.bound_symbol = sym_id;
    st.lazy_bindings[sym_id] = obj.info.id;
    st.objects.push_back(std::move(obj));
    return st.objects.back().info.id;
  };

  // Resolves an address expression to (object, concrete offset). Lazily
  // materializes the pointee when the root is an unbound pointer symbol.
  // Returns nullopt for unresolvable (symbolic offset / unknown constant).
  auto resolve_address = [&](PathState& st, Expr addr) -> std::optional<Resolved> {
    uint32_t offset = 0;
    Expr cur = addr;
    while (cur->op == ExprOp::Add && cur->b->is_const()) {
      offset += cur->b->value;
      cur = cur->a;
    }
    if (cur->is_const()) {
      uint32_t abs = cur->value + offset;
      for (const SymObject& o : st.objects) {
        if (o.info.fixed_address &&
            abs >= *o.info.fixed_address && abs < *o.info.fixed_address + o.info.size)
          return Resolved{o.info.id, abs - *o.info.fixed_address};
      }
      return std::nullopt;
    }
    if (cur->is_symbol()) {
      uint32_t sym = cur->value;
      auto it = st.lazy_bindings.find(sym);
      uint32_t obj = it != st.lazy_bindings.end() ? it->second : lazy_init(st, sym);
      return Resolved{obj, offset};
    }
    return std::nullopt;
  };

  auto operand_expr = [&](const PathState& st, const Operand& op) -> Expr {
    switch (op.kind) {
    case Operand::Kind::Reg: {
      Expr e = st.regs[op.reg];
      if (!e) throw std::runtime_error("use of undefined register");
      return e;
    }
    case Operand::Kind::Imm: return pool_->constant(op.imm, 32);
    case Operand::Kind::Named: return pool_->constant(named_const(op.name), 32);
    }
    return nullptr;
  };

  // Reads `width` bits from an object. Unwritten 32-bit-aligned reads mint a
  // single fresh symbol so the value round-trips as one tainted unit.
  auto load_cells = [&](PathState& st, uint32_t obj_id, uint32_t off, int width) -> Expr {
    SymObject& obj = st.objects[obj_id];
    bool kernel = obj.info.taint == Taint::KernelObject;
    bool param = obj.info.taint == Taint::ParamDerived;
    auto mint = [&](uint32_t at, uint8_t w) -> Expr {
      SymbolInfo si;
      si.width = w;
      si.origin = SymbolOrigin::MemCell;
      si.name = obj.info.label + "+" + std::to_string(at);
      si.object_id = obj_id;
      si.offset = at;
      si.kernel_cell = kernel;
      si.param_derived = param;
      return pool_->symbol_expr(pool_->fresh_symbol(si));
    };
    if (width == 8) {
      auto it = obj.cells.find(off);
      if (it != obj.cells.end()) return pool_->zext(it->second);
      Expr s = mint(off, 8);
      obj.cells[off] = s;
      return pool_->zext(s);
    }
    bool any = false;
    for (int b = 0; b < 4; b++) any = any || obj.cells.count(off + b);
    if (!any) {
      Expr s = mint(off, 32);
      for (int b = 0; b < 4; b++) obj.cells[off + b] = pool_->extract_byte(s, b);
      return s;
    }
    // whole-word round trip: four extracts of the same expression load back
    // as that expression
    bool whole = true;
    Expr base32 = nullptr;
    for (int b = 0; b < 4 && whole; b++) {
      auto it = obj.cells.find(off + b);
      if (it == obj.cells.end() || it->second->op != ExprOp::Extract ||
          it->second->aux != static_cast<uint32_t>(b)) {
        whole = false;
        break;
      }
      if (b == 0) base32 = it->second->a;
      else if (it->second->a != base32) whole = false;
    }
    if (whole && base32) return base32;
    // mixed case: compose bytes little-endian
    Expr acc = nullptr;
    for (int b = 0; b < 4; b++) {
      auto it = obj.cells.find(off + b);
      Expr byte;
      if (it != obj.cells.end()) byte = it->second;
      else {
        byte = mint(off + b, 8);
        obj.cells[off + b] = byte;
      }
      Expr part = pool_->shl(pool_->zext(byte), pool_->constant(8 * b, 32));
      acc = acc ? pool_->bor(acc, part) : part;
    }
    return pool_->simplify(acc);
  };

  auto store_cells = [&](PathState& st, uint32_t obj_id, uint32_t off, Expr value,
                         int width) {
    SymObject& obj = st.objects[obj_id];
    if (width == 8) {
      obj.cells[off] = value->width == 8 ? value : pool_->extract_byte(value, 0);
    } else {
      for (int b = 0; b < 4; b++) obj.cells[off + b] = pool_->extract_byte(value, b);
    }
  };

  // deterministic DFS: LIFO worklist, then-successor explored first
  std::vector<PathState> worklist;
  initial.block_trace.push_back(0);
  worklist.push_back(std::move(initial));

  long total_ins = 0;
  bool abnormal_seen = false;

  auto finToRecord = [&](PathState& st, PathStatus status, const std::string& reason) {
    PathRecord rec;
    rec.status = status;
    if (status == PathStatus::Returned && st.solver_unknown)
      rec.status = PathStatus::SolverUnknown;
    rec.constraints = st.constraints;
    rec.writes = st.writes;
    rec.deref_reads = st.deref_reads;
    rec.block_trace = st.block_trace;
    rec.abnormal_reason = reason;
    for (const SymObject& o : st.objects) rec.objects.push_back(o.info);
    if (rec.status == PathStatus::Abnormal || rec.status == PathStatus::SolverUnknown)
      abnormal_seen = true;
    result.paths.push_back(std::move(rec));
  };

  while (!worklist.empty()) {
    if (static_cast<long>(result.paths.size()) >= limits_.max_paths ||
        total_ins >= limits_.max_instructions) {
      // resource ceiling: drain remaining states as loop-bounded
      for (auto& st : worklist) finToRecord(st, PathStatus::LoopBounded, "resource limit");
      break;
    }
    PathState st = std::move(worklist.back());
    worklist.pop_back();

    bool terminal = false;
    while (!terminal) {
      const ir::BasicBlock& blk = fn.blocks[st.block];
      bool jumped = false;
      for (size_t ii = st.ins; ii < blk.instructions.size() && !terminal && !jumped; ii++) {
        const ir::Instruction& ins = blk.instructions[ii];
        total_ins++;
        if (total_ins > limits_.max_instructions) {
          finToRecord(st, PathStatus::LoopBounded, "instruction limit");
          terminal = true;
          break;
        }
        try {
          switch (ins.op) {
          case Opcode::Const:
            st.regs[ins.result] = operand_expr(st, ins.operands[0]);
            break;
          case Opcode::Add:
          case Opcode::Sub:
          case Opcode::And:
          case Opcode::Or:
          case Opcode::Xor:
          case Opcode::Shl:
          case Opcode::Lshr:
          case Opcode::IcmpEq:
          case Opcode::IcmpNe:
          case Opcode::IcmpUlt:
          case Opcode::IcmpUle:
          case Opcode::IcmpSlt:
          case Opcode::IcmpSle:
          case Opcode::Gep: {
            Expr a = operand_expr(st, ins.operands[0]);
            Expr b = operand_expr(st, ins.operands[1]);
            Expr r = nullptr;
            switch (ins.op) {
            case Opcode::Add:
            case Opcode::Gep: r = pool_->add(a, b); break;
            case Opcode::Sub: r = pool_->sub(a, b); break;
            case Opcode::And: r = pool_->band(a, b); break;
            case Opcode::Or: r = pool_->bor(a, b); break;
            case Opcode::Xor: r = pool_->bxor(a, b); break;
            case Opcode::Shl: r = pool_->shl(a, b); break;
            case Opcode::Lshr: r = pool_->lshr(a, b); break;
            case Opcode::IcmpEq: r = pool_->eq(a, b); break;
            case Opcode::IcmpNe: r = pool_->ne(a, b); break;
            case Opcode::IcmpUlt: r = pool_->ult(a, b); break;
            case Opcode::IcmpUle: r = pool_->ule(a, b); break;
            case Opcode::IcmpSlt: r = pool_->slt(a, b); break;
            case Opcode::IcmpSle: r = pool_->sle(a, b); break;
            default: break;
            }
            st.regs[ins.result] = r;
            break;
          }
          case Opcode::Select: {
            Expr c = operand_expr(st, ins.operands[0]);
            Expr a = operand_expr(st, ins.operands[1]);
            Expr b = operand_expr(st, ins.operands[2]);
            if (c->width != 1) c = pool_->ne(c, pool_->constant(0, 32));
            st.regs[ins.result] = pool_->ite(c, a, b);
            break;
          }
          case Opcode::Load: {
            Expr addr = operand_expr(st, ins.operands[0]);
            auto res = resolve_address(st, addr);
            if (!res) {
              finToRecord(st, PathStatus::Abnormal,
                          "unresolvable load address at line " + std::to_string(ins.line));
              terminal = true;
              break;
            }
            const SymObject& obj = st.objects[res->object];
            if (obj.info.taint == Taint::KernelObject &&
                res->offset + (ins.width == 32 ? 4 : 1) > obj.info.size) {
              finToRecord(st, PathStatus::Abnormal,
                          "load out of object bounds at line " + std::to_string(ins.line));
              terminal = true;
              break;
            }
            if (obj.info.via_kernel_field) {
              DerefReadEvent ev;
              ev.address = addr;
              ev.width = ins.width;
              ev.src_field_offset = obj.info.via_kernel_field;
              ev.constraint_prefix = st.constraints.size();
              st.deref_reads.push_back(ev);
            }
            st.regs[ins.result] = load_cells(st, res->object, res->offset, ins.width);
            break;
          }
          case Opcode::Store: {
            Expr addr = operand_expr(st, ins.operands[0]);
            Expr data = operand_expr(st, ins.operands[1]);
            if (data->width == 1)
              data = pool_->ite(data, pool_->constant(1, 32), pool_->constant(0, 32));
            if (addr->is_const() && addr->value == 0) {
              finToRecord(st, PathStatus::Abnormal,
                          "store through null pointer at line " + std::to_string(ins.line));
              terminal = true;
              break;
            }
            auto res = resolve_address(st, addr);
            WriteEvent ev;
            ev.address = addr;
            ev.data = ins.width == 8 && data->width == 32 ? pool_->extract_byte(data, 0)
                                                          : data;
            ev.width = ins.width;
            ev.constraint_prefix = st.constraints.size();
            ev.data_param_tainted = expr_tainted(ev.data, false);
            ev.data_kernel_tainted = expr_tainted(ev.data, true);
            ev.line = ins.line;
            if (res) {
              SymObject& obj = st.objects[res->object];
              if (obj.info.taint == Taint::KernelObject &&
                  res->offset + (ins.width == 32 ? 4 : 1) > obj.info.size) {
                finToRecord(st, PathStatus::Abnormal, "store out of object bounds at line " +
                                                          std::to_string(ins.line));
                terminal = true;
                break;
              }
              ev.resolved = {res->object, res->offset};
              ev.target_taint = obj.info.taint;
              ev.via_kernel_ptr_field = obj.info.via_kernel_field;
              store_cells(st, res->object, res->offset, data, ins.width);
            }
            st.writes.push_back(ev);
            break;
          }
          case Opcode::Call: {
            if (ins.callee == "assume_user_buffer") {
              Expr p = operand_expr(st, ins.operands[0]);
              if (p->is_symbol()) {
                auto it = st.lazy_bindings.find(p->value);
                uint32_t obj = it != st.lazy_bindings.end() ? it->second
                                                            : lazy_init(st, p->value);
                st.objects[obj].info.taint = Taint::ParamDerived;
                st.objects[obj].info.origin = ObjectOrigin::UserBuffer;
              }
              auto bound = model_->layout.thread_region;
              st.constraints.push_back(
                  pool_->lnot(pool_->ult(p, pool_->constant(bound.base, 32))));
              st.constraints.push_back(pool_->ult(p, pool_->constant(bound.end, 32)));
            } else if (ins.callee == "memzero") {
              Expr p = operand_expr(st, ins.operands[0]);
              Expr len = operand_expr(st, ins.operands[1]);
              if (!len->is_const()) {
                finToRecord(st, PathStatus::Abnormal,
                            "memzero with symbolic length at line " + std::to_string(ins.line));
                terminal = true;
                break;
              }
              auto res = resolve_address(st, p);
              for (uint32_t b = 0; b < len->value && res; b++) {
                WriteEvent ev;
                ev.address = pool_->add(p, pool_->constant(b, 32));
                ev.data = pool_->constant(0, 8);
                ev.width = 8;
                ev.constraint_prefix = st.constraints.size();
                ev.resolved = {res->object, res->offset + b};
                ev.target_taint = st.objects[res->object].info.taint;
                ev.line = ins.line;
                store_cells(st, res->object, res->offset + b, pool_->constant(0, 8), 8);
                st.writes.push_back(ev);
              }
            } else {
              finToRecord(st, PathStatus::Abnormal,
                          "unsupported call @" + ins.callee + " at line " +
                              std::to_string(ins.line));
              terminal = true;
            }
            break;
          }
          case Opcode::Br:
          case Opcode::Jmp: {
            auto enter = [&](PathState& target_state, const ir::JumpTarget& t) -> bool {
              // bind block arguments before switching
              std::vector<Expr> args;
              for (const Operand& op : t.args) args.push_back(operand_expr(st, op));
              int edge_from = st.block;
              if (back_edges.count({edge_from, t.block})) {
                int& count = target_state.back_edge_counts[{edge_from, t.block}];
                count++;
                if (count > limits_.loop_threshold) return false;
              }
              const ir::BasicBlock& tb = fn.blocks[t.block];
              for (size_t ai = 0; ai < args.size(); ai++)
                target_state.regs[tb.params[ai].reg] = args[ai];
              target_state.block = t.block;
              target_state.ins = 0;
              target_state.block_trace.push_back(t.block);
              return true;
            };

            if (ins.op == Opcode::Jmp) {
              if (!enter(st, ins.targets[0])) {
                finToRecord(st, PathStatus::LoopBounded, "loop threshold");
                terminal = true;
              } else {
                jumped = true;
              }
              break;
            }

            Expr cond = operand_expr(st, ins.operands[0]);
            if (cond->width != 1) cond = pool_->ne(cond, pool_->constant(0, 32));
            if (cond->is_const()) {
              const ir::JumpTarget& t = cond->value ? ins.targets[0] : ins.targets[1];
              if (!enter(st, t)) {
                finToRecord(st, PathStatus::LoopBounded, "loop threshold");
                terminal = true;
              } else {
                jumped = true;
              }
              break;
            }
            // feasibility of each arm
            auto feasibility = [&](Expr c) -> SatStatus {
              std::vector<Expr> cs = st.constraints;
              cs.push_back(c);
              return solver_->check_sat(cs, limits_.solver_budget).status;
            };
            Expr neg = pool_->lnot(cond);
            SatStatus then_s = feasibility(cond);
            SatStatus else_s = feasibility(neg);
            bool take_then = then_s != SatStatus::Unsat;
            bool take_else = else_s != SatStatus::Unsat;
            if (take_then && take_else) {
              PathState else_state = st; // fork
              else_state.constraints.push_back(neg);
              if (else_s == SatStatus::Unknown) else_state.solver_unknown = true;
              if (enter(else_state, ins.targets[1]))
                worklist.push_back(std::move(else_state));
              else
                finToRecord(else_state, PathStatus::LoopBounded, "loop threshold");
              st.constraints.push_back(cond);
              if (then_s == SatStatus::Unknown) st.solver_unknown = true;
              if (!enter(st, ins.targets[0])) {
                finToRecord(st, PathStatus::LoopBounded, "loop threshold");
                terminal = true;
              } else
                jumped = true;
            } else if (take_then || take_else) {
              const ir::JumpTarget& t = take_then ? ins.targets[0] : ins.targets[1];
              Expr c = take_then ? cond : neg;
              st.constraints.push_back(c);
              if ((take_then ? then_s : else_s) == SatStatus::Unknown)
                st.solver_unknown = true;
              if (!enter(st, t)) {
                finToRecord(st, PathStatus::LoopBounded, "loop threshold");
                terminal = true;
              } else
                jumped = true;
            } else {
              // both arms unsatisfiable: the accumulated constraints were
              // already infeasible
              finToRecord(st, PathStatus::PrunedInfeasible, "");
              terminal = true;
            }
            break;
          }
          case Opcode::Ret:
            finToRecord(st, PathStatus::Returned, "");
            terminal = true;
            break;
          }
        } catch (const std::exception& e) {
          finToRecord(st, PathStatus::Abnormal,
                      std::string(e.what()) + " at line " + std::to_string(ins.line));
          terminal = true;
        }
      }
      if (jumped) {
        st.ins = 0;
        continue;
      }
      if (!terminal) {
        // block ended without terminator: validator rejects this, but stay
        // total for robustness
        finToRecord(st, PathStatus::Abnormal, "fell off end of block");
        terminal = true;
      }
    }
  }

  auto t1 = std::chrono::steady_clock::now();
  result.stats.wall_ms =
      std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() / 1000.0;
  result.stats.paths = static_cast<long>(result.paths.size());
  result.stats.instructions = total_ins;
  result.stats.status = abnormal_seen ? 'A' : 'N';
  return result;
}

ExecutionResult run_syscall(ExprPool* pool, const Solver* solver,
                            const model::Model* model, const ir::Program& program,
                            const model::SyscallManifest& manifest, Limits limits) {
  const ir::Function* fn = program.function(manifest.ir_name);
  if (!fn) throw std::runtime_error("no IR function @" + manifest.ir_name);
  Executor ex(pool, solver, model, limits);
  return ex.execute_syscall(program, *fn);
}

} // namespace kom::symex
