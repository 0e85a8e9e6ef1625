#include "kom/concrete.hpp"

#include <stdexcept>

namespace kom::concrete {

using ir::Opcode;
using ir::Operand;

RunResult run_function(const ir::Program& program, const ir::Function& fn,
                       const std::vector<uint32_t>& args,
                       const std::map<std::string, uint32_t>& extra_constants,
                       Env& env, RunLimits limits) {
  RunResult result;
  if (args.size() != fn.params.size()) {
    result.status = RunStatus::Fault;
    result.fault_reason = "argument count mismatch for @" + fn.name;
    return result;
  }

  std::vector<uint32_t> regs(fn.registers.size(), 0);
  for (size_t pi = 0; pi < fn.params.size(); pi++)
    for (size_t r = 0; r < fn.registers.size(); r++)
      if (fn.registers[r] == fn.params[pi].name) regs[r] = args[pi];

  auto named_const = [&](const std::string& name) -> uint32_t {
    auto it = program.named_constants.find(name);
    if (it != program.named_constants.end()) return it->second;
    auto mit = extra_constants.find(name);
    if (mit != extra_constants.end()) return mit->second;
    throw MemoryFault{"unresolved named constant $" + name};
  };

  auto operand = [&](const Operand& op) -> uint32_t {
    switch (op.kind) {
    case Operand::Kind::Reg: return regs[op.reg];
    case Operand::Kind::Imm: return op.imm;
    case Operand::Kind::Named: return named_const(op.name);
    }
    return 0;
  };

  int block = 0;
  result.block_trace.push_back(0);

  auto is_fail_block = [&](int b) {
    return limits.fail_blocks_reject && fn.blocks[b].label.rfind("fail", 0) == 0;
  };
  if (is_fail_block(0)) {
    result.status = RunStatus::Rejected;
    return result;
  }

  try {
    while (true) {
      const ir::BasicBlock& blk = fn.blocks[block];
      bool jumped = false;
      for (const ir::Instruction& ins : blk.instructions) {
        result.instructions++;
        if (result.instructions > limits.max_instructions) {
          result.status = RunStatus::LoopBounded;
          return result;
        }
        switch (ins.op) {
        case Opcode::Const: regs[ins.result] = operand(ins.operands[0]); break;
        case Opcode::Add:
        case Opcode::Gep:
          regs[ins.result] = operand(ins.operands[0]) + operand(ins.operands[1]);
          break;
        case Opcode::Sub:
          regs[ins.result] = operand(ins.operands[0]) - operand(ins.operands[1]);
          break;
        case Opcode::And:
          regs[ins.result] = operand(ins.operands[0]) & operand(ins.operands[1]);
          break;
        case Opcode::Or:
          regs[ins.result] = operand(ins.operands[0]) | operand(ins.operands[1]);
          break;
        case Opcode::Xor:
          regs[ins.result] = operand(ins.operands[0]) ^ operand(ins.operands[1]);
          break;
        case Opcode::Shl: {
          uint32_t s = operand(ins.operands[1]);
          regs[ins.result] = s >= 32 ? 0 : operand(ins.operands[0]) << s;
          break;
        }
        case Opcode::Lshr: {
          uint32_t s = operand(ins.operands[1]);
          regs[ins.result] = s >= 32 ? 0 : operand(ins.operands[0]) >> s;
          break;
        }
        case Opcode::IcmpEq:
          regs[ins.result] = operand(ins.operands[0]) == operand(ins.operands[1]);
          break;
        case Opcode::IcmpNe:
          regs[ins.result] = operand(ins.operands[0]) != operand(ins.operands[1]);
          break;
        case Opcode::IcmpUlt:
          regs[ins.result] = operand(ins.operands[0]) < operand(ins.operands[1]);
          break;
        case Opcode::IcmpUle:
          regs[ins.result] = operand(ins.operands[0]) <= operand(ins.operands[1]);
          break;
        case Opcode::IcmpSlt:
          regs[ins.result] = static_cast<int32_t>(operand(ins.operands[0])) <
                             static_cast<int32_t>(operand(ins.operands[1]));
          break;
        case Opcode::IcmpSle:
          regs[ins.result] = static_cast<int32_t>(operand(ins.operands[0])) <=
                             static_cast<int32_t>(operand(ins.operands[1]));
          break;
        case Opcode::Select:
          regs[ins.result] =
              operand(ins.operands[0]) ? operand(ins.operands[1]) : operand(ins.operands[2]);
          break;
        case Opcode::Load:
          regs[ins.result] = env.load(operand(ins.operands[0]), ins.width);
          break;
        case Opcode::Store: {
          uint32_t addr = operand(ins.operands[0]);
          uint32_t v = operand(ins.operands[1]);
          if (ins.width == 8) v &= 0xFF;
          env.store(addr, v, ins.width);
          result.writes.push_back({addr, v, ins.width});
          break;
        }
        case Opcode::Call: {
          if (ins.callee == "assume_user_buffer") break; // symbolic-side only
          if (ins.callee == "memzero") {
            uint32_t p = operand(ins.operands[0]);
            uint32_t len = operand(ins.operands[1]);
            for (uint32_t b = 0; b < len; b++) {
              env.store(p + b, 0, 8);
              result.writes.push_back({p + b, 0, 8});
            }
            break;
          }
          throw MemoryFault{"unsupported call @" + ins.callee};
        }
        case Opcode::Br:
        case Opcode::Jmp: {
          const ir::JumpTarget* target;
          if (ins.op == Opcode::Jmp) target = &ins.targets[0];
          else target = operand(ins.operands[0]) ? &ins.targets[0] : &ins.targets[1];
          std::vector<uint32_t> vals;
          for (const Operand& a : target->args) vals.push_back(operand(a));
          const ir::BasicBlock& tb = fn.blocks[target->block];
          for (size_t ai = 0; ai < vals.size(); ai++) regs[tb.params[ai].reg] = vals[ai];
          block = target->block;
          result.block_trace.push_back(block);
          if (is_fail_block(block)) {
            result.status = RunStatus::Rejected;
            return result;
          }
          jumped = true;
          break;
        }
        case Opcode::Ret:
          result.status = RunStatus::Ok;
          return result;
        }
        if (jumped) break;
      }
      if (!jumped) {
        result.status = RunStatus::Fault;
        result.fault_reason = "fell off end of block";
        return result;
      }
    }
  } catch (const MemoryFault& f) {
    result.status = RunStatus::Fault;
    result.fault_reason = f.reason;
    return result;
  }
}

} // namespace kom::concrete
