#pragma once

#include "kom/ir.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace kom::concrete {

// Concrete interpreter over the fixture IR. Memory is virtual: the caller
// supplies load/store callbacks (the simulator backs them with a MemoryImage,
// the differential tests with a plain byte map).

struct MemoryFault {
  std::string reason;
};

struct Env {
  std::function<uint32_t(uint32_t addr, int width)> load;   // may throw MemoryFault
  std::function<void(uint32_t addr, uint32_t v, int width)> store;
};

struct ConcreteWrite {
  uint32_t address = 0;
  uint32_t value = 0;
  int width = 32;
};

enum class RunStatus { Ok, Rejected, Fault, LoopBounded };

struct RunResult {
  RunStatus status = RunStatus::Ok;
  std::vector<int> block_trace;
  std::vector<ConcreteWrite> writes;
  std::string fault_reason;
  long instructions = 0;
};

struct RunLimits {
  long max_instructions = 1000000;
  // When false, fail-labeled blocks execute like any other block (the
  // differential tests want full traces, the simulator wants rejections).
  bool fail_blocks_reject = true;
};

// Runs one function with concrete arguments. Reaching a block whose label is
// "fail" or starts with "fail" counts as a sanitization rejection.
RunResult run_function(const ir::Program& program, const ir::Function& fn,
                       const std::vector<uint32_t>& args,
                       const std::map<std::string, uint32_t>& extra_constants,
                       Env& env, RunLimits limits = {});

} // namespace kom::concrete
