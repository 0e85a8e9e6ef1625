#pragma once

#include "kom/concrete.hpp"
#include "kom/ir.hpp"
#include "kom/model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace kom::kernelsim {

// Concrete execution environment: ThreadX-style two-stage parameter
// sanitization over a flat memory image with a single MPU enable bit at the
// modeled MPU control register.

struct Placement {
  std::string type;
  uint32_t address = 0;
  std::map<std::string, uint32_t> init; // field name -> value
};

class MemoryImage {
public:
  MemoryImage() = default;
  explicit MemoryImage(const model::MemoryLayoutSpec& layout);

  const model::MemoryLayoutSpec& layout() const { return layout_; }

  // Syscall-context access: any mapped address. Throws concrete::MemoryFault
  // on unmapped addresses.
  uint32_t load(uint32_t addr, int width) const;
  void store(uint32_t addr, uint32_t value, int width);

  // Thread-context access: honors the MPU while it is enabled.
  uint32_t read_user(uint32_t addr, int width) const;
  void write_user(uint32_t addr, uint32_t value, int width);

  bool mpu_enabled() const;
  const std::map<uint32_t, std::pair<std::string, bool>>& placed() const {
    return placed_;
  }
  void place(const std::string& type, uint32_t address);

  MemoryImage clone() const { return *this; }

private:
  model::MemoryLayoutSpec layout_;
  std::map<uint32_t, uint8_t> bytes_;
  std::map<uint32_t, std::pair<std::string, bool>> placed_;
};

struct BuildError {
  std::string message;
};

// Places typed objects: first word gets the type id, named fields get their
// initial values, the MPU starts enabled.
std::variant<MemoryImage, BuildError> build_image(const model::Model& m,
                                                  const std::vector<Placement>& placements);

bool address_validate(uint32_t ptr, const model::MemoryLayoutSpec& layout);

struct Requirement {
  uint32_t offset = 0;
  int width = 32;
  uint32_t equals = 0;
};

// True iff every requirement holds on the bytes at ptr+offset. Unmapped
// reads surface as faults via the bool+flag pair.
struct SemanticCheck {
  bool ok = false;
  bool fault = false;
};
SemanticCheck semantic_validate(const MemoryImage& image, uint32_t ptr,
                                const std::vector<Requirement>& reqs);

enum class StepStatus { Ok, RejectedAddress, RejectedSemantic, Fault };

struct StepOutcome {
  std::string syscall;
  StepStatus status = StepStatus::Ok;
  std::string detail;
};

struct WordDiff {
  uint32_t address = 0;
  uint32_t before = 0;
  uint32_t after = 0;
};

struct SimResult {
  StepStatus status = StepStatus::Ok; // first failure wins
  int failed_step = -1;
  std::vector<StepOutcome> trace;
  std::vector<WordDiff> diff;
  bool mpu_disabled = false;
};

// Argument of a chain step: either a constant or a named placeholder bound
// at run time.
struct ArgValue {
  std::optional<uint32_t> constant;
  std::string placeholder;
};

struct ChainStep {
  std::string syscall;
  uint32_t base = 0; // forged/object base this step operates on (reporting)
  std::optional<uint32_t> field_offset;
  std::vector<ArgValue> args;
  std::string role; // setup | forge | service | deref
};

struct AttackChain {
  std::vector<ChainStep> steps;
  bool depth_limited = false;
  std::map<std::string, uint32_t> default_bindings;
  int solution_count = 0;
};

class Simulator {
public:
  Simulator(const model::Model* m, const ir::Program* program)
      : model_(m), program_(program) {}

  // Address validation, then concrete execution of the fixture whose guards
  // realize semantic validation. A rejected call leaves the image
  // bit-identical.
  StepOutcome invoke_syscall(MemoryImage& image, const std::string& syscall,
                             const std::vector<uint32_t>& args,
                             std::vector<WordDiff>* diff = nullptr);

  SimResult run_chain(MemoryImage image, const AttackChain& chain,
                      const std::map<std::string, uint32_t>& bindings) const;

private:
  const model::Model* model_;
  const ir::Program* program_;
};

} // namespace kom::kernelsim
