#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kom::model {

struct FieldSpec {
  std::string name;
  uint32_t offset = 0;
  int width = 32; // 8 or 32
  enum class Kind { Scalar, Pointer } kind = Kind::Scalar;
};

struct KernelObjectTypeSpec {
  std::string name;
  uint32_t type_id = 0;
  uint32_t size = 0;
  std::vector<FieldSpec> fields; // sorted by offset; fields[0] is the type id slot
  std::string creator;           // syscall that initializes this object type

  const FieldSpec* field_at_offset(uint32_t offset) const;
  const FieldSpec* field_named(const std::string& name) const;
};

struct SyscallManifest {
  std::string name;
  std::string ir_name;
  std::optional<int> object_param;
  std::string object_type;
  bool address_validation = true;
  std::optional<std::pair<uint32_t, uint32_t>> user_bound; // for user-buffer params
  std::string reset_before_reuse; // syscall to insert between repeated uses
};

struct GlobalSpec {
  std::string name;
  uint32_t address = 0;
  uint32_t value = 0;
};

struct Region {
  uint32_t base = 0;
  uint32_t end = 0; // exclusive
  bool contains(uint32_t a) const { return a >= base && a < end; }
};

struct MemoryLayoutSpec {
  Region thread_region;
  Region kernel_region;
  Region device_region;
  uint32_t mpu_register = 0xE000ED94;
  uint32_t kernel_alloc_base = 0;
  uint32_t user_alloc_base = 0;
  std::vector<GlobalSpec> globals;

  bool mapped(uint32_t addr) const {
    return thread_region.contains(addr) || kernel_region.contains(addr) ||
           device_region.contains(addr);
  }
};

struct Model {
  std::vector<KernelObjectTypeSpec> types;
  std::vector<SyscallManifest> syscalls;
  MemoryLayoutSpec layout;
  std::map<std::string, uint32_t> constants;

  const KernelObjectTypeSpec* type_named(const std::string& name) const;
  const SyscallManifest* syscall_named(const std::string& name) const;
  std::vector<uint32_t> type_ids() const; // sorted, deduplicated
  bool is_type_id(uint32_t v) const;
};

struct LoadResult {
  std::optional<Model> model;
  std::vector<std::string> errors;
  bool ok() const { return model.has_value(); }
};

LoadResult load_manifest(const std::string& path);
LoadResult load_manifest_text(const std::string& text);

} // namespace kom::model
