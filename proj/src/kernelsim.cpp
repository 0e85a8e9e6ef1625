#include "kom/kernelsim.hpp"

#include <algorithm>
#include <cstdio>

namespace kom::kernelsim {

using concrete::MemoryFault;

namespace {
std::string hex32(uint32_t v) {
  char buf[16];
  snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}
} // namespace

MemoryImage::MemoryImage(const model::MemoryLayoutSpec& layout) : layout_(layout) {
  // MPU enabled: bit 0 of the control register word
  store(layout_.mpu_register, 1, 32);
  for (const model::GlobalSpec& g : layout_.globals) store(g.address, g.value, 32);
}

uint32_t MemoryImage::load(uint32_t addr, int width) const {
  int n = width == 32 ? 4 : 1;
  uint32_t v = 0;
  for (int b = 0; b < n; b++) {
    uint32_t a = addr + b;
    if (!layout_.mapped(a)) throw MemoryFault{"unmapped read at " + hex32(a)};
    auto it = bytes_.find(a);
    v |= static_cast<uint32_t>(it == bytes_.end() ? 0 : it->second) << (8 * b);
  }
  return v;
}

void MemoryImage::store(uint32_t addr, uint32_t value, int width) {
  int n = width == 32 ? 4 : 1;
  for (int b = 0; b < n; b++) {
    uint32_t a = addr + b;
    if (!layout_.mapped(a)) throw MemoryFault{"unmapped write at " + hex32(a)};
    bytes_[a] = static_cast<uint8_t>((value >> (8 * b)) & 0xFF);
  }
}

bool MemoryImage::mpu_enabled() const {
  auto it = bytes_.find(layout_.mpu_register);
  return it != bytes_.end() && (it->second & 1);
}

uint32_t MemoryImage::read_user(uint32_t addr, int width) const {
  if (mpu_enabled() && !layout_.thread_region.contains(addr))
    throw MemoryFault{"MPU violation: thread-context read outside its region"};
  return load(addr, width);
}

void MemoryImage::write_user(uint32_t addr, uint32_t value, int width) {
  if (mpu_enabled() && !layout_.thread_region.contains(addr))
    throw MemoryFault{"MPU violation: thread-context write outside its region"};
  store(addr, value, width);
}

void MemoryImage::place(const std::string& type, uint32_t address) {
  placed_[address] = {type, true};
}

std::variant<MemoryImage, BuildError> build_image(const model::Model& m,
                                                  const std::vector<Placement>& placements) {
  MemoryImage image(m.layout);
  std::vector<std::pair<uint32_t, uint32_t>> extents;
  for (const Placement& p : placements) {
    const model::KernelObjectTypeSpec* spec = m.type_named(p.type);
    if (!spec) return BuildError{"placement references undeclared type '" + p.type + "'"};
    uint32_t end = p.address + spec->size;
    if (!m.layout.kernel_region.contains(p.address) ||
        !m.layout.kernel_region.contains(end - 1))
      return BuildError{"placement of " + p.type + " at " + hex32(p.address) +
                        " lies outside the kernel region"};
    for (auto& [b, e] : extents)
      if (p.address < e && b < end) return BuildError{"overlapping placements"};
    extents.push_back({p.address, end});
    image.store(p.address, spec->type_id, 32);
    for (const auto& [fname, fvalue] : p.init) {
      const model::FieldSpec* fs = spec->field_named(fname);
      if (!fs)
        return BuildError{"placement of " + p.type + " initializes unknown field '" +
                          fname + "'"};
      image.store(p.address + fs->offset, fvalue, fs->width);
    }
    image.place(p.type, p.address);
  }
  return image;
}

bool address_validate(uint32_t ptr, const model::MemoryLayoutSpec& layout) {
  return !layout.thread_region.contains(ptr);
}

SemanticCheck semantic_validate(const MemoryImage& image, uint32_t ptr,
                                const std::vector<Requirement>& reqs) {
  SemanticCheck r;
  try {
    for (const Requirement& req : reqs) {
      if (image.load(ptr + req.offset, req.width) != req.equals) return r;
    }
    r.ok = true;
  } catch (const MemoryFault&) {
    r.fault = true;
  }
  return r;
}

StepOutcome Simulator::invoke_syscall(MemoryImage& image, const std::string& syscall,
                                      const std::vector<uint32_t>& args,
                                      std::vector<WordDiff>* diff) {
  StepOutcome out;
  out.syscall = syscall;
  const model::SyscallManifest* manifest = model_->syscall_named(syscall);
  if (!manifest) {
    out.status = StepStatus::Fault;
    out.detail = "unknown syscall";
    return out;
  }
  const ir::Function* fn = program_->function(manifest->ir_name);
  if (!fn) {
    out.status = StepStatus::Fault;
    out.detail = "no IR fixture for @" + manifest->ir_name;
    return out;
  }
  if (args.size() != fn->params.size()) {
    out.status = StepStatus::Fault;
    out.detail = "argument count mismatch";
    return out;
  }

  if (manifest->object_param && manifest->address_validation) {
    size_t idx = static_cast<size_t>(*manifest->object_param);
    if (idx < args.size() && !address_validate(args[idx], model_->layout)) {
      out.status = StepStatus::RejectedAddress;
      out.detail = "kernel object pointer inside the running thread's region";
      return out;
    }
  }

  // journal writes so a rejected call leaves the image untouched
  std::vector<concrete::ConcreteWrite> journal;
  concrete::Env env;
  env.load = [&](uint32_t addr, int width) -> uint32_t {
    uint32_t v = 0;
    int n = width == 32 ? 4 : 1;
    for (int b = 0; b < n; b++) {
      uint32_t a = addr + b;
      std::optional<uint8_t> pending;
      for (auto it = journal.rbegin(); it != journal.rend(); ++it) {
        int wn = it->width == 32 ? 4 : 1;
        if (a >= it->address && a < it->address + static_cast<uint32_t>(wn)) {
          pending = static_cast<uint8_t>((it->value >> (8 * (a - it->address))) & 0xFF);
          break;
        }
      }
      uint8_t byte = pending ? *pending : static_cast<uint8_t>(image.load(a, 8) & 0xFF);
      v |= static_cast<uint32_t>(byte) << (8 * b);
    }
    return v;
  };
  env.store = [&](uint32_t addr, uint32_t value, int width) {
    int n = width == 32 ? 4 : 1;
    for (int b = 0; b < n; b++)
      if (!image.layout().mapped(addr + b))
        throw MemoryFault{"unmapped write at " + hex32(addr + b)};
    journal.push_back({addr, value, width});
  };

  concrete::RunResult run =
      concrete::run_function(*program_, *fn, args, model_->constants, env);

  switch (run.status) {
  case concrete::RunStatus::Ok: break;
  case concrete::RunStatus::Rejected:
    out.status = StepStatus::RejectedSemantic;
    out.detail = "semantic validation failed";
    return out;
  case concrete::RunStatus::Fault:
  case concrete::RunStatus::LoopBounded:
    out.status = StepStatus::Fault;
    out.detail = run.fault_reason.empty() ? "execution fault" : run.fault_reason;
    return out;
  }

  // apply the journal, tracking word-granular diffs
  std::map<uint32_t, std::pair<uint32_t, uint32_t>> words; // aligned -> (old,new)
  for (const concrete::ConcreteWrite& w : journal) {
    int n = w.width == 32 ? 4 : 1;
    for (int b = 0; b < n; b++) {
      uint32_t aligned = (w.address + b) & ~3u;
      if (!words.count(aligned)) words[aligned] = {image.load(aligned, 32), 0};
    }
  }
  for (const concrete::ConcreteWrite& w : journal) image.store(w.address, w.value, w.width);
  for (auto& [aligned, oldnew] : words) {
    oldnew.second = image.load(aligned, 32);
    if (diff && oldnew.first != oldnew.second)
      diff->push_back({aligned, oldnew.first, oldnew.second});
  }
  return out;
}

SimResult Simulator::run_chain(MemoryImage image, const AttackChain& chain,
                               const std::map<std::string, uint32_t>& bindings) const {
  SimResult result;
  Simulator self = *this;
  for (size_t si = 0; si < chain.steps.size(); si++) {
    const ChainStep& step = chain.steps[si];
    std::vector<uint32_t> args;
    bool bound = true;
    for (const ArgValue& a : step.args) {
      if (a.constant) {
        args.push_back(*a.constant);
        continue;
      }
      auto it = bindings.find(a.placeholder);
      if (it != bindings.end()) {
        args.push_back(it->second);
        continue;
      }
      auto dit = chain.default_bindings.find(a.placeholder);
      if (dit != chain.default_bindings.end()) {
        args.push_back(dit->second);
        continue;
      }
      result.status = StepStatus::Fault;
      result.failed_step = static_cast<int>(si);
      result.trace.push_back(
          {step.syscall, StepStatus::Fault, "unbound placeholder " + a.placeholder});
      bound = false;
      break;
    }
    if (!bound) return result;
    std::vector<WordDiff> step_diff;
    StepOutcome out = self.invoke_syscall(image, step.syscall, args, &step_diff);
    result.trace.push_back(out);
    if (out.status != StepStatus::Ok) {
      result.status = out.status;
      result.failed_step = static_cast<int>(si);
      return result;
    }
    for (const WordDiff& d : step_diff) result.diff.push_back(d);
  }
  result.mpu_disabled = !image.mpu_enabled();
  return result;
}

} // namespace kom::kernelsim
