#include "kom/model.hpp"

#include "kom/toml.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace kom::model {

const FieldSpec* KernelObjectTypeSpec::field_at_offset(uint32_t offset) const {
  for (const FieldSpec& f : fields) {
    uint32_t bytes = f.width == 32 ? 4 : 1;
    if (offset >= f.offset && offset < f.offset + bytes) return &f;
  }
  return nullptr;
}

const FieldSpec* KernelObjectTypeSpec::field_named(const std::string& n) const {
  for (const FieldSpec& f : fields)
    if (f.name == n) return &f;
  return nullptr;
}

const KernelObjectTypeSpec* Model::type_named(const std::string& name) const {
  for (const auto& t : types)
    if (t.name == name) return &t;
  return nullptr;
}

const SyscallManifest* Model::syscall_named(const std::string& name) const {
  for (const auto& s : syscalls)
    if (s.name == name) return &s;
  return nullptr;
}

std::vector<uint32_t> Model::type_ids() const {
  std::vector<uint32_t> ids;
  for (const auto& t : types) ids.push_back(t.type_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

bool Model::is_type_id(uint32_t v) const {
  for (const auto& t : types)
    if (t.type_id == v) return true;
  return false;
}

namespace {

struct Loader {
  std::vector<std::string> errors;

  void error(const std::string& path, const std::string& msg) {
    errors.push_back(path + ": " + msg);
  }

  uint32_t req_int(const toml::Value* t, const std::string& path, const std::string& key) {
    const toml::Value* v = t->get(key);
    if (!v || v->kind != toml::Value::Kind::Integer) {
      error(path + "." + key, "required integer missing");
      return 0;
    }
    return static_cast<uint32_t>(v->integer);
  }

  std::string req_str(const toml::Value* t, const std::string& path, const std::string& key) {
    const toml::Value* v = t->get(key);
    if (!v || v->kind != toml::Value::Kind::String) {
      error(path + "." + key, "required string missing");
      return "";
    }
    return v->string;
  }

  std::optional<Region> req_region(const toml::Value* t, const std::string& path,
                                   const std::string& key) {
    const toml::Value* v = t->get(key);
    if (!v || v->kind != toml::Value::Kind::Array || v->array.size() != 2 ||
        v->array[0]->kind != toml::Value::Kind::Integer ||
        v->array[1]->kind != toml::Value::Kind::Integer) {
      error(path + "." + key, "expected [base, end]");
      return std::nullopt;
    }
    Region r{static_cast<uint32_t>(v->array[0]->integer),
             static_cast<uint32_t>(v->array[1]->integer)};
    if (r.base >= r.end) error(path + "." + key, "region base must be below end");
    return r;
  }
};

bool regions_overlap(const Region& a, const Region& b) {
  return a.base < b.end && b.base < a.end;
}

} // namespace

LoadResult load_manifest_text(const std::string& text) {
  LoadResult result;
  toml::Result parsed = toml::parse(text);
  if (!parsed.ok()) {
    for (const auto& e : parsed.errors)
      result.errors.push_back("manifest:" + std::to_string(e.line) + ": " + e.message);
    return result;
  }
  Loader ld;
  Model m;
  const toml::Value* root = parsed.root.get();

  const toml::Value* layout = root->get("layout");
  if (!layout || layout->kind != toml::Value::Kind::Table) {
    ld.error("layout", "required table missing");
  } else {
    auto tr = ld.req_region(layout, "layout", "thread_region");
    auto kr = ld.req_region(layout, "layout", "kernel_region");
    auto dr = ld.req_region(layout, "layout", "device_region");
    if (tr) m.layout.thread_region = *tr;
    if (kr) m.layout.kernel_region = *kr;
    if (dr) m.layout.device_region = *dr;
    m.layout.mpu_register = ld.req_int(layout, "layout", "mpu_register");
    m.layout.kernel_alloc_base = ld.req_int(layout, "layout", "kernel_alloc_base");
    m.layout.user_alloc_base = ld.req_int(layout, "layout", "user_alloc_base");
    if (tr && kr && dr) {
      if (regions_overlap(*tr, *kr) || regions_overlap(*tr, *dr) || regions_overlap(*kr, *dr))
        ld.error("layout", "memory regions must be pairwise disjoint");
      if (!dr->contains(m.layout.mpu_register))
        ld.error("layout.mpu_register", "MPU register must lie inside the device region");
    }
  }

  if (const toml::Value* consts = root->get("constants");
      consts && consts->kind == toml::Value::Kind::Table) {
    for (const auto& key : consts->table_order) {
      const toml::Value* v = consts->get(key);
      if (v->kind != toml::Value::Kind::Integer)
        ld.error("constants." + key, "expected integer");
      else
        m.constants[key] = static_cast<uint32_t>(v->integer);
    }
  }

  if (const toml::Value* globals = root->get("globals")) {
    if (globals->kind != toml::Value::Kind::Array)
      ld.error("globals", "expected array of tables");
    else {
      for (size_t i = 0; i < globals->array.size(); i++) {
        const toml::Value* g = globals->array[i].get();
        std::string path = "globals[" + std::to_string(i) + "]";
        GlobalSpec gs;
        gs.name = ld.req_str(g, path, "name");
        gs.address = ld.req_int(g, path, "address");
        if (const toml::Value* v = g->get("value");
            v && v->kind == toml::Value::Kind::Integer)
          gs.value = static_cast<uint32_t>(v->integer);
        m.layout.globals.push_back(gs);
      }
    }
  }

  const toml::Value* types = root->get("types");
  if (!types || types->kind != toml::Value::Kind::Array || types->array.empty()) {
    ld.error("types", "at least one kernel object type required");
  } else {
    for (size_t i = 0; i < types->array.size(); i++) {
      const toml::Value* t = types->array[i].get();
      std::string path = "types[" + std::to_string(i) + "]";
      KernelObjectTypeSpec spec;
      spec.name = ld.req_str(t, path, "name");
      spec.type_id = ld.req_int(t, path, "type_id");
      spec.size = ld.req_int(t, path, "size");
      if (const toml::Value* c = t->get("creator");
          c && c->kind == toml::Value::Kind::String)
        spec.creator = c->string;
      const toml::Value* fields = t->get("fields");
      if (!fields || fields->kind != toml::Value::Kind::Array) {
        ld.error(path + ".fields", "expected array");
      } else {
        for (size_t fi = 0; fi < fields->array.size(); fi++) {
          const toml::Value* f = fields->array[fi].get();
          std::string fpath = path + ".fields[" + std::to_string(fi) + "]";
          FieldSpec fs;
          fs.name = ld.req_str(f, fpath, "name");
          fs.offset = ld.req_int(f, fpath, "offset");
          fs.width = static_cast<int>(ld.req_int(f, fpath, "width"));
          std::string kind = ld.req_str(f, fpath, "kind");
          if (kind == "pointer") fs.kind = FieldSpec::Kind::Pointer;
          else if (kind == "scalar") fs.kind = FieldSpec::Kind::Scalar;
          else ld.error(fpath + ".kind", "expected \"scalar\" or \"pointer\"");
          if (fs.width != 8 && fs.width != 32)
            ld.error(fpath + ".width", "field width must be 8 or 32");
          spec.fields.push_back(fs);
        }
      }
      // structural invariants
      for (size_t fi = 0; fi + 1 < spec.fields.size(); fi++)
        if (spec.fields[fi].offset >= spec.fields[fi + 1].offset)
          ld.error(path + ".fields", "field offsets must be strictly increasing");
      for (const FieldSpec& fs : spec.fields) {
        uint32_t bytes = fs.width == 32 ? 4 : 1;
        if (fs.offset + bytes > spec.size)
          ld.error(path + ".fields." + fs.name, "field extends past object size");
      }
      if (spec.fields.empty() || spec.fields[0].offset != 0 || spec.fields[0].width != 32)
        ld.error(path + ".fields",
                 "first field must sit at offset 0 with width 32 (type id slot)");
      m.types.push_back(std::move(spec));
    }
  }

  const toml::Value* syscalls = root->get("syscalls");
  if (syscalls && syscalls->kind == toml::Value::Kind::Array) {
    for (size_t i = 0; i < syscalls->array.size(); i++) {
      const toml::Value* s = syscalls->array[i].get();
      std::string path = "syscalls[" + std::to_string(i) + "]";
      SyscallManifest sm;
      sm.name = ld.req_str(s, path, "name");
      sm.ir_name = sm.name;
      if (const toml::Value* v = s->get("ir"); v && v->kind == toml::Value::Kind::String)
        sm.ir_name = v->string;
      if (const toml::Value* v = s->get("object_param");
          v && v->kind == toml::Value::Kind::Integer)
        sm.object_param = static_cast<int>(v->integer);
      if (const toml::Value* v = s->get("object_type");
          v && v->kind == toml::Value::Kind::String)
        sm.object_type = v->string;
      if (const toml::Value* v = s->get("address_validation");
          v && v->kind == toml::Value::Kind::Boolean)
        sm.address_validation = v->boolean;
      if (const toml::Value* v = s->get("reset_before_reuse");
          v && v->kind == toml::Value::Kind::String)
        sm.reset_before_reuse = v->string;
      if (const toml::Value* v = s->get("user_bound");
          v && v->kind == toml::Value::Kind::Array && v->array.size() == 2)
        sm.user_bound = {static_cast<uint32_t>(v->array[0]->integer),
                         static_cast<uint32_t>(v->array[1]->integer)};
      if (!sm.object_type.empty()) {
        bool found = false;
        for (const auto& t : m.types)
          if (t.name == sm.object_type) found = true;
        if (!found)
          ld.error(path + ".object_type",
                   "references undeclared type '" + sm.object_type + "'");
      }
      if (sm.object_param && sm.object_type.empty())
        ld.error(path, "object_param requires object_type");
      m.syscalls.push_back(std::move(sm));
    }
  } else {
    ld.error("syscalls", "expected array of tables");
  }

  // creator references must resolve
  for (const auto& t : m.types) {
    if (t.creator.empty()) continue;
    bool found = false;
    for (const auto& s : m.syscalls)
      if (s.name == t.creator) found = true;
    if (!found)
      ld.error("types." + t.name + ".creator",
               "references undeclared syscall '" + t.creator + "'");
  }

  if (!ld.errors.empty()) {
    result.errors = std::move(ld.errors);
    return result;
  }
  result.model = std::move(m);
  return result;
}

LoadResult load_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    LoadResult r;
    r.errors.push_back(path + ": cannot open manifest");
    return r;
  }
  std::ostringstream os;
  os << f.rdbuf();
  return load_manifest_text(os.str());
}

} // namespace kom::model
