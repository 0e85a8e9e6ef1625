#include "kom/report.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <sstream>

namespace kom::report {

using classifier::ConditionReq;
using classifier::DerefClass;
using classifier::FieldClass;
using classifier::SyscallProfile;
using classifier::WriteTemplateEntry;

namespace {

const char* deref_name(DerefClass d) {
  switch (d) {
  case DerefClass::None: return "none";
  case DerefClass::FixedValue: return "fixed-value";
  case DerefClass::FullyControllable: return "fully-controllable";
  }
  return "none";
}

DerefClass deref_from_name(const std::string& s) {
  if (s == "fixed-value") return DerefClass::FixedValue;
  if (s == "fully-controllable") return DerefClass::FullyControllable;
  return DerefClass::None;
}

std::string fmt_ms(double ms) {
  char buf[32];
  snprintf(buf, sizeof buf, "%.3f", ms);
  return buf;
}

const char* base_name(WriteTemplateEntry::Base b) {
  switch (b) {
  case WriteTemplateEntry::Base::KernelObject: return "kernel-object";
  case WriteTemplateEntry::Base::ParamPointer: return "param-pointer";
  case WriteTemplateEntry::Base::Global: return "global";
  case WriteTemplateEntry::Base::Deref: return "deref";
  }
  return "kernel-object";
}

WriteTemplateEntry::Base base_from_name(const std::string& s) {
  if (s == "param-pointer") return WriteTemplateEntry::Base::ParamPointer;
  if (s == "global") return WriteTemplateEntry::Base::Global;
  if (s == "deref") return WriteTemplateEntry::Base::Deref;
  return WriteTemplateEntry::Base::KernelObject;
}

const char* source_name(WriteTemplateEntry::Source s) {
  switch (s) {
  case WriteTemplateEntry::Source::Const: return "const";
  case WriteTemplateEntry::Source::Param: return "param";
  case WriteTemplateEntry::Source::Opaque: return "opaque";
  }
  return "opaque";
}

WriteTemplateEntry::Source source_from_name(const std::string& s) {
  if (s == "const") return WriteTemplateEntry::Source::Const;
  if (s == "param") return WriteTemplateEntry::Source::Param;
  return WriteTemplateEntry::Source::Opaque;
}

std::vector<const SyscallProfile*> sorted(const std::vector<SyscallProfile>& profiles) {
  std::vector<const SyscallProfile*> out;
  for (const auto& p : profiles) out.push_back(&p);
  std::sort(out.begin(), out.end(), [](const SyscallProfile* a, const SyscallProfile* b) {
    return a->name < b->name;
  });
  return out;
}

} // namespace

bool parse_word(const json& v, uint32_t* out) {
  if (v.is_number_unsigned() || v.is_number_integer()) {
    *out = static_cast<uint32_t>(v.get<int64_t>());
    return true;
  }
  if (v.is_string()) {
    const std::string& s = v.get_ref<const std::string&>();
    char* end = nullptr;
    unsigned long value = strtoul(s.c_str(), &end, 0);
    if (end && *end == '\0') {
      *out = static_cast<uint32_t>(value);
      return true;
    }
  }
  return false;
}

std::string to_csv(const std::vector<SyscallProfile>& profiles, bool zero_time) {
  std::ostringstream os;
  os << "syscall,M1,M2,M3,M4,R,I,Cmax,Cmin,deref_class,status,time_ms,paths,"
        "instructions\n";
  for (const SyscallProfile* p : sorted(profiles)) {
    os << p->name << "," << p->m1 << "," << p->m2 << "," << p->m3 << "," << p->m4 << ","
       << p->r << "," << p->i << ",";
    if (p->cmax) os << *p->cmax;
    else os << "N/A";
    os << ",";
    if (p->cmin) os << *p->cmin;
    else os << "N/A";
    os << "," << deref_name(p->deref) << "," << p->stats.status << ",";
    if (p->stats.status == 'A') {
      os << "N/A,N/A,N/A";
    } else {
      os << (zero_time ? "0.000" : fmt_ms(p->stats.wall_ms)) << "," << p->stats.paths
         << "," << p->stats.instructions;
    }
    os << "\n";
  }
  return os.str();
}

json to_json(const std::vector<SyscallProfile>& profiles, bool zero_time) {
  json root;
  root["schema"] = "komforge-report-v1";
  json rows = json::array();
  for (const SyscallProfile* p : sorted(profiles)) {
    json r;
    r["syscall"] = p->name;
    r["object_type"] = p->object_type;
    if (p->object_param) r["object_param"] = *p->object_param;
    else r["object_param"] = nullptr;
    r["reset_before_reuse"] = p->reset_before_reuse;
    r["m1"] = p->m1;
    r["m2"] = p->m2;
    r["m3"] = p->m3;
    r["m4"] = p->m4;
    r["r"] = p->r;
    r["i"] = p->i;
    if (p->cmax) r["cmax"] = *p->cmax;
    else r["cmax"] = nullptr;
    if (p->cmin) r["cmin"] = *p->cmin;
    else r["cmin"] = nullptr;
    r["deref_class"] = deref_name(p->deref);
    if (p->deref_field) r["deref_field"] = *p->deref_field;
    else r["deref_field"] = nullptr;
    if (p->deref_fixed_value) r["deref_fixed_value"] = *p->deref_fixed_value;
    else r["deref_fixed_value"] = nullptr;
    r["deref_downgraded"] = p->deref_downgraded;
    r["status"] = std::string(1, p->stats.status);
    if (p->stats.status == 'A') {
      r["time_ms"] = nullptr;
      r["paths"] = nullptr;
      r["instructions"] = nullptr;
    } else {
      r["time_ms"] = zero_time ? 0.0 : p->stats.wall_ms;
      r["paths"] = p->stats.paths;
      r["instructions"] = p->stats.instructions;
    }
    json fields = json::array();
    for (const FieldClass& f : p->fields) {
      json jf;
      jf["offset"] = f.offset;
      jf["width"] = f.width;
      jf["m1"] = f.m1;
      jf["m2"] = f.m2;
      jf["m3"] = f.m3;
      jf["m4"] = f.m4;
      jf["unknown_limited"] = f.unknown_limited;
      jf["identical_member"] = f.identical_member;
      jf["witnessing_path"] = f.witnessing_path;
      fields.push_back(jf);
    }
    r["fields"] = fields;
    r["condition_offsets"] = p->condition_offsets;
    json reqs = json::array();
    for (const ConditionReq& c : p->condition_reqs) {
      json jc;
      jc["offset"] = c.offset;
      jc["width"] = c.width;
      if (c.eq_value) jc["eq_value"] = *c.eq_value;
      else jc["eq_value"] = nullptr;
      jc["is_type_id"] = c.is_type_id;
      reqs.push_back(jc);
    }
    r["condition_reqs"] = reqs;
    json tmpl = json::array();
    for (const WriteTemplateEntry& w : p->write_template) {
      json jw;
      jw["base"] = base_name(w.base);
      jw["base_param"] = w.base_param;
      jw["offset"] = w.offset;
      jw["width"] = w.width;
      jw["source"] = source_name(w.source);
      jw["const_value"] = w.const_value;
      jw["param_index"] = w.param_index;
      tmpl.push_back(jw);
    }
    r["write_template"] = tmpl;
    r["arg_model"] = p->arg_model;
    r["param_names"] = p->param_names;
    r["canonical_path"] = p->canonical_path;
    r["diagnostics"] = p->diagnostics;
    r["unaligned_writes"] = p->unaligned_writes;
    r["raw_constraints"] = p->raw_constraints;
    rows.push_back(r);
  }
  root["syscalls"] = rows;
  return root;
}

std::vector<planner::SyscallModel> syscall_models_from_json(const json& report,
                                                            std::string* error) {
  std::vector<planner::SyscallModel> out;
  if (!report.contains("syscalls") || !report["syscalls"].is_array()) {
    if (error) *error = "report: missing syscalls array";
    return out;
  }
  for (const json& r : report["syscalls"]) {
    SyscallProfile prof;
    model::SyscallManifest manifest;
    try {
      prof.name = r.at("syscall").get<std::string>();
      manifest.name = prof.name;
      prof.object_type = r.value("object_type", std::string());
      manifest.object_type = prof.object_type;
      prof.m1 = r.value("m1", 0);
      prof.m2 = r.value("m2", 0);
      prof.m3 = r.value("m3", 0);
      prof.m4 = r.value("m4", 0);
      prof.deref = deref_from_name(r.value("deref_class", std::string("none")));
      if (r.contains("deref_field") && !r["deref_field"].is_null())
        prof.deref_field = r["deref_field"].get<uint32_t>();
      if (r.contains("deref_fixed_value") && !r["deref_fixed_value"].is_null())
        prof.deref_fixed_value = r["deref_fixed_value"].get<uint32_t>();
      if (r.contains("object_param") && !r["object_param"].is_null())
        manifest.object_param = r["object_param"].get<int>();
      manifest.reset_before_reuse = r.value("reset_before_reuse", std::string());
      for (const json& jf : r.value("fields", json::array())) {
        FieldClass f;
        f.offset = jf.at("offset").get<uint32_t>();
        f.width = jf.value("width", 32);
        f.m1 = jf.value("m1", false);
        f.m2 = jf.value("m2", false);
        f.m3 = jf.value("m3", false);
        f.m4 = jf.value("m4", false);
        f.unknown_limited = jf.value("unknown_limited", false);
        f.identical_member = jf.value("identical_member", false);
        prof.fields.push_back(f);
      }
      for (const json& jc : r.value("condition_reqs", json::array())) {
        ConditionReq c;
        c.offset = jc.at("offset").get<uint32_t>();
        c.width = jc.value("width", 32);
        if (jc.contains("eq_value") && !jc["eq_value"].is_null())
          c.eq_value = jc["eq_value"].get<uint32_t>();
        c.is_type_id = jc.value("is_type_id", false);
        prof.condition_reqs.push_back(c);
      }
      for (const json& jw : r.value("write_template", json::array())) {
        WriteTemplateEntry w;
        w.base = base_from_name(jw.value("base", std::string("kernel-object")));
        w.base_param = jw.value("base_param", -1);
        w.offset = jw.at("offset").get<uint32_t>();
        w.width = jw.value("width", 32);
        w.source = source_from_name(jw.value("source", std::string("opaque")));
        w.const_value = jw.value("const_value", 0u);
        w.param_index = jw.value("param_index", -1);
        prof.write_template.push_back(w);
      }
      if (r.contains("arg_model"))
        for (auto it = r["arg_model"].begin(); it != r["arg_model"].end(); ++it)
          prof.arg_model[it.key()] = it.value().get<uint32_t>();
      for (const json& jp : r.value("param_names", json::array()))
        prof.param_names.push_back(jp.get<std::string>());
    } catch (const json::exception& e) {
      if (error) *error = "report: " + std::string(e.what());
      return {};
    }
    out.push_back(planner::digest(prof, manifest));
  }
  return out;
}

json chain_to_json(const kernelsim::AttackChain& chain) {
  json root;
  root["schema"] = "komforge-chain-v1";
  root["depth_limited"] = chain.depth_limited;
  root["solution_count"] = chain.solution_count;
  root["default_bindings"] = chain.default_bindings;
  json steps = json::array();
  for (const kernelsim::ChainStep& s : chain.steps) {
    json js;
    js["syscall"] = s.syscall;
    js["base"] = s.base;
    if (s.field_offset) js["field_offset"] = *s.field_offset;
    else js["field_offset"] = nullptr;
    js["role"] = s.role;
    json args = json::array();
    for (const kernelsim::ArgValue& a : s.args) {
      json ja;
      if (a.constant) ja["const"] = *a.constant;
      else ja["placeholder"] = a.placeholder;
      args.push_back(ja);
    }
    js["args"] = args;
    steps.push_back(js);
  }
  root["steps"] = steps;
  return root;
}

kernelsim::AttackChain chain_from_json(const json& j, std::string* error) {
  kernelsim::AttackChain chain;
  try {
    chain.depth_limited = j.value("depth_limited", false);
    chain.solution_count = j.value("solution_count", 0);
    if (j.contains("default_bindings"))
      for (auto it = j["default_bindings"].begin(); it != j["default_bindings"].end(); ++it) {
        uint32_t v = 0;
        if (parse_word(it.value(), &v)) chain.default_bindings[it.key()] = v;
      }
    for (const json& js : j.at("steps")) {
      kernelsim::ChainStep s;
      s.syscall = js.at("syscall").get<std::string>();
      uint32_t base = 0;
      if (js.contains("base") && parse_word(js["base"], &base)) s.base = base;
      if (js.contains("field_offset") && !js["field_offset"].is_null())
        s.field_offset = js["field_offset"].get<uint32_t>();
      s.role = js.value("role", std::string("forge"));
      for (const json& ja : js.value("args", json::array())) {
        kernelsim::ArgValue a;
        if (ja.contains("const")) {
          uint32_t v = 0;
          if (!parse_word(ja["const"], &v)) {
            if (error) *error = "chain: bad constant argument";
            return {};
          }
          a.constant = v;
        } else if (ja.contains("placeholder")) {
          a.placeholder = ja["placeholder"].get<std::string>();
        } else {
          if (error) *error = "chain: argument needs const or placeholder";
          return {};
        }
        s.args.push_back(a);
      }
      chain.steps.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    if (error) *error = "chain: " + std::string(e.what());
    return {};
  }
  return chain;
}

std::vector<kernelsim::Placement> placements_from_json(const json& j, std::string* error) {
  std::vector<kernelsim::Placement> out;
  try {
    for (const json& jp : j.value("placements", json::array())) {
      kernelsim::Placement p;
      p.type = jp.at("type").get<std::string>();
      if (!parse_word(jp.at("address"), &p.address)) {
        if (error) *error = "placements: bad address";
        return {};
      }
      if (jp.contains("init"))
        for (auto it = jp["init"].begin(); it != jp["init"].end(); ++it) {
          uint32_t v = 0;
          if (!parse_word(it.value(), &v)) {
            if (error) *error = "placements: bad init value for " + it.key();
            return {};
          }
          p.init[it.key()] = v;
        }
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    if (error) *error = "placements: " + std::string(e.what());
    return {};
  }
  return out;
}

json result_to_json(const kernelsim::SimResult& result) {
  json root;
  auto status_name = [](kernelsim::StepStatus s) -> std::string {
    switch (s) {
    case kernelsim::StepStatus::Ok: return "ok";
    case kernelsim::StepStatus::RejectedAddress: return "sanitization-rejected(address)";
    case kernelsim::StepStatus::RejectedSemantic: return "sanitization-rejected(semantic)";
    case kernelsim::StepStatus::Fault: return "fault";
    }
    return "fault";
  };
  root["schema"] = "komforge-result-v1";
  root["status"] = status_name(result.status);
  root["failed_step"] = result.failed_step;
  root["mpu_disabled"] = result.mpu_disabled;
  json diff = json::array();
  for (const kernelsim::WordDiff& d : result.diff) {
    json jd;
    jd["address"] = d.address;
    jd["before"] = d.before;
    jd["after"] = d.after;
    diff.push_back(jd);
  }
  root["diff"] = diff;
  json trace = json::array();
  for (const kernelsim::StepOutcome& t : result.trace) {
    json jt;
    jt["syscall"] = t.syscall;
    jt["status"] = status_name(t.status);
    jt["detail"] = t.detail;
    trace.push_back(jt);
  }
  root["trace"] = trace;
  return root;
}

planner::AttackProblem attack_problem_from_json(const json& j, std::string* error) {
  planner::AttackProblem p;
  try {
    const json& mal = j.at("malicious");
    p.malicious_type = mal.at("type").get<std::string>();
    if (!parse_word(mal.at("address"), &p.malicious_address))
      throw json::other_error::create(501, "bad malicious address", nullptr);
    if (mal.contains("create_args"))
      for (auto it = mal["create_args"].begin(); it != mal["create_args"].end(); ++it) {
        uint32_t v = 0;
        if (parse_word(it.value(), &v)) p.malicious_create_args[it.key()] = v;
      }
    const json& acc = j.at("accomplice");
    p.accomplice_type = acc.at("type").get<std::string>();
    if (!parse_word(acc.at("address"), &p.accomplice_address))
      throw json::other_error::create(501, "bad accomplice address", nullptr);
    for (const json& js : acc.value("pre_create", json::array())) {
      planner::SetupStep s;
      s.syscall = js.at("syscall").get<std::string>();
      for (const json& ja : js.value("args", json::array())) {
        uint32_t v = 0;
        if (!parse_word(ja, &v))
          throw json::other_error::create(501, "bad pre_create argument", nullptr);
        s.args.push_back(v);
      }
      p.pre_create.push_back(std::move(s));
    }
    if (acc.contains("create_args"))
      for (auto it = acc["create_args"].begin(); it != acc["create_args"].end(); ++it) {
        uint32_t v = 0;
        if (parse_word(it.value(), &v)) p.accomplice_create_args[it.key()] = v;
      }
    const json& deref = j.at("deref");
    p.deref_syscall = deref.at("syscall").get<std::string>();
    if (!parse_word(deref.at("value"), &p.final_value))
      throw json::other_error::create(501, "bad deref value", nullptr);
    p.max_depth = j.value("max_depth", 8);
  } catch (const json::exception& e) {
    if (error) *error = "problem: " + std::string(e.what());
  }
  return p;
}

} // namespace kom::report
