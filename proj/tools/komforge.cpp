#include "kom/pipeline.hpp"
#include "kom/planner.hpp"
#include "kom/report.hpp"
#include "kom/solver.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <set>
#include <functional>
#include <iostream>
#include <sstream>

using json = nlohmann::json;

namespace {

// exit codes: 0 ok, 1 I/O or parse, 2 abnormal analysis, 3 no solution,
// 4 simulation rejection

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitAbnormal = 2;
constexpr int kExitNoSolution = 3;
constexpr int kExitRejected = 4;

bool write_output(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    return true;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) return false;
  f << content;
  return f.good();
}

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::optional<json> read_json(const std::string& path, const std::string& what) {
  auto text = read_file(path);
  if (!text) {
    std::cerr << "komforge: cannot open " << what << " '" << path << "'\n";
    return std::nullopt;
  }
  json j = json::parse(*text, nullptr, false);
  if (j.is_discarded()) {
    std::cerr << "komforge: " << what << " '" << path << "' is not valid JSON\n";
    return std::nullopt;
  }
  return j;
}

bool parse_placement_arg(const std::string& arg, std::string* type, uint32_t* addr) {
  auto at = arg.find('@');
  if (at == std::string::npos) return false;
  *type = arg.substr(0, at);
  char* end = nullptr;
  unsigned long v = strtoul(arg.c_str() + at + 1, &end, 0);
  if (!end || *end != '\0') return false;
  *addr = static_cast<uint32_t>(v);
  return !type->empty();
}

uint64_t solver_budget_default() {
  if (const char* env = std::getenv("KOMFORGE_SOLVER_BUDGET")) {
    char* end = nullptr;
    unsigned long long v = strtoull(env, &end, 0);
    if (end && *end == '\0' && v > 0) return v;
  }
  return 1ull << 20;
}

struct CommonAnalysisFlags {
  std::string manifest = "fixtures/model.toml";
  std::string corpus = "fixtures/ir";
  int loop_threshold = 16;
  long max_paths = 100000;
  long max_ins = 10000000;
  uint64_t solver_budget = solver_budget_default();
  uint32_t seed = 0x4B4F4D46u;

  void attach(CLI::App* cmd) {
    cmd->add_option("--manifest", manifest, "kernel object model manifest");
    cmd->add_option("--corpus", corpus, "directory of .kir fixtures");
    cmd->add_option("--loop-threshold", loop_threshold, "per-back-edge loop bound");
    cmd->add_option("--max-paths", max_paths, "path ceiling per syscall");
    cmd->add_option("--max-ins", max_ins, "instruction ceiling per syscall");
    cmd->add_option("--solver-budget", solver_budget, "solver steps per query");
    cmd->add_option("--seed", seed, "seed for randomized solver probing");
  }
};

int run_analysis(const CommonAnalysisFlags& flags, kom::pipeline::Analysis* out) {
  kom::pipeline::LoadOutcome loaded =
      kom::pipeline::load_corpus(flags.manifest, flags.corpus);
  if (!loaded.ok()) {
    for (const std::string& e : loaded.errors) std::cerr << e << "\n";
    return kExitIo;
  }
  kom::pipeline::AnalysisOptions opts;
  opts.limits.loop_threshold = flags.loop_threshold;
  opts.limits.max_paths = flags.max_paths;
  opts.limits.max_instructions = flags.max_ins;
  opts.limits.solver_budget = flags.solver_budget;
  opts.probe_seed = flags.seed;
  *out = kom::pipeline::analyze(*loaded.corpus, opts);
  return kExitOk;
}

int cmd_analyze(const CommonAnalysisFlags& flags, const std::string& out_path,
                const std::string& format, bool no_timing) {
  if (format != "csv" && format != "json") {
    std::cerr << "komforge: unknown --format '" << format << "' (csv or json)\n";
    return kExitIo;
  }
  kom::pipeline::Analysis analysis;
  int rc = run_analysis(flags, &analysis);
  if (rc != kExitOk) return rc;
  std::string content =
      format == "csv" ? kom::report::to_csv(analysis.profiles, no_timing)
                      : kom::report::to_json(analysis.profiles, no_timing).dump(2) + "\n";
  if (!write_output(out_path, content)) {
    std::cerr << "komforge: cannot write '" << out_path << "'\n";
    return kExitIo;
  }
  for (const auto& p : analysis.profiles)
    if (p.stats.status == 'A')
      std::cerr << "analysis: " << p.name << " exited abnormally\n";
  return analysis.any_abnormal ? kExitAbnormal : kExitOk;
}

int cmd_plan(const std::string& report_path, const std::string& manifest_path,
             const std::string& problem_path, const std::string& malicious,
             const std::string& target, int max_depth, const std::string& out_path) {
  auto report = read_json(report_path, "report");
  if (!report) return kExitIo;
  std::string err;
  std::vector<kom::planner::SyscallModel> corpus =
      kom::report::syscall_models_from_json(*report, &err);
  if (corpus.empty()) {
    std::cerr << "komforge: " << (err.empty() ? "report holds no syscalls" : err) << "\n";
    return kExitIo;
  }
  kom::model::LoadResult loaded = kom::model::load_manifest(manifest_path);
  if (!loaded.ok()) {
    for (const std::string& e : loaded.errors) std::cerr << e << "\n";
    return kExitIo;
  }

  kom::planner::PlanResult plan;
  if (!problem_path.empty()) {
    auto problem_json = read_json(problem_path, "problem");
    if (!problem_json) return kExitIo;
    kom::planner::AttackProblem problem =
        kom::report::attack_problem_from_json(*problem_json, &err);
    if (!err.empty()) {
      std::cerr << "komforge: " << err << "\n";
      return kExitIo;
    }
    if (max_depth > 0) problem.max_depth = max_depth;
    plan = kom::planner::plan_attack(*loaded.model, corpus, problem);
  } else {
    std::string mtype;
    uint32_t maddr = 0;
    if (!parse_placement_arg(malicious, &mtype, &maddr)) {
      std::cerr << "komforge: --malicious expects Type@0xADDRESS\n";
      return kExitIo;
    }
    char* end = nullptr;
    unsigned long t = strtoul(target.c_str(), &end, 0);
    if (target.empty() || !end || *end != '\0') {
      std::cerr << "komforge: --target expects an address\n";
      return kExitIo;
    }
    plan = kom::planner::plan_simple(*loaded.model, corpus, mtype, maddr,
                                     static_cast<uint32_t>(t),
                                     max_depth > 0 ? max_depth : 8);
  }

  if (!plan.error.empty()) {
    std::cerr << "plan: no solution (" << plan.error << ")\n";
    return kExitNoSolution;
  }
  json chain = kom::report::chain_to_json(plan.chain);
  if (!write_output(out_path, chain.dump(2) + "\n")) {
    std::cerr << "komforge: cannot write '" << out_path << "'\n";
    return kExitIo;
  }
  std::cerr << "plan: " << plan.chain.steps.size() << " steps, " << plan.solution_count
            << " solutions" << (plan.depth_limited ? " (depth-limited)" : "") << "\n";
  return kExitOk;
}

int cmd_simulate(const std::string& manifest_path, const std::string& corpus_dir,
                 const std::string& chain_path, const std::string& image_path,
                 const std::vector<std::string>& binds, const std::string& out_path) {
  kom::pipeline::LoadOutcome loaded = kom::pipeline::load_corpus(manifest_path, corpus_dir);
  if (!loaded.ok()) {
    for (const std::string& e : loaded.errors) std::cerr << e << "\n";
    return kExitIo;
  }
  auto chain_json = read_json(chain_path, "chain");
  if (!chain_json) return kExitIo;
  std::string err;
  kom::kernelsim::AttackChain chain = kom::report::chain_from_json(*chain_json, &err);
  if (!err.empty()) {
    std::cerr << "komforge: " << err << "\n";
    return kExitIo;
  }
  std::vector<kom::kernelsim::Placement> placements;
  if (!image_path.empty()) {
    auto image_json = read_json(image_path, "image");
    if (!image_json) return kExitIo;
    placements = kom::report::placements_from_json(*image_json, &err);
    if (!err.empty()) {
      std::cerr << "komforge: " << err << "\n";
      return kExitIo;
    }
  }
  auto built = kom::kernelsim::build_image(loaded.corpus->model, placements);
  if (std::holds_alternative<kom::kernelsim::BuildError>(built)) {
    std::cerr << "komforge: " << std::get<kom::kernelsim::BuildError>(built).message
              << "\n";
    return kExitIo;
  }
  std::map<std::string, uint32_t> bindings;
  for (const std::string& b : binds) {
    auto eq = b.find('=');
    char* end = nullptr;
    unsigned long v = eq == std::string::npos ? 0 : strtoul(b.c_str() + eq + 1, &end, 0);
    if (eq == std::string::npos || !end || *end != '\0') {
      std::cerr << "komforge: --bind expects name=value\n";
      return kExitIo;
    }
    bindings[b.substr(0, eq)] = static_cast<uint32_t>(v);
  }

  kom::kernelsim::Simulator sim(&loaded.corpus->model, &loaded.corpus->program);
  kom::kernelsim::SimResult result =
      sim.run_chain(std::get<kom::kernelsim::MemoryImage>(built), chain, bindings);

  if (!write_output(out_path, kom::report::result_to_json(result).dump(2) + "\n")) {
    std::cerr << "komforge: cannot write '" << out_path << "'\n";
    return kExitIo;
  }
  if (result.mpu_disabled) std::cout << "MPU: disabled\n";
  switch (result.status) {
  case kom::kernelsim::StepStatus::Ok: return kExitOk;
  case kom::kernelsim::StepStatus::RejectedAddress:
    std::cerr << "simulate: rejected at step " << result.failed_step
              << " (address validation)\n";
    return kExitRejected;
  case kom::kernelsim::StepStatus::RejectedSemantic:
    std::cerr << "simulate: rejected at step " << result.failed_step
              << " (semantic validation)\n";
    return kExitRejected;
  case kom::kernelsim::StepStatus::Fault:
    std::cerr << "simulate: fault at step " << result.failed_step << "\n";
    return kExitRejected;
  }
  return kExitRejected;
}

int cmd_rq2(const std::string& report_path, const std::string& manifest_path,
            const std::string& malicious, uint32_t range, int max_depth,
            const std::string& syscall_filter, const std::string& out_path) {
  auto report = read_json(report_path, "report");
  if (!report) return kExitIo;
  std::string err;
  std::vector<kom::planner::SyscallModel> corpus =
      kom::report::syscall_models_from_json(*report, &err);
  if (corpus.empty()) {
    std::cerr << "komforge: " << (err.empty() ? "report holds no syscalls" : err) << "\n";
    return kExitIo;
  }
  kom::model::LoadResult loaded = kom::model::load_manifest(manifest_path);
  if (!loaded.ok()) {
    for (const std::string& e : loaded.errors) std::cerr << e << "\n";
    return kExitIo;
  }
  std::string mtype;
  uint32_t maddr = 0;
  if (!parse_placement_arg(malicious, &mtype, &maddr)) {
    std::cerr << "komforge: --malicious expects Type@0xADDRESS\n";
    return kExitIo;
  }
  if (!syscall_filter.empty()) {
    std::set<std::string> keep;
    std::istringstream is(syscall_filter);
    std::string name;
    while (std::getline(is, name, ',')) keep.insert(name);
    std::vector<kom::planner::SyscallModel> filtered;
    for (auto& s : corpus)
      if (keep.count(s.name)) filtered.push_back(std::move(s));
    corpus = std::move(filtered);
    if (corpus.empty()) {
      std::cerr << "komforge: --syscalls filter matches nothing\n";
      return kExitIo;
    }
  }
  std::vector<kom::planner::Rq2Row> rows =
      kom::planner::rq2_sweep(*loaded.model, corpus, mtype, maddr, range, max_depth);
  std::ostringstream os;
  os << "offset,reachable,chain_length,uses_reset\n";
  for (const auto& r : rows)
    os << r.offset << "," << (r.reachable ? 1 : 0) << "," << r.chain_length << ","
       << (r.uses_reset ? 1 : 0) << "\n";
  if (!write_output(out_path, os.str())) {
    std::cerr << "komforge: cannot write '" << out_path << "'\n";
    return kExitIo;
  }
  return kExitOk;
}

// --- solve: s-expression constraint scripts ---------------------------------

struct SExpr {
  std::string atom;
  std::vector<SExpr> list;
  bool is_atom() const { return list.empty() && !atom.empty(); }
};

bool parse_sexprs(const std::string& text, std::vector<SExpr>* out, std::string* err) {
  size_t pos = 0;
  std::function<bool(SExpr*)> parse_one = [&](SExpr* e) -> bool {
    while (pos < text.size() &&
           (isspace(static_cast<unsigned char>(text[pos])) || text[pos] == ';')) {
      if (text[pos] == ';')
        while (pos < text.size() && text[pos] != '\n') pos++;
      else
        pos++;
    }
    if (pos >= text.size()) return false;
    if (text[pos] == '(') {
      pos++;
      while (true) {
        while (pos < text.size() && isspace(static_cast<unsigned char>(text[pos]))) pos++;
        if (pos < text.size() && text[pos] == ')') {
          pos++;
          return true;
        }
        if (pos >= text.size()) {
          *err = "unterminated list";
          return false;
        }
        SExpr child;
        if (!parse_one(&child)) {
          if (err->empty()) *err = "unterminated list";
          return false;
        }
        e->list.push_back(std::move(child));
      }
    }
    size_t start = pos;
    while (pos < text.size() && !isspace(static_cast<unsigned char>(text[pos])) &&
           text[pos] != '(' && text[pos] != ')')
      pos++;
    e->atom = text.substr(start, pos - start);
    return !e->atom.empty();
  };
  while (true) {
    SExpr e;
    if (!parse_one(&e)) return err->empty();
    out->push_back(std::move(e));
  }
}

int cmd_solve(const std::string& script_path, uint64_t budget) {
  auto text = read_file(script_path);
  if (!text) {
    std::cerr << "komforge: cannot open script '" << script_path << "'\n";
    return kExitIo;
  }
  std::vector<SExpr> exprs;
  std::string err;
  if (!parse_sexprs(*text, &exprs, &err)) {
    std::cerr << "komforge: script parse error: " << err << "\n";
    return kExitIo;
  }
  kom::ExprPool pool;
  kom::SolverConfig cfg;
  cfg.budget = budget;
  kom::Solver solver(&pool, cfg);
  std::map<std::string, uint32_t> symbols;
  std::vector<kom::Expr> constraints;

  std::function<kom::Expr(const SExpr&)> build = [&](const SExpr& e) -> kom::Expr {
    if (e.is_atom()) {
      auto it = symbols.find(e.atom);
      if (it != symbols.end()) return pool.symbol_expr(it->second);
      char* end = nullptr;
      unsigned long v = strtoul(e.atom.c_str(), &end, 0);
      if (end && *end == '\0' && !e.atom.empty()) return pool.constant(static_cast<uint32_t>(v), 32);
      throw std::runtime_error("unknown symbol '" + e.atom + "'");
    }
    if (e.list.empty() || !e.list[0].is_atom())
      throw std::runtime_error("expected operator");
    const std::string& op = e.list[0].atom;
    auto arg = [&](size_t i) { return build(e.list.at(i)); };
    if (op == "=") return pool.eq(arg(1), arg(2));
    if (op == "!=") return pool.ne(arg(1), arg(2));
    if (op == "ult") return pool.ult(arg(1), arg(2));
    if (op == "ule") return pool.ule(arg(1), arg(2));
    if (op == "slt") return pool.slt(arg(1), arg(2));
    if (op == "sle") return pool.sle(arg(1), arg(2));
    if (op == "and") return pool.band(arg(1), arg(2));
    if (op == "or") return pool.bor(arg(1), arg(2));
    if (op == "xor") return pool.bxor(arg(1), arg(2));
    if (op == "add") return pool.add(arg(1), arg(2));
    if (op == "sub") return pool.sub(arg(1), arg(2));
    if (op == "shl") return pool.shl(arg(1), arg(2));
    if (op == "lshr") return pool.lshr(arg(1), arg(2));
    if (op == "not") return pool.lnot(arg(1));
    if (op == "ite") return pool.ite(arg(1), arg(2), arg(3));
    throw std::runtime_error("unknown operator '" + op + "'");
  };

  try {
    for (const SExpr& e : exprs) {
      if (e.is_atom()) throw std::runtime_error("expected a command list");
      const std::string& cmd = e.list.at(0).atom;
      if (cmd == "declare") {
        const std::string& name = e.list.at(1).atom;
        int width = static_cast<int>(strtoul(e.list.at(2).atom.c_str(), nullptr, 0));
        if (width != 1 && width != 8 && width != 32)
          throw std::runtime_error("width must be 1, 8 or 32");
        kom::SymbolInfo si;
        si.width = static_cast<uint8_t>(width);
        si.origin = kom::SymbolOrigin::Free;
        si.name = name;
        symbols[name] = pool.fresh_symbol(si);
      } else if (cmd == "assert") {
        constraints.push_back(build(e.list.at(1)));
      } else if (cmd == "check") {
        kom::SolverVerdict v = solver.check_sat(constraints);
        switch (v.status) {
        case kom::SatStatus::Sat: {
          std::cout << "sat\n";
          for (const auto& [name, id] : symbols) {
            auto it = v.model.find(id);
            char buf[16];
            snprintf(buf, sizeof buf, "0x%08X", it == v.model.end() ? 0 : it->second);
            std::cout << "  " << name << " = " << buf << "\n";
          }
          break;
        }
        case kom::SatStatus::Unsat: std::cout << "unsat\n"; break;
        case kom::SatStatus::Unknown: std::cout << "unknown\n"; break;
        }
      } else {
        throw std::runtime_error("unknown command '" + cmd + "'");
      }
    }
  } catch (const std::exception& ex) {
    std::cerr << "komforge: " << ex.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel-object masquerading analysis toolkit"};
  app.require_subcommand(1);

  auto* analyze = app.add_subcommand("analyze", "run the identification pipeline");
  CommonAnalysisFlags aflags;
  aflags.attach(analyze);
  std::string a_out = "report.json";
  std::string a_format = "json";
  bool a_no_timing = false;
  analyze->add_option("--out", a_out, "report path ('-' for stdout)");
  analyze->add_option("--format", a_format, "csv or json");
  analyze->add_flag("--no-timing", a_no_timing, "zero the time column (stable output)");

  auto* plan = app.add_subcommand("plan", "search for an attack chain");
  std::string p_report = "report.json", p_manifest = "fixtures/model.toml";
  std::string p_problem, p_malicious, p_target, p_out = "chain.json";
  int p_depth = 0;
  plan->add_option("--report", p_report, "report.json from analyze");
  plan->add_option("--manifest", p_manifest, "kernel object model manifest");
  plan->add_option("--problem", p_problem, "full attack problem file");
  plan->add_option("--malicious", p_malicious, "Type@0xADDR of the malicious object");
  plan->add_option("--target", p_target, "target address (single-target mode)");
  plan->add_option("--max-depth", p_depth, "chain depth limit");
  plan->add_option("--out", p_out, "chain file ('-' for stdout)");

  auto* simulate = app.add_subcommand("simulate", "execute a chain concretely");
  std::string s_manifest = "fixtures/model.toml", s_corpus = "fixtures/ir";
  std::string s_chain = "chain.json", s_image, s_out = "result.json";
  std::vector<std::string> s_binds;
  simulate->add_option("--manifest", s_manifest, "kernel object model manifest");
  simulate->add_option("--corpus", s_corpus, "directory of .kir fixtures");
  simulate->add_option("--chain", s_chain, "chain file from plan");
  simulate->add_option("--image", s_image, "placements file for the initial image");
  simulate->add_option("--bind", s_binds, "placeholder binding name=value");
  simulate->add_option("--out", s_out, "result file ('-' for stdout)");

  auto* rq2 = app.add_subcommand("rq2", "reachable-offset sweep");
  std::string r_report = "report.json", r_manifest = "fixtures/model.toml";
  std::string r_malicious = "Timer@0x20010000", r_out = "-", r_syscalls;
  uint32_t r_range = 256;
  int r_depth = 80;
  rq2->add_option("--report", r_report, "report.json from analyze");
  rq2->add_option("--manifest", r_manifest, "kernel object model manifest");
  rq2->add_option("--malicious", r_malicious, "Type@0xADDR of the malicious object");
  rq2->add_option("--range", r_range, "byte span above the start address");
  rq2->add_option("--max-depth", r_depth, "chain depth limit");
  rq2->add_option("--syscalls", r_syscalls, "comma-separated syscall subset");
  rq2->add_option("--out", r_out, "csv output ('-' for stdout)");

  auto* solve = app.add_subcommand("solve", "run a constraint script");
  std::string v_script;
  uint64_t v_budget = solver_budget_default();
  solve->add_option("script", v_script, "s-expression constraint script")->required();
  solve->add_option("--budget", v_budget, "solver steps per query");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
      return app.exit(e);
    std::cerr << "komforge: " << e.what() << "\n";
    return kExitIo;
  }

  if (analyze->parsed()) return cmd_analyze(aflags, a_out, a_format, a_no_timing);
  if (plan->parsed())
    return cmd_plan(p_report, p_manifest, p_problem, p_malicious, p_target, p_depth, p_out);
  if (simulate->parsed())
    return cmd_simulate(s_manifest, s_corpus, s_chain, s_image, s_binds, s_out);
  if (rq2->parsed())
    return cmd_rq2(r_report, r_manifest, r_malicious, r_range, r_depth, r_syscalls, r_out);
  if (solve->parsed()) return cmd_solve(v_script, v_budget);
  return kExitIo;
}
