#include "kom/pipeline.hpp"

#include "kom/solver.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace kom::pipeline {

LoadOutcome load_corpus(const std::string& manifest_path, const std::string& corpus_dir) {
  LoadOutcome out;
  model::LoadResult loaded = model::load_manifest(manifest_path);
  if (!loaded.ok()) {
    out.errors = loaded.errors;
    return out;
  }
  Corpus corpus;
  corpus.model = std::move(*loaded.model);

  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(corpus_dir, ec)) {
    if (entry.path().extension() == ".kir") files.push_back(entry.path());
  }
  if (ec) {
    out.errors.push_back(corpus_dir + ": " + ec.message());
    return out;
  }
  if (files.empty()) {
    out.errors.push_back(corpus_dir + ": no .kir fixtures found");
    return out;
  }
  std::sort(files.begin(), files.end());

  for (const auto& path : files) {
    std::ifstream f(path);
    if (!f) {
      out.errors.push_back(path.string() + ": cannot open");
      continue;
    }
    std::ostringstream os;
    os << f.rdbuf();
    ir::ParseResult parsed = ir::parse_program(os.str(), path.filename().string());
    if (!parsed.ok()) {
      for (const ir::Diagnostic& d : parsed.diagnostics)
        out.errors.push_back(d.to_string(path.filename().string()));
      continue;
    }
    corpus.fixture_files.push_back(path.filename().string());
    for (ir::Function& fn : parsed.program->functions) {
      if (corpus.program.function(fn.name)) {
        out.errors.push_back(path.filename().string() + ": duplicate function @" + fn.name);
        continue;
      }
      corpus.program.functions.push_back(std::move(fn));
    }
    for (const auto& [name, value] : parsed.program->named_constants) {
      auto it = corpus.program.named_constants.find(name);
      if (it != corpus.program.named_constants.end() && it->second != value) {
        out.errors.push_back(path.filename().string() + ": constant $" + name +
                             " conflicts with an earlier definition");
        continue;
      }
      corpus.program.named_constants.emplace(name, value);
    }
  }
  if (!out.errors.empty()) return out;

  for (const ir::Diagnostic& d :
       ir::validate_program(corpus.program, &corpus.model.constants)) {
    if (d.severity == ir::Severity::Error) out.errors.push_back(d.to_string("corpus"));
  }
  if (!out.errors.empty()) return out;
  out.corpus = std::move(corpus);
  return out;
}

Analysis analyze(const Corpus& corpus, const AnalysisOptions& options) {
  Analysis analysis;
  std::vector<const model::SyscallManifest*> manifests;
  for (const model::SyscallManifest& m : corpus.model.syscalls)
    if (corpus.program.function(m.ir_name)) manifests.push_back(&m);
  std::sort(manifests.begin(), manifests.end(),
            [](const model::SyscallManifest* a, const model::SyscallManifest* b) {
              return a->name < b->name;
            });
  for (const model::SyscallManifest* m : manifests) {
    ExprPool pool;
    SolverConfig cfg;
    cfg.budget = options.limits.solver_budget;
    cfg.probe_seed = options.probe_seed;
    Solver solver(&pool, cfg);
    symex::ExecutionResult run = symex::run_syscall(&pool, &solver, &corpus.model,
                                                    corpus.program, *m, options.limits);
    const ir::Function* fn = corpus.program.function(m->ir_name);
    classifier::SyscallProfile profile = classifier::build_profile(
        &pool, &solver, m->name, *m, *fn, run.paths, run.stats, corpus.model);
    if (profile.stats.status == 'A') analysis.any_abnormal = true;
    analysis.profiles.push_back(std::move(profile));
  }
  return analysis;
}

} // namespace kom::pipeline
