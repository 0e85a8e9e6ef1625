#pragma once

#include "kom/classifier.hpp"
#include "kom/ir.hpp"
#include "kom/model.hpp"
#include "kom/symex.hpp"

#include <optional>
#include <string>
#include <vector>

namespace kom::pipeline {

// Loads the manifest and every .kir fixture under corpus_dir (sorted by file
// name) into one merged program. Returns a non-empty error list on failure.
struct Corpus {
  model::Model model;
  ir::Program program;
  std::vector<std::string> fixture_files;
};

struct LoadOutcome {
  std::optional<Corpus> corpus;
  std::vector<std::string> errors;
  bool ok() const { return corpus.has_value(); }
};

LoadOutcome load_corpus(const std::string& manifest_path, const std::string& corpus_dir);

struct AnalysisOptions {
  symex::Limits limits;
  uint32_t probe_seed = 0x4B4F4D46u;
};

struct Analysis {
  std::vector<classifier::SyscallProfile> profiles;
  bool any_abnormal = false;
};

// Runs symbolic execution + classification for every manifest syscall whose
// IR fixture is present, in name order.
Analysis analyze(const Corpus& corpus, const AnalysisOptions& options);

} // namespace kom::pipeline
