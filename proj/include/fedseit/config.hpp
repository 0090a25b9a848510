#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedseit/data.hpp"
#include "fedseit/federation.hpp"

namespace fedseit {

/// Thrown for unknown keys or malformed values in a config file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Keyword used for corpus and embedding sources that are generated.
inline constexpr const char* kSynthetic = "synthetic";

/// A full experiment: federation settings, task construction and inputs.
struct ExperimentConfig {
  FederationConfig federation;
  /// Clients/tasks are mirrored from `federation` before splitting.
  SplitConfig split;
  /// One federation run per seed; each seed reorders tasks and seeds init.
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string train_corpus = kSynthetic;
  std::string test_corpus = kSynthetic;
  std::string embeddings = kSynthetic;
  std::uint64_t embedding_seed = 11;
  SyntheticCorpusSpec synthetic;

  void validate() const;
};

/// Reads `key = value` lines; `#` starts a comment. Relative corpus and
/// embedding paths are resolved against `base_dir`.
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const ExperimentConfig& config);

}  // namespace fedseit
