#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fedseit/config.hpp"
#include "fedseit/eval.hpp"
#include "fedseit/federation.hpp"

namespace fedseit {

/// Inputs shared by every seed of an experiment.
struct Workspace {
  Corpus train;
  Corpus test;
  EmbeddingTable embeddings;
  /// Split drawn with the task generation seed, before per-seed reordering.
  TaskGrid grid;
};

Workspace prepare(const ExperimentConfig& config);

struct SeedRun {
  std::uint64_t seed = 0;
  TaskGrid grid;
  FederationResult federation;
  ExperimentResult result;
};

/// Reorders the tasks, runs the federation and evaluates the frozen bundles.
SeedRun run_seed(const ExperimentConfig& config, const Workspace& workspace, std::uint64_t seed);

/// Final base plus frozen task state for every (client, task), client-major.
std::vector<TaskBundle> bundles_of(const FederationResult& federation);

/// Runs every seed and writes checkpoints under `out_dir/checkpoints` and
/// results.csv, trajectory.csv, config.echo under `out_dir`.
MeanStd run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Re-evaluates a checkpoint directory written by run_experiment.
MeanStd evaluate_checkpoints(const std::filesystem::path& checkpoints, const std::filesystem::path& out_dir);

}  // namespace fedseit
