#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedseit/data.hpp"
#include "fedseit/model.hpp"

namespace fedseit {

/// Fraction of positions where prediction and truth agree.
double micro_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> truths);

/// Predictions of a frozen task model (no dropout) on a list of examples.
std::vector<std::size_t> predict_all(const ModelConfig& config, Mode mode, const FilterBank& base,
                                     const TaskState& task, std::span<const Example> examples,
                                     const EmbeddingTable& embeddings);

/// MAA of a frozen task model on the dataset's test split.
double test_accuracy(const ModelConfig& config, Mode mode, const FilterBank& base, const TaskState& task,
                     const TaskDataset& dataset, const EmbeddingTable& embeddings);

/// Test accuracy of a client's current task after one round.
struct TrajectoryPoint {
  int client_id = 0;
  int task_id = 0;
  int round = 0;
  double accuracy = 0.0;

  bool operator==(const TrajectoryPoint&) const = default;
};

/// Everything needed to evaluate one finished task: the client's final base
/// and the task's frozen parameters (including the foreign adapters it used).
struct TaskBundle {
  int client_id = 0;
  FilterBank base;
  TaskState task;
};

struct CellResult {
  int client_id = 0;
  int task_id = 0;
  double maa = 0.0;
  std::size_t test_size = 0;

  bool operator==(const CellResult&) const = default;
};

struct ExperimentResult {
  std::uint64_t seed = 0;
  /// Ordered by (client, task).
  std::vector<CellResult> cells;
  /// Mean of the cell MAAs.
  double tta = 0.0;
  std::vector<TrajectoryPoint> trajectory;

  bool operator==(const ExperimentResult&) const = default;
};

/// Evaluates every bundle on its cell's test split and averages into TTA.
ExperimentResult evaluate_all(const ModelConfig& config, Mode mode, std::span<const TaskBundle> bundles,
                              const TaskGrid& grid, const EmbeddingTable& embeddings);

struct MeanStd {
  double mean = 0.0;
  /// Population standard deviation.
  double std = 0.0;
};

MeanStd mean_std(std::span<const double> values);

/// Writes results.csv and trajectory.csv for a set of seeds, plus config.echo
/// and transcripts.txt (one transcript path per line). Returns the summary.
MeanStd emit(std::span<const ExperimentResult> results, const std::filesystem::path& out_dir,
             const std::string& config_echo, std::span<const std::filesystem::path> transcripts = {});

/// CSV header of results.csv.
inline constexpr const char* kResultsHeader = "row,seed,client,task,value,std";
/// CSV header of trajectory.csv.
inline constexpr const char* kTrajectoryHeader = "seed,client,task,round,accuracy";

}  // namespace fedseit
