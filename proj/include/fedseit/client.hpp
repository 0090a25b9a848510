#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedseit/data.hpp"
#include "fedseit/graph.hpp"
#include "fedseit/model.hpp"

namespace fedseit {

/// Magnitude at or below which a parameter counts as zero, both when
/// overwriting the base from the global parameter and in sparse coding.
inline constexpr double kNonZeroThreshold = 1e-6;

/// Raised when a loss becomes NaN or infinite during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  /// Weight of the L1 sparsity term on the current mask and all adaptive filters.
  double lambda1 = 1e-3;
  /// Weight of the drift penalty protecting past tasks.
  double lambda2 = 1.0;
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs_per_round = 50;
  std::size_t early_stop_patience = 3;
  TaskInit init{};
  std::uint64_t seed = 1;

  void validate() const;
};

struct RoundReport {
  int client_id = 0;
  int task_id = 0;
  int round = 0;
  /// Mean training objective per epoch.
  std::vector<double> epoch_losses;
  /// Mean validation cross-entropy per epoch (empty without a validation split).
  std::vector<double> valid_losses;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
  /// Drift penalty (unweighted) at the end of the round.
  double drift_penalty = 0.0;

  bool operator==(const RoundReport&) const = default;
};

/// The three terms of the training objective, computed independently.
struct LossTerms {
  double cross_entropy = 0.0;
  double sparsity = 0.0;
  double drift = 0.0;
};

/// Graph of the full training objective for one batch.
struct ObjectiveGraph {
  BoundModel model;
  /// Adaptive-filter leaves of the past tasks, [task][size].
  std::vector<std::vector<Var>> past_adaptive;
  Var cross_entropy;
  Var sparsity;
  Var drift;
  Var total;
};

/// A batch of embedded documents and their task-local labels.
struct Batch {
  std::vector<Tensor> documents;
  std::vector<std::size_t> labels;
};

/// Continual learner of one client: a base shared by all of its tasks plus
/// per-task adaptive filters, masks, attentions, projections and heads.
class Client {
 public:
  /// `stream` selects the random stream for initialization, shuffling and
  /// dropout; it defaults to the client id.
  Client(int id, ModelConfig model, TrainConfig train, Mode mode, std::optional<std::uint64_t> stream = {});

  int id() const noexcept { return id_; }
  Mode mode() const noexcept { return mode_; }
  const ModelConfig& model_config() const noexcept { return model_; }
  const TrainConfig& train_config() const noexcept { return train_; }

  const FilterBank& base() const noexcept { return base_; }
  void set_base(FilterBank base);

  /// Copies every entry of `global` with magnitude above kNonZeroThreshold
  /// into the base; other entries keep their local value.
  void apply_global(const FilterBank& global);

  /// Starts task `task_id` with fresh task parameters. `shared` optionally
  /// seeds the projection matrices (dense layer sharing) when the shapes fit.
  void begin_task(int task_id, std::size_t num_labels, std::vector<ForeignAdapter> foreign,
                  const std::vector<Tensor>* shared = nullptr);

  /// Up to epochs_per_round epochs of mini-batch gradient descent with
  /// early stopping on the validation cross-entropy.
  RoundReport train_round(const TaskDataset& dataset, const EmbeddingTable& embeddings, int round);

  /// base * sigmoid(mask of the current task), with near-zero entries zeroed.
  FilterBank sparsified_base() const;

  /// Records the base and adaptive snapshots of the current task and freezes
  /// its head, projections and mask.
  void end_task();

  bool has_task() const noexcept { return !tasks_.empty(); }
  TaskState& current();
  const TaskState& current() const;
  const std::vector<TaskState>& tasks() const noexcept { return tasks_; }
  std::vector<TaskState>& tasks() noexcept { return tasks_; }

  /// Sum over past tasks of ||dB * sigmoid(m_i) - dA_i||^2 with dB the base
  /// change since task i ended and dA_i = snapshot_i - A_i.
  double drift_penalty() const;

  /// Objective terms for a batch, evaluated without the graph.
  LossTerms loss_terms(const Batch& batch) const;

  /// Builds the weighted objective on `g`. Dropout is applied when `rng` is set.
  ObjectiveGraph build_objective(Graph& g, const Batch& batch, std::mt19937_64* rng) const;

  /// Embeds a whole split, padding documents to the widest filter.
  Batch embed(std::span<const Example> examples, const EmbeddingTable& embeddings) const;

  /// Mean cross-entropy of the current task over a batch, without dropout.
  double mean_cross_entropy(const Batch& batch) const;

 private:
  void sgd_step(Graph& g, const ObjectiveGraph& objective);

  int id_;
  ModelConfig model_;
  TrainConfig train_;
  Mode mode_;
  std::mt19937_64 rng_;
  FilterBank base_;
  std::vector<TaskState> tasks_;
};

/// Multiply-by-mask without the graph, zeroing magnitudes <= kNonZeroThreshold.
FilterBank sparsify(const FilterBank& base, const std::vector<Tensor>& mask_logits);

}  // namespace fedseit
