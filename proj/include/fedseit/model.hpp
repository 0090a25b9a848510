#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fedseit/graph.hpp"
#include "fedseit/tensor.hpp"

namespace fedseit {

/// How foreign task-adaptive parameters enter the client model.
enum class Mode {
  /// Foreign adapters run as separate CNN branches, concatenated and projected.
  fedseit,
  /// Additive composition of foreign adapters into the local filters.
  fedweit,
  /// FedSeIT with the projection matrices also aggregated at the server.
  fedseit_dls,
};

std::string to_string(Mode mode);
Mode parse_mode(std::string_view name);
inline bool segregates_foreign(Mode mode) { return mode != Mode::fedweit; }
inline bool shares_projections(Mode mode) { return mode == Mode::fedseit_dls; }

struct ModelConfig {
  std::size_t embedding_dim = 300;
  std::vector<std::size_t> filter_sizes{3, 4, 5};
  std::size_t filters_per_size = 128;
  double dropout = 0.3;

  /// Width of the pooled feature vector: one block of filters per size.
  std::size_t z_dim() const { return filter_sizes.size() * filters_per_size; }
  std::size_t max_filter_size() const;
  Shape filter_shape(std::size_t size_index) const {
    return {filter_sizes.at(size_index), embedding_dim, filters_per_size};
  }
  /// Throws std::invalid_argument on non-positive sizes or dropout outside [0, 1).
  void validate() const;
};

/// One convolution filter tensor [F_l, D, N_F] per filter size.
using FilterBank = std::vector<Tensor>;

FilterBank zero_filters(const ModelConfig& config);
/// Uniform(-b, b) per filter size with b = filter_init_bound.
FilterBank glorot_filters(const ModelConfig& config, std::mt19937_64& rng);
/// Glorot-uniform bound for a filter tensor of the given size index.
double filter_init_bound(const ModelConfig& config, std::size_t size_index);
void require_compatible(const FilterBank& bank, const ModelConfig& config, const char* what);

/// Task-adaptive filters of another client (or another task), used as a
/// constant during local training.
struct ForeignAdapter {
  int source_client = 0;
  int source_task = 0;
  FilterBank filters;

  bool operator==(const ForeignAdapter&) const = default;
};

/// Per-task parameters of a client. The base filters are shared across a
/// client's tasks and live in the client, not here.
struct TaskState {
  int task_id = 1;
  std::size_t num_labels = 0;
  FilterBank adaptive;
  /// Mask logits, one [N_F] vector per filter size; the effective mask is
  /// their sigmoid.
  std::vector<Tensor> mask_logits;
  /// One attention scalar per foreign adapter.
  Tensor attention;
  /// [n_foreign * z_dim, z_dim]; zero rows when there are no foreign adapters.
  Tensor foreign_projection;
  /// [2 * z_dim, z_dim].
  Tensor combine_projection;
  /// [z_dim, num_labels].
  Tensor head;
  std::vector<ForeignAdapter> foreign;

  /// Copies of the base and adaptive filters taken when the task ended.
  FilterBank base_snapshot;
  FilterBank adaptive_snapshot;
  bool frozen = false;

  std::size_t n_foreign() const noexcept { return foreign.size(); }
  bool operator==(const TaskState&) const = default;
};

/// Elementwise logistic sigmoid of mask logits.
Tensor effective_mask(const Tensor& mask_logits);

/// theta[f, d, j] = base[f, d, j] * mask[j] + adaptive[f, d, j], per filter size.
FilterBank compose(const FilterBank& base, const std::vector<Tensor>& mask, const FilterBank& adaptive);

/// Fresh parameters for a new task. Attention starts at 1 / n_foreign.
struct TaskInit {
  /// Initial mask logit; sigmoid(3) ~ 0.95 keeps most of the base active.
  double mask_logit = 3.0;
  /// Adaptive filters are uniform in +-(scale * filter_init_bound).
  double adaptive_scale = 1.0;
};
TaskState init_task_state(const ModelConfig& config, Mode mode, int task_id, std::size_t num_labels,
                          std::vector<ForeignAdapter> foreign, const TaskInit& init, std::mt19937_64& rng);

/// Graph handles for the parameters of one task model.
struct BoundModel {
  Mode mode = Mode::fedseit;
  std::vector<Var> base;
  std::vector<Var> adaptive;
  std::vector<Var> mask_logits;
  /// Composed local filters per size (FedWeIT: including the foreign sum).
  std::vector<Var> composed;
  /// alpha_i * foreign_i filters, [adapter][size]; FedSeIT only.
  std::vector<std::vector<Var>> foreign_scaled;
  Var attention;
  Var foreign_projection;
  Var combine_projection;
  Var head;
  std::size_t z_dim = 0;
  std::size_t n_foreign = 0;
};

struct BindOptions {
  bool train_base = true;
  bool train_task = true;
};

/// Registers the parameters on `g` and builds the composed filters.
BoundModel bind_model(Graph& g, const ModelConfig& config, Mode mode, const FilterBank& base, const TaskState& task,
                      BindOptions options = {});

/// Inverted-dropout masks drawn from `rng`; rate 0 or a null rng disables it.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

/// Logits for one embedded document [L, D] (L >= largest filter size).
Var forward(Graph& g, const BoundModel& model, Var document, const Dropout& dropout = {});

/// Dropout-free inference with all parameters bound once as constants.
class Predictor {
 public:
  Predictor(const ModelConfig& config, Mode mode, const FilterBank& base, const TaskState& task);

  Tensor logits(const Tensor& document);
  std::size_t predict(const Tensor& document);

 private:
  Graph graph_;
  BoundModel model_;
  std::size_t mark_ = 0;
};

}  // namespace fedseit
