#include "fedseit/client.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace fedseit {

void TrainConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || learning_rate < 0.0) {
    throw std::invalid_argument("lambda1, lambda2 and learning_rate must be non-negative");
  }
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
}

Client::Client(int id, ModelConfig model, TrainConfig train, Mode mode, std::optional<std::uint64_t> stream)
    : id_(id), model_(std::move(model)), train_(train), mode_(mode) {
  model_.validate();
  train_.validate();
  const std::uint64_t s = stream.value_or(static_cast<std::uint64_t>(id_));
  std::seed_seq seq{train_.seed, s + 0x9e37u};
  rng_.seed(seq);
  base_ = glorot_filters(model_, rng_);
}

void Client::set_base(FilterBank base) {
  require_compatible(base, model_, "set_base");
  base_ = std::move(base);
}

void Client::apply_global(const FilterBank& global) {
  require_compatible(global, model_, "global parameter");
  for (std::size_t l = 0; l < base_.size(); ++l) {
    for (std::size_t i = 0; i < base_[l].size(); ++i) {
      if (std::abs(global[l][i]) > kNonZeroThreshold) base_[l][i] = global[l][i];
    }
  }
}

void Client::begin_task(int task_id, std::size_t num_labels, std::vector<ForeignAdapter> foreign,
                        const std::vector<Tensor>* shared) {
  if (num_labels == 0) throw std::invalid_argument("a task needs at least one label");
  if (has_task() && !tasks_.back().frozen) {
    throw std::logic_error("client " + std::to_string(id_) + " starts task " + std::to_string(task_id) +
                           " before ending task " + std::to_string(tasks_.back().task_id));
  }
  TaskState state = init_task_state(model_, mode_, task_id, num_labels, std::move(foreign), train_.init, rng_);
  if (shared && shares_projections(mode_) && shared->size() == 2) {
    if ((*shared)[0].shape() == state.combine_projection.shape()) state.combine_projection = (*shared)[0];
    if ((*shared)[1].shape() == state.foreign_projection.shape()) state.foreign_projection = (*shared)[1];
  }
  tasks_.push_back(std::move(state));
}

TaskState& Client::current() {
  if (tasks_.empty()) throw std::logic_error("client " + std::to_string(id_) + " has no task");
  return tasks_.back();
}

const TaskState& Client::current() const {
  if (tasks_.empty()) throw std::logic_error("client " + std::to_string(id_) + " has no task");
  return tasks_.back();
}

FilterBank sparsify(const FilterBank& base, const std::vector<Tensor>& mask_logits) {
  if (base.size() != mask_logits.size()) throw ShapeError("sparsify: mask does not cover every filter size");
  FilterBank out = base;
  for (std::size_t l = 0; l < out.size(); ++l) {
    const Tensor mask = effective_mask(mask_logits[l]);
    const std::size_t count = mask.size();
    if (out[l].rank() != 3 || out[l].dim(2) != count) {
      throw ShapeError("sparsify: mask " + to_string(mask.shape()) + " vs filters " + to_string(out[l].shape()));
    }
    for (std::size_t i = 0; i < out[l].size(); ++i) {
      const double v = out[l][i] * mask[i % count];
      out[l][i] = std::abs(v) > kNonZeroThreshold ? v : 0.0;
    }
  }
  return out;
}

FilterBank Client::sparsified_base() const { return sparsify(base_, current().mask_logits); }

void Client::end_task() {
  TaskState& task = current();
  task.base_snapshot = base_;
  task.adaptive_snapshot = task.adaptive;
  task.frozen = true;
}

double Client::drift_penalty() const {
  double total = 0.0;
  for (const auto& task : tasks_) {
    if (!task.frozen) continue;
    for (std::size_t l = 0; l < base_.size(); ++l) {
      const Tensor mask = effective_mask(task.mask_logits[l]);
      const std::size_t count = mask.size();
      for (std::size_t i = 0; i < base_[l].size(); ++i) {
        const double base_drift = (base_[l][i] - task.base_snapshot[l][i]) * mask[i % count];
        const double adaptive_drift = task.adaptive_snapshot[l][i] - task.adaptive[l][i];
        const double d = base_drift - adaptive_drift;
        total += d * d;
      }
    }
  }
  return total;
}

Batch Client::embed(std::span<const Example> examples, const EmbeddingTable& embeddings) const {
  if (embeddings.dim() != model_.embedding_dim) {
    throw ShapeError("embedding dimension " + std::to_string(embeddings.dim()) + " does not match model dimension " +
                     std::to_string(model_.embedding_dim));
  }
  Batch batch;
  batch.documents.reserve(examples.size());
  for (const auto& e : examples) {
    batch.documents.push_back(embeddings.embed(e.tokens, model_.max_filter_size()));
    batch.labels.push_back(e.label);
  }
  return batch;
}

double Client::mean_cross_entropy(const Batch& batch) const {
  if (batch.documents.empty()) return 0.0;
  Predictor predictor(model_, mode_, base_, current());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.documents.size(); ++i) {
    const Tensor z = predictor.logits(batch.documents[i]);
    if (batch.labels[i] >= z.size()) throw std::out_of_range("label out of range for the task head");
    total += kernels::cross_entropy(z.data(), batch.labels[i]);
  }
  return total / static_cast<double>(batch.documents.size());
}

LossTerms Client::loss_terms(const Batch& batch) const {
  LossTerms terms;
  terms.cross_entropy = mean_cross_entropy(batch);
  const TaskState& task = current();
  for (const auto& logits : task.mask_logits) terms.sparsity += sum_abs(effective_mask(logits));
  for (const auto& t : tasks_)
    for (const auto& a : t.adaptive) terms.sparsity += sum_abs(a);
  terms.drift = drift_penalty();
  return terms;
}

ObjectiveGraph Client::build_objective(Graph& g, const Batch& batch, std::mt19937_64* rng) const {
  const TaskState& task = current();
  if (task.frozen) throw std::logic_error("the current task has already ended");
  if (batch.documents.empty()) throw std::invalid_argument("empty batch");

  ObjectiveGraph obj;
  obj.model = bind_model(g, model_, mode_, base_, task);

  const Dropout dropout{model_.dropout, rng};
  Var ce;
  for (std::size_t i = 0; i < batch.documents.size(); ++i) {
    Var doc = g.constant(batch.documents[i]);
    Var loss = ops::softmax_cross_entropy(g, forward(g, obj.model, doc, dropout), batch.labels[i]);
    ce = i == 0 ? loss : ops::add(g, ce, loss);
  }
  obj.cross_entropy = ops::scale(g, ce, 1.0 / static_cast<double>(batch.documents.size()));

  Var sparsity = g.constant(Tensor::scalar(0.0));
  Var drift = g.constant(Tensor::scalar(0.0));
  for (std::size_t l = 0; l < obj.model.mask_logits.size(); ++l) {
    sparsity = ops::add(g, sparsity, ops::l1(g, ops::sigmoid(g, obj.model.mask_logits[l])));
    sparsity = ops::add(g, sparsity, ops::l1(g, obj.model.adaptive[l]));
  }
  for (std::size_t i = 0; i + 1 < tasks_.size(); ++i) {
    const TaskState& past = tasks_[i];
    std::vector<Var> leaves;
    for (std::size_t l = 0; l < past.adaptive.size(); ++l) {
      Var adaptive = g.leaf(past.adaptive[l]);
      leaves.push_back(adaptive);
      sparsity = ops::add(g, sparsity, ops::l1(g, adaptive));
      Var base_drift = ops::mask_filters(g, ops::sub(g, obj.model.base[l], g.constant(past.base_snapshot[l])),
                                         g.constant(effective_mask(past.mask_logits[l])));
      Var adaptive_drift = ops::sub(g, g.constant(past.adaptive_snapshot[l]), adaptive);
      drift = ops::add(g, drift, ops::squared_l2(g, ops::sub(g, base_drift, adaptive_drift)));
    }
    obj.past_adaptive.push_back(std::move(leaves));
  }
  obj.sparsity = sparsity;
  obj.drift = drift;
  obj.total = ops::add(g, obj.cross_entropy,
                       ops::add(g, ops::scale(g, sparsity, train_.lambda1), ops::scale(g, drift, train_.lambda2)));
  return obj;
}

void Client::sgd_step(Graph& g, const ObjectiveGraph& obj) {
  const double lr = train_.learning_rate;
  auto update = [&](Tensor& param, Var v) {
    if (!g.has_grad(v)) return;
    const Tensor grad = g.grad(v);
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
  };
  TaskState& task = current();
  for (std::size_t l = 0; l < base_.size(); ++l) {
    update(base_[l], obj.model.base[l]);
    update(task.adaptive[l], obj.model.adaptive[l]);
    update(task.mask_logits[l], obj.model.mask_logits[l]);
  }
  update(task.attention, obj.model.attention);
  if (segregates_foreign(mode_)) {
    update(task.foreign_projection, obj.model.foreign_projection);
    update(task.combine_projection, obj.model.combine_projection);
  }
  update(task.head, obj.model.head);
  for (std::size_t i = 0; i < obj.past_adaptive.size(); ++i) {
    for (std::size_t l = 0; l < obj.past_adaptive[i].size(); ++l) update(tasks_[i].adaptive[l], obj.past_adaptive[i][l]);
  }
}

RoundReport Client::train_round(const TaskDataset& dataset, const EmbeddingTable& embeddings, int round) {
  if (dataset.train.empty()) {
    throw std::invalid_argument("client " + std::to_string(id_) + " task " + std::to_string(dataset.task_id) +
                                " has no training documents");
  }
  const Batch train = embed(dataset.train, embeddings);
  const Batch valid = embed(dataset.valid, embeddings);

  RoundReport report;
  report.client_id = id_;
  report.task_id = current().task_id;
  report.round = round;

  std::vector<std::size_t> order(train.documents.size());
  std::iota(order.begin(), order.end(), 0);
  double best_valid = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < train_.epochs_per_round; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng_)]);
    }
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += train_.batch_size) {
      Batch batch;
      for (std::size_t k = start; k < std::min(order.size(), start + train_.batch_size); ++k) {
        batch.documents.push_back(train.documents[order[k]]);
        batch.labels.push_back(train.labels[order[k]]);
      }
      Graph g;
      const ObjectiveGraph obj = build_objective(g, batch, &rng_);
      const double loss = g.value(obj.total).item();
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at client " << id_ << " task " << report.task_id << " round " << round
            << " epoch " << epoch + 1 << " (cross-entropy " << g.value(obj.cross_entropy).item() << ", sparsity "
            << g.value(obj.sparsity).item() << ", drift " << g.value(obj.drift).item() << ")";
        throw TrainingError(msg.str());
      }
      g.backward(obj.total);
      sgd_step(g, obj);
      epoch_loss += loss;
      ++batches;
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    ++report.epochs_run;
    if (!valid.documents.empty()) {
      const double v = mean_cross_entropy(valid);
      report.valid_losses.push_back(v);
      if (v < best_valid) {
        best_valid = v;
        stale = 0;
      } else if (++stale >= train_.early_stop_patience && train_.early_stop_patience > 0) {
        report.early_stopped = epoch + 1 < train_.epochs_per_round;
        break;
      }
    }
  }
  report.drift_penalty = drift_penalty();
  return report;
}

}  // namespace fedseit
