#include "fedseit/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedseit {

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::fedseit:
      return "fedseit";
    case Mode::fedweit:
      return "fedweit";
    case Mode::fedseit_dls:
      return "fedseit-dls";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  if (name == "fedseit") return Mode::fedseit;
  if (name == "fedweit") return Mode::fedweit;
  if (name == "fedseit-dls" || name == "fedseit_dls" || name == "fedseit+dls") return Mode::fedseit_dls;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "' (expected fedseit, fedweit or fedseit-dls)");
}

std::size_t ModelConfig::max_filter_size() const {
  return filter_sizes.empty() ? 0 : *std::max_element(filter_sizes.begin(), filter_sizes.end());
}

void ModelConfig::validate() const {
  if (embedding_dim == 0) throw std::invalid_argument("embedding_dim must be positive");
  if (filters_per_size == 0) throw std::invalid_argument("filters_per_size must be positive");
  if (filter_sizes.empty()) throw std::invalid_argument("at least one filter size is required");
  if (std::find(filter_sizes.begin(), filter_sizes.end(), 0u) != filter_sizes.end()) {
    throw std::invalid_argument("filter sizes must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
}

FilterBank zero_filters(const ModelConfig& config) {
  FilterBank bank;
  for (std::size_t l = 0; l < config.filter_sizes.size(); ++l) bank.emplace_back(config.filter_shape(l));
  return bank;
}

double filter_init_bound(const ModelConfig& config, std::size_t size_index) {
  const double fan_in = static_cast<double>(config.filter_sizes.at(size_index) * config.embedding_dim);
  return std::sqrt(6.0 / (fan_in + static_cast<double>(config.filters_per_size)));
}

namespace {

void fill_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
}

Tensor glorot(Shape shape, std::mt19937_64& rng) {
  Tensor t(shape);
  if (t.empty()) return t;
  fill_uniform(t, std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1])), rng);
  return t;
}

}  // namespace

FilterBank glorot_filters(const ModelConfig& config, std::mt19937_64& rng) {
  FilterBank bank = zero_filters(config);
  for (std::size_t l = 0; l < bank.size(); ++l) fill_uniform(bank[l], filter_init_bound(config, l), rng);
  return bank;
}

void require_compatible(const FilterBank& bank, const ModelConfig& config, const char* what) {
  if (bank.size() != config.filter_sizes.size()) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(config.filter_sizes.size()) +
                     " filter tensors, got " + std::to_string(bank.size()));
  }
  for (std::size_t l = 0; l < bank.size(); ++l) {
    if (bank[l].shape() != config.filter_shape(l)) {
      throw ShapeError(std::string(what) + ": filter " + std::to_string(l) + " has shape " +
                       to_string(bank[l].shape()) + ", expected " + to_string(config.filter_shape(l)));
    }
  }
}

Tensor effective_mask(const Tensor& mask_logits) {
  Tensor out = mask_logits;
  for (auto& v : out.data()) v = kernels::sigmoid(v);
  return out;
}

FilterBank compose(const FilterBank& base, const std::vector<Tensor>& mask, const FilterBank& adaptive) {
  if (base.size() != adaptive.size() || base.size() != mask.size()) {
    throw ShapeError("compose: base, mask and adaptive must cover the same filter sizes");
  }
  FilterBank out;
  out.reserve(base.size());
  for (std::size_t l = 0; l < base.size(); ++l) {
    require_same_shape(base[l], adaptive[l], "compose");
    const std::size_t count = base[l].rank() == 3 ? base[l].dim(2) : 0;
    if (mask[l].rank() != 1 || mask[l].dim(0) != count) {
      throw ShapeError("compose: mask " + to_string(mask[l].shape()) + " does not match filters " +
                       to_string(base[l].shape()));
    }
    Tensor theta = adaptive[l];
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += base[l][i] * mask[l][i % count];
    out.push_back(std::move(theta));
  }
  return out;
}

TaskState init_task_state(const ModelConfig& config, Mode mode, int task_id, std::size_t num_labels,
                          std::vector<ForeignAdapter> foreign, const TaskInit& init, std::mt19937_64& rng) {
  config.validate();
  for (const auto& f : foreign) require_compatible(f.filters, config, "foreign adapter");
  TaskState s;
  s.task_id = task_id;
  s.num_labels = num_labels;
  s.adaptive = zero_filters(config);
  for (std::size_t l = 0; l < s.adaptive.size(); ++l) {
    fill_uniform(s.adaptive[l], init.adaptive_scale * filter_init_bound(config, l), rng);
  }
  for (std::size_t l = 0; l < config.filter_sizes.size(); ++l) {
    s.mask_logits.emplace_back(Shape{config.filters_per_size}, init.mask_logit);
  }
  const std::size_t n = foreign.size();
  const std::size_t z = config.z_dim();
  s.attention = Tensor({n}, n ? 1.0 / static_cast<double>(n) : 0.0);
  if (segregates_foreign(mode)) {
    s.foreign_projection = glorot({n * z, z}, rng);
    s.combine_projection = glorot({2 * z, z}, rng);
  } else {
    s.foreign_projection = Tensor(Shape{0});
    s.combine_projection = Tensor(Shape{0});
  }
  s.head = glorot({z, num_labels}, rng);
  s.foreign = std::move(foreign);
  return s;
}

BoundModel bind_model(Graph& g, const ModelConfig& config, Mode mode, const FilterBank& base, const TaskState& task,
                      BindOptions options) {
  require_compatible(base, config, "base");
  require_compatible(task.adaptive, config, "adaptive");
  if (task.attention.size() != task.n_foreign()) {
    throw ShapeError("attention has " + std::to_string(task.attention.size()) + " entries for " +
                     std::to_string(task.n_foreign()) + " foreign adapters");
  }
  const std::size_t z = config.z_dim();
  if (segregates_foreign(mode)) {
    if (task.foreign_projection.shape() != Shape{task.n_foreign() * z, z} ||
        task.combine_projection.shape() != Shape{2 * z, z}) {
      throw ShapeError("projection matrices do not match " + std::to_string(task.n_foreign()) +
                       " foreign adapters and z_dim " + std::to_string(z));
    }
  }
  if (task.head.rank() != 2 || task.head.dim(0) != z) {
    throw ShapeError("head " + to_string(task.head.shape()) + " does not match z_dim " + std::to_string(z));
  }

  auto param = [&](const Tensor& t, bool trainable) { return trainable ? g.leaf(t) : g.constant(t); };
  BoundModel m;
  m.mode = mode;
  m.z_dim = z;
  m.n_foreign = task.n_foreign();
  for (const auto& t : base) m.base.push_back(param(t, options.train_base));
  for (const auto& t : task.adaptive) m.adaptive.push_back(param(t, options.train_task));
  for (const auto& t : task.mask_logits) m.mask_logits.push_back(param(t, options.train_task));
  m.attention = param(task.attention, options.train_task);
  m.foreign_projection = param(task.foreign_projection, options.train_task && segregates_foreign(mode));
  m.combine_projection = param(task.combine_projection, options.train_task && segregates_foreign(mode));
  m.head = param(task.head, options.train_task);

  std::vector<Var> alphas;
  for (std::size_t i = 0; i < task.n_foreign(); ++i) alphas.push_back(ops::element(g, m.attention, i));

  for (std::size_t l = 0; l < base.size(); ++l) {
    Var mask = ops::sigmoid(g, m.mask_logits[l]);
    Var theta = ops::add(g, ops::mask_filters(g, m.base[l], mask), m.adaptive[l]);
    if (mode == Mode::fedweit) {
      for (std::size_t i = 0; i < task.n_foreign(); ++i) {
        Var foreign = g.constant(task.foreign[i].filters[l]);
        theta = ops::add(g, theta, ops::scale_by(g, foreign, alphas[i]));
      }
    }
    m.composed.push_back(theta);
  }
  if (segregates_foreign(mode)) {
    for (std::size_t i = 0; i < task.n_foreign(); ++i) {
      std::vector<Var> scaled;
      for (std::size_t l = 0; l < base.size(); ++l) {
        scaled.push_back(ops::scale_by(g, g.constant(task.foreign[i].filters[l]), alphas[i]));
      }
      m.foreign_scaled.push_back(std::move(scaled));
    }
  }
  return m;
}

namespace {

Var pooled_features(Graph& g, Var document, const std::vector<Var>& filters, const Dropout& dropout) {
  std::vector<Var> parts;
  parts.reserve(filters.size());
  for (Var f : filters) parts.push_back(ops::conv1d_maxpool(g, document, f));
  Var z = ops::relu(g, ops::concat(g, parts));
  if (dropout.rate > 0.0 && dropout.rng) {
    const std::size_t n = g.value(z).size();
    Tensor keep({n});
    std::bernoulli_distribution coin(1.0 - dropout.rate);
    const double scale = 1.0 / (1.0 - dropout.rate);
    for (auto& v : keep.data()) v = coin(*dropout.rng) ? scale : 0.0;
    z = ops::mul_const(g, z, keep);
  }
  return z;
}

}  // namespace

Var forward(Graph& g, const BoundModel& model, Var document, const Dropout& dropout) {
  Var local = pooled_features(g, document, model.composed, dropout);
  if (!segregates_foreign(model.mode)) return ops::affine(g, local, model.head);

  Var foreign_vector;
  if (model.n_foreign == 0) {
    foreign_vector = g.constant(Tensor({model.z_dim}));
  } else {
    std::vector<Var> branches;
    for (const auto& filters : model.foreign_scaled) branches.push_back(pooled_features(g, document, filters, dropout));
    foreign_vector = ops::affine(g, ops::concat(g, branches), model.foreign_projection);
  }
  Var joined[] = {local, foreign_vector};
  Var z = ops::affine(g, ops::concat(g, joined), model.combine_projection);
  return ops::affine(g, z, model.head);
}

Predictor::Predictor(const ModelConfig& config, Mode mode, const FilterBank& base, const TaskState& task)
    : model_(bind_model(graph_, config, mode, base, task, {false, false})), mark_(graph_.size()) {}

Tensor Predictor::logits(const Tensor& document) {
  Var doc = graph_.constant(document);
  Tensor out = graph_.value(forward(graph_, model_, doc));
  graph_.truncate(mark_);
  return out;
}

std::size_t Predictor::predict(const Tensor& document) {
  const Tensor z = logits(document);
  return static_cast<std::size_t>(std::max_element(z.data().begin(), z.data().end()) - z.data().begin());
}

}  // namespace fedseit
