// Independent oracles and random generators shared by the test suites.
// Nothing here calls into the library's numeric kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fedseit/client.hpp"
#include "fedseit/data.hpp"
#include "fedseit/federation.hpp"
#include "fedseit/model.hpp"
#include "fedseit/tensor.hpp"

namespace fedseit::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline std::size_t random_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// out[j] = max_p sum_{f,d} input[p+f, d] * filters[f, d, j]
inline std::vector<double> naive_conv(const Tensor& input, const Tensor& filters) {
  const std::size_t L = input.dim(0), D = input.dim(1);
  const std::size_t F = filters.dim(0), N = filters.dim(2);
  std::vector<double> out(N, -INFINITY);
  for (std::size_t j = 0; j < N; ++j) {
    for (std::size_t p = 0; p + F <= L; ++p) {
      double s = 0.0;
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t d = 0; d < D; ++d) s += input.data()[(p + f) * D + d] * filters.data()[(f * D + d) * N + j];
      out[j] = std::max(out[j], s);
    }
  }
  return out;
}

/// out[k] = sum_i in[i] * W[i, k]
inline std::vector<double> naive_affine(const std::vector<double>& in, const Tensor& w) {
  const std::size_t n = w.dim(0), m = w.dim(1);
  std::vector<double> out(m, 0.0);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < n; ++i) out[k] += in[i] * w.data()[i * m + k];
  return out;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// theta = B * sigmoid(mlogit) + A, with explicit [f][d][j] loops.
inline Tensor naive_compose(const Tensor& base, const Tensor& mask, const Tensor& adaptive) {
  const std::size_t F = base.dim(0), D = base.dim(1), N = base.dim(2);
  Tensor out(base.shape());
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t j = 0; j < N; ++j) {
        const std::size_t k = (f * D + d) * N + j;
        out.data()[k] = base.data()[k] * mask.data()[j] + adaptive.data()[k];
      }
  return out;
}

inline std::vector<double> relu(std::vector<double> v) {
  for (auto& x : v) x = std::max(0.0, x);
  return v;
}

/// Straight-line model forward (no dropout) for both modes.
inline std::vector<double> oracle_logits(const ModelConfig& config, Mode mode, const FilterBank& base,
                                         const TaskState& task, const Tensor& doc) {
  const std::size_t S = config.filter_sizes.size();
  std::vector<Tensor> theta;
  for (std::size_t l = 0; l < S; ++l) {
    Tensor mask(task.mask_logits[l].shape());
    for (std::size_t j = 0; j < mask.size(); ++j) mask.data()[j] = logistic(task.mask_logits[l].data()[j]);
    Tensor t = naive_compose(base[l], mask, task.adaptive[l]);
    if (mode == Mode::fedweit) {
      for (std::size_t i = 0; i < task.foreign.size(); ++i)
        for (std::size_t k = 0; k < t.size(); ++k)
          t.data()[k] += task.attention.data()[i] * task.foreign[i].filters[l].data()[k];
    }
    theta.push_back(std::move(t));
  }
  auto pooled = [&](const std::vector<Tensor>& filters) {
    std::vector<double> z;
    for (const auto& f : filters) {
      auto part = naive_conv(doc, f);
      z.insert(z.end(), part.begin(), part.end());
    }
    return relu(z);
  };
  const std::vector<double> zc = pooled(theta);
  if (mode == Mode::fedweit) return naive_affine(zc, task.head);
  std::vector<double> zf(config.z_dim(), 0.0);
  if (!task.foreign.empty()) {
    std::vector<double> joined;
    for (std::size_t i = 0; i < task.foreign.size(); ++i) {
      std::vector<Tensor> scaled;
      for (std::size_t l = 0; l < S; ++l) {
        Tensor t = task.foreign[i].filters[l];
        for (auto& v : t.data()) v *= task.attention.data()[i];
        scaled.push_back(std::move(t));
      }
      const auto zi = pooled(scaled);
      joined.insert(joined.end(), zi.begin(), zi.end());
    }
    zf = naive_affine(joined, task.foreign_projection);
  }
  std::vector<double> zz = zc;
  zz.insert(zz.end(), zf.begin(), zf.end());
  return naive_affine(naive_affine(zz, task.combine_projection), task.head);
}

inline double oracle_cross_entropy(const std::vector<double>& logits, std::size_t label) {
  double peak = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - peak);
  return peak + std::log(s) - logits[label];
}

/// Central-difference gradient of f with respect to every entry of `x`.
inline std::vector<double> numeric_gradient(Tensor& x, const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f();
    x.data()[i] = saved - h;
    const double down = f();
    x.data()[i] = saved;
    out[i] = (up - down) / (2 * h);
  }
  return out;
}

/// Relative error with an absolute fallback near zero.
inline bool gradients_agree(double analytic, double numeric, double rel = 1e-4, double abs_tol = 1e-7) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_tol) return true;
  return diff / std::max(std::abs(analytic), std::abs(numeric)) < rel;
}

inline ModelConfig tiny_model(std::size_t dim = 8, std::size_t filters = 4, std::vector<std::size_t> sizes = {2, 3}) {
  ModelConfig c;
  c.embedding_dim = dim;
  c.filters_per_size = filters;
  c.filter_sizes = std::move(sizes);
  c.dropout = 0.0;
  return c;
}

inline FilterBank random_bank(const ModelConfig& config, std::mt19937_64& rng, double scale = 0.5) {
  FilterBank bank;
  for (std::size_t l = 0; l < config.filter_sizes.size(); ++l)
    bank.push_back(random_tensor(config.filter_shape(l), rng, -scale, scale));
  return bank;
}

/// A task state with every parameter drawn at random (not the library init).
inline TaskState random_task(const ModelConfig& config, Mode mode, std::size_t labels, std::size_t n_foreign,
                             std::mt19937_64& rng) {
  TaskState s;
  s.num_labels = labels;
  s.adaptive = random_bank(config, rng, 0.3);
  for (std::size_t l = 0; l < config.filter_sizes.size(); ++l)
    s.mask_logits.push_back(random_tensor({config.filters_per_size}, rng, -2.0, 2.0));
  for (std::size_t i = 0; i < n_foreign; ++i)
    s.foreign.push_back({static_cast<int>(i), 1, random_bank(config, rng, 0.5)});
  s.attention = random_tensor({n_foreign}, rng, 0.2, 1.0);
  const std::size_t z = config.z_dim();
  if (mode == Mode::fedweit) {
    s.foreign_projection = Tensor(Shape{0});
    s.combine_projection = Tensor(Shape{0});
  } else {
    s.foreign_projection = random_tensor({n_foreign * z, z}, rng, -0.5, 0.5);
    s.combine_projection = random_tensor({2 * z, z}, rng, -0.5, 0.5);
  }
  s.head = random_tensor({z, labels}, rng, -0.5, 0.5);
  return s;
}

/// Documents that contain `keywords` of their label among filler words.
inline std::vector<Example> keyword_examples(std::size_t labels, std::size_t per_label, std::mt19937_64& rng,
                                             const std::string& prefix = "t") {
  std::vector<Example> out;
  for (std::size_t k = 0; k < per_label; ++k) {
    for (std::size_t l = 0; l < labels; ++l) {
      Example ex;
      ex.label = l;
      for (std::size_t w = 0; w < 6; ++w) {
        const bool key = std::bernoulli_distribution(0.5)(rng);
        ex.tokens.push_back(key ? prefix + "key" + std::to_string(l) + "_" + std::to_string(random_size(rng, 0, 2))
                                : prefix + "fill" + std::to_string(random_size(rng, 0, 9)));
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

inline std::vector<std::string> vocabulary_of_examples(const std::vector<Example>& examples) {
  std::vector<std::string> vocab;
  for (const auto& e : examples) vocab.insert(vocab.end(), e.tokens.begin(), e.tokens.end());
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  return vocab;
}

/// A small synthetic split plus embeddings covering its vocabulary.
struct World {
  TaskGrid grid;
  EmbeddingTable embeddings;
};

inline World small_world(std::size_t clients, std::size_t tasks, std::size_t labels_per_task = 2,
                         std::size_t train_docs = 120, std::size_t dim = 8, std::uint64_t seed = 3) {
  SyntheticCorpusSpec spec;
  spec.labels = std::max<std::size_t>(4, labels_per_task);
  spec.train_docs = train_docs;
  spec.test_docs = 40;
  spec.seed = seed;
  const SyntheticCorpus corpus = synthetic_corpus(spec);
  SplitConfig split{clients, tasks, labels_per_task, seed, 0.1};
  World w;
  w.grid = non_iid_split(corpus.train, corpus.test, split);
  const Corpus* both[] = {&corpus.train, &corpus.test};
  w.embeddings = synth_embeddings(vocabulary_of(both), dim, seed + 100);
  return w;
}

inline FederationConfig small_federation(std::size_t clients, std::size_t tasks, std::size_t rounds,
                                         Mode mode = Mode::fedseit) {
  FederationConfig f;
  f.clients = clients;
  f.tasks = tasks;
  f.rounds = rounds;
  f.mode = mode;
  f.model = tiny_model(8, 3, {2, 3});
  f.train.learning_rate = 0.1;
  f.train.batch_size = 8;
  f.train.epochs_per_round = 1;
  f.train.lambda1 = 1e-3;
  f.train.lambda2 = 0.1;
  f.sit.cluster_centers = 4;
  return f;
}

}  // namespace fedseit::testing
