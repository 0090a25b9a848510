#include "fedseit/summary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace fedseit {

std::optional<std::vector<double>> document_vector(std::span<const std::string> tokens,
                                                    const EmbeddingTable& embeddings) {
  std::vector<double> mean(embeddings.dim(), 0.0);
  std::size_t known = 0;
  for (const auto& token : tokens) {
    const std::size_t index = embeddings.index_of(token);
    if (index == embeddings.oov_index()) continue;
    auto row = embeddings.row(index);
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += row[d];
    ++known;
  }
  if (known == 0) return std::nullopt;
  for (auto& v : mean) v /= static_cast<double>(known);
  return mean;
}

namespace {

double squared_distance(const std::vector<double>& a, const double* b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

}  // namespace

Tensor kmeans(const std::vector<std::vector<double>>& points, std::size_t k, const KMeansOptions& options) {
  if (points.empty()) throw std::invalid_argument("kmeans needs at least one point");
  if (k == 0) throw std::invalid_argument("kmeans needs at least one center");
  const std::size_t dim = points.front().size();
  const std::size_t n = points.size();
  const std::size_t q = std::min(k, n);
  Tensor centers({q, dim});
  auto center = [&](std::size_t c) { return &centers.data()[c * dim]; };
  auto set_center = [&](std::size_t c, const std::vector<double>& p) { std::copy(p.begin(), p.end(), center(c)); };

  if (n <= k) {
    for (std::size_t i = 0; i < n; ++i) set_center(i, points[i]);
    return centers;
  }

  // k-means++ seeding.
  std::mt19937_64 rng(options.seed);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  set_center(0, points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  for (std::size_t c = 1; c < q; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points[i], center(c - 1)));
      total += nearest[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    set_center(c, points[pick]);
  }

  std::vector<std::size_t> assignment(n, 0);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < q; ++c) {
        const double d = squared_distance(points[i], center(c));
        if (d < best) {
          best = d;
          assignment[i] = c;
        }
      }
      inertia += best;
    }
    std::vector<double> sums(q * dim, 0.0);
    std::vector<std::size_t> counts(q, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[assignment[i] * dim + d] += points[i][d];
    }
    for (std::size_t c = 0; c < q; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      for (std::size_t d = 0; d < dim; ++d) center(c)[d] = sums[c * dim + d] / static_cast<double>(counts[c]);
    }
    const bool converged = std::isfinite(previous) &&
                           std::abs(previous - inertia) <= options.relative_tolerance * std::max(previous, 1e-300);
    previous = inertia;
    if (converged) break;
  }
  return centers;
}

TaskSummary summarize_task(const TaskDataset& dataset, const EmbeddingTable& embeddings, std::size_t centers,
                           std::uint64_t seed) {
  if (centers == 0) throw std::invalid_argument("summary needs at least one cluster center");
  if (dataset.train.empty()) throw DataError("cannot summarize a task without training documents");
  std::vector<std::vector<double>> points;
  points.reserve(dataset.train.size());
  for (const auto& example : dataset.train) {
    if (auto v = document_vector(example.tokens, embeddings)) points.push_back(std::move(*v));
  }
  if (points.empty()) {
    throw DataError("every training document of client " + std::to_string(dataset.client_id) + " task " +
                    std::to_string(dataset.task_id) + " is out of vocabulary");
  }
  return TaskSummary{kmeans(points, centers, {100, 1e-6, seed})};
}

}  // namespace fedseit
