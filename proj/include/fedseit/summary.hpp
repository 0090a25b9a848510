#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedseit/data.hpp"
#include "fedseit/tensor.hpp"

namespace fedseit {

/// Cluster centers [Q, D] describing the domain of one task.
struct TaskSummary {
  Tensor centers;

  std::size_t count() const { return centers.rank() == 2 ? centers.dim(0) : 0; }
  std::size_t dim() const { return centers.rank() == 2 ? centers.dim(1) : 0; }
  bool operator==(const TaskSummary&) const = default;
};

/// Mean of the in-vocabulary token embeddings; nullopt when every token is
/// out of vocabulary.
std::optional<std::vector<double>> document_vector(std::span<const std::string> tokens,
                                                    const EmbeddingTable& embeddings);

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double relative_tolerance = 1e-6;
  std::uint64_t seed = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Returns min(k, #points)
/// centers; with #points <= k the points themselves are returned in order.
Tensor kmeans(const std::vector<std::vector<double>>& points, std::size_t k, const KMeansOptions& options);

/// Clusters the document vectors of a task's training documents into at
/// most `centers` centers.
TaskSummary summarize_task(const TaskDataset& dataset, const EmbeddingTable& embeddings, std::size_t centers,
                           std::uint64_t seed);

}  // namespace fedseit
