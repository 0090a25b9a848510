#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fedseit/model.hpp"
#include "fedseit/summary.hpp"

namespace fedseit {

/// Server-side aggregate of the clients' sparsified bases.
using GlobalParameter = FilterBank;

/// Elementwise mean of equally shaped tensor lists (unweighted FedAvg).
std::vector<Tensor> aggregate(std::span<const std::vector<Tensor>> inputs);

/// Mean cosine similarity over all (query center, candidate center) pairs.
/// Zero-norm centers contribute 0.
double score_overlap(const TaskSummary& query, const TaskSummary& candidate);

struct SITConfig {
  bool enabled = false;
  /// Adapters sent to each client.
  std::size_t top_k = 3;
  /// Cluster centers per task summary.
  std::size_t cluster_centers = 200;
};

struct RegistryEntry {
  int client_id = 0;
  int task_id = 0;
  FilterBank adaptive;
  std::optional<TaskSummary> summary;

  bool operator==(const RegistryEntry&) const = default;
};

/// Thrown when an adapter lookup or registration is inconsistent.
class RegistryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Write-once store of every completed (client, task) adapter and summary.
class AdapterRegistry {
 public:
  void store(RegistryEntry entry);
  const RegistryEntry* find(int client_id, int task_id) const;
  std::size_t size() const noexcept { return entries_.size(); }
  /// Entries ordered by (client, task).
  std::vector<const RegistryEntry*> entries() const;

  void save(const std::filesystem::path& path) const;
  static AdapterRegistry load(const std::filesystem::path& path, std::size_t filter_sizes);

  bool operator==(const AdapterRegistry&) const = default;

 private:
  std::map<std::pair<int, int>, RegistryEntry> entries_;
};

/// A candidate adapter with its overlap score, as ranked by select_top_k.
struct ScoredAdapter {
  int client_id = 0;
  int task_id = 0;
  double score = 0.0;
};

/// Ranks every registry entry owned by another client by score_overlap
/// against `query` (descending, ties by client then task) and keeps the
/// first K.
std::vector<ScoredAdapter> rank_candidates(int requesting_client, const TaskSummary& query,
                                           const AdapterRegistry& registry, std::size_t top_k);

std::vector<ForeignAdapter> select_top_k(int requesting_client, const TaskSummary& query,
                                         const AdapterRegistry& registry, const SITConfig& config);

/// Every client's adapter of task t-1 (including the requester's own);
/// empty for t = 1.
std::vector<ForeignAdapter> latest_adapters(int requesting_client, const AdapterRegistry& registry, int task,
                                            std::size_t clients);

}  // namespace fedseit
