#include "fedseit/server.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedseit/param_io.hpp"

namespace fedseit {

std::vector<Tensor> aggregate(std::span<const std::vector<Tensor>> inputs) {
  if (inputs.empty()) throw std::invalid_argument("aggregate needs at least one input");
  std::vector<Tensor> mean = inputs.front();
  for (std::size_t c = 1; c < inputs.size(); ++c) {
    if (inputs[c].size() != mean.size()) throw ShapeError("aggregate: inputs hold different numbers of tensors");
    for (std::size_t l = 0; l < mean.size(); ++l) mean[l] += inputs[c][l];
  }
  const double scale = 1.0 / static_cast<double>(inputs.size());
  for (auto& t : mean)
    for (auto& v : t.data()) v *= scale;
  return mean;
}

double score_overlap(const TaskSummary& query, const TaskSummary& candidate) {
  if (query.dim() != candidate.dim()) {
    throw ShapeError("score_overlap: summary dimensions " + std::to_string(query.dim()) + " and " +
                     std::to_string(candidate.dim()) + " differ");
  }
  if (query.count() == 0 || candidate.count() == 0) throw std::invalid_argument("score_overlap: empty summary");
  const std::size_t dim = query.dim();
  auto norms = [dim](const Tensor& centers) {
    std::vector<double> out(centers.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) s += centers.at(i, d) * centers.at(i, d);
      out[i] = std::sqrt(s);
    }
    return out;
  };
  const auto qn = norms(query.centers);
  const auto cn = norms(candidate.centers);
  double total = 0.0;
  for (std::size_t i = 0; i < qn.size(); ++i) {
    for (std::size_t j = 0; j < cn.size(); ++j) {
      if (qn[i] == 0.0 || cn[j] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += query.centers.at(i, d) * candidate.centers.at(j, d);
      total += dot / (qn[i] * cn[j]);
    }
  }
  return total / static_cast<double>(qn.size() * cn.size());
}

void AdapterRegistry::store(RegistryEntry entry) {
  const auto key = std::make_pair(entry.client_id, entry.task_id);
  if (entries_.count(key)) {
    throw RegistryError("adapter for client " + std::to_string(entry.client_id) + " task " +
                        std::to_string(entry.task_id) + " is already registered");
  }
  entries_.emplace(key, std::move(entry));
}

const RegistryEntry* AdapterRegistry::find(int client_id, int task_id) const {
  auto it = entries_.find({client_id, task_id});
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<const RegistryEntry*> AdapterRegistry::entries() const {
  std::vector<const RegistryEntry*> out;
  out.reserve(entries_.size());
  for (const auto& [key, entry] : entries_) out.push_back(&entry);
  return out;
}

void AdapterRegistry::save(const std::filesystem::path& path) const {
  ParameterPack pack;
  for (const auto& [key, entry] : entries_) {
    const std::string prefix = "entry/" + std::to_string(entry.client_id) + "/" + std::to_string(entry.task_id);
    append_bank(pack, prefix + "/A", entry.adaptive);
    if (entry.summary) pack.push_back({prefix + "/summary", entry.summary->centers});
  }
  save_pack(path, pack);
}

AdapterRegistry AdapterRegistry::load(const std::filesystem::path& path, std::size_t filter_sizes) {
  const ParameterPack pack = load_pack(path);
  AdapterRegistry registry;
  for (const auto& array : pack) {
    // Each entry starts with "entry/<client>/<task>/A/0".
    if (!array.name.ends_with("/A/0")) continue;
    const std::string prefix = array.name.substr(0, array.name.size() - 4);
    const auto first = prefix.find('/'), second = prefix.find('/', first + 1);
    RegistryEntry entry;
    entry.client_id = std::stoi(prefix.substr(first + 1, second - first - 1));
    entry.task_id = std::stoi(prefix.substr(second + 1));
    entry.adaptive = extract_bank(pack, prefix + "/A", filter_sizes);
    if (const Tensor* summary = try_find_array(pack, prefix + "/summary")) entry.summary = TaskSummary{*summary};
    registry.store(std::move(entry));
  }
  return registry;
}

std::vector<ScoredAdapter> rank_candidates(int requesting_client, const TaskSummary& query,
                                           const AdapterRegistry& registry, std::size_t top_k) {
  std::vector<ScoredAdapter> ranked;
  for (const RegistryEntry* entry : registry.entries()) {
    if (entry->client_id == requesting_client) continue;
    if (!entry->summary) {
      throw RegistryError("adapter for client " + std::to_string(entry->client_id) + " task " +
                          std::to_string(entry->task_id) + " has no task summary");
    }
    ranked.push_back({entry->client_id, entry->task_id, score_overlap(query, *entry->summary)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const ScoredAdapter& a, const ScoredAdapter& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.client_id != b.client_id) return a.client_id < b.client_id;
    return a.task_id < b.task_id;
  });
  if (ranked.size() > top_k) ranked.resize(top_k);
  return ranked;
}

std::vector<ForeignAdapter> select_top_k(int requesting_client, const TaskSummary& query,
                                         const AdapterRegistry& registry, const SITConfig& config) {
  if (!config.enabled) throw std::logic_error("select_top_k called with selective transfer disabled");
  std::vector<ForeignAdapter> out;
  for (const auto& pick : rank_candidates(requesting_client, query, registry, config.top_k)) {
    out.push_back({pick.client_id, pick.task_id, registry.find(pick.client_id, pick.task_id)->adaptive});
  }
  return out;
}

std::vector<ForeignAdapter> latest_adapters(int /*requesting_client*/, const AdapterRegistry& registry, int task,
                                            std::size_t clients) {
  std::vector<ForeignAdapter> out;
  if (task <= 1) return out;
  for (std::size_t c = 0; c < clients; ++c) {
    const RegistryEntry* entry = registry.find(static_cast<int>(c), task - 1);
    if (!entry) {
      throw RegistryError("missing adapter for client " + std::to_string(c) + " task " + std::to_string(task - 1));
    }
    out.push_back({entry->client_id, entry->task_id, entry->adaptive});
  }
  return out;
}

}  // namespace fedseit
