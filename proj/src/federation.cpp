#include "fedseit/federation.hpp"

#include <exception>
#include <fstream>
#include <future>
#include <optional>
#include <stdexcept>

#include <json.hpp>

namespace fedseit {

namespace {

constexpr std::pair<MessageKind, const char*> kKindNames[] = {
    {MessageKind::global_down, "GlobalDown"},     {MessageKind::base_up, "BaseUp"},
    {MessageKind::adapter_up, "AdapterUp"},       {MessageKind::summary_up, "SummaryUp"},
    {MessageKind::adapters_down, "AdaptersDown"},
};

using nlohmann::json;

json to_json(const Message& m) {
  json payload = json::array();
  for (const auto& entry : m.payload) {
    const auto values = entry.value.data();
    payload.push_back({{"name", entry.name},
                       {"shape", entry.value.shape()},
                       {"data", std::vector<double>(values.begin(), values.end())}});
  }
  return {{"kind", to_string(m.kind)}, {"sender", m.sender}, {"receiver", m.receiver},
          {"task", m.task},           {"round", m.round},   {"payload", std::move(payload)}};
}

Message from_json(const json& j) {
  Message m;
  m.kind = parse_message_kind(j.at("kind").get<std::string>());
  m.sender = j.at("sender").get<int>();
  m.receiver = j.at("receiver").get<int>();
  m.task = j.at("task").get<int>();
  m.round = j.at("round").get<int>();
  for (const auto& entry : j.at("payload")) {
    m.payload.push_back({entry.at("name").get<std::string>(),
                         Tensor(entry.at("shape").get<Shape>(), entry.at("data").get<std::vector<double>>())});
  }
  return m;
}

std::size_t bank_size(const ParameterPack& pack, const std::string& prefix) {
  std::size_t n = 0;
  while (try_find_array(pack, prefix + "/" + std::to_string(n))) ++n;
  return n;
}

ParameterPack pack_adapters(const std::vector<ForeignAdapter>& adapters) {
  ParameterPack pack;
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    const std::string prefix = "adapter/" + std::to_string(i);
    pack.push_back({prefix + "/source", Tensor::vector({static_cast<double>(adapters[i].source_client),
                                                        static_cast<double>(adapters[i].source_task)})});
    append_bank(pack, prefix, adapters[i].filters);
  }
  return pack;
}

std::vector<ForeignAdapter> unpack_adapters(const ParameterPack& pack, std::size_t sizes) {
  std::vector<ForeignAdapter> out;
  for (std::size_t i = 0;; ++i) {
    const std::string prefix = "adapter/" + std::to_string(i);
    const Tensor* source = try_find_array(pack, prefix + "/source");
    if (!source) break;
    out.push_back({static_cast<int>((*source)[0]), static_cast<int>((*source)[1]), extract_bank(pack, prefix, sizes)});
  }
  return out;
}

std::uint64_t summary_seed(std::uint64_t seed, std::size_t client, int task) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(client), static_cast<std::uint64_t>(task), std::uint64_t{0x5e17}};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

struct RoundOutcome {
  RoundReport report;
  double accuracy = 0.0;
};

}  // namespace

std::string to_string(MessageKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "Unknown";
}

MessageKind parse_message_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (name == n) return k;
  throw std::invalid_argument("unknown message kind '" + std::string(name) + "'");
}

std::size_t Transcript::count(MessageKind kind) const {
  std::size_t n = 0;
  for (const auto& m : messages) n += m.kind == kind;
  return n;
}

void Transcript::write(std::ostream& out) const {
  for (const auto& m : messages) out << to_json(m).dump() << '\n';
}

Transcript Transcript::read(std::istream& in) {
  Transcript t;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      t.messages.push_back(from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("transcript line " + std::to_string(number) + ": " + e.what());
    }
  }
  return t;
}

void Transcript::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Transcript Transcript::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read(in);
}

void FederationConfig::validate() const {
  if (clients == 0 || tasks == 0 || rounds == 0) throw std::invalid_argument("clients, tasks and rounds must be >= 1");
  if (sit.enabled && sit.top_k == 0) throw std::invalid_argument("selective transfer needs K >= 1");
  if (sit.enabled && sit.cluster_centers == 0) throw std::invalid_argument("selective transfer needs at least one cluster center");
  model.validate();
  train.validate();
}

FederationResult run(const FederationConfig& config, const TaskGrid& grid, const EmbeddingTable& embeddings) {
  config.validate();
  if (grid.clients != config.clients || grid.tasks != config.tasks) {
    throw std::invalid_argument("task grid has " + std::to_string(grid.clients) + " clients x " +
                                std::to_string(grid.tasks) + " tasks, config expects " +
                                std::to_string(config.clients) + " x " + std::to_string(config.tasks));
  }
  if (embeddings.dim() != config.model.embedding_dim) {
    throw ShapeError("embedding dimension " + std::to_string(embeddings.dim()) + " does not match model dimension " +
                     std::to_string(config.model.embedding_dim));
  }
  const std::size_t C = config.clients;
  const int T = static_cast<int>(config.tasks);
  const int R = static_cast<int>(config.rounds);
  const std::size_t sizes = config.model.filter_sizes.size();
  const bool dls = shares_projections(config.mode);
  const bool sit = config.sit.enabled && !config.isolated;

  FederationResult result;
  auto& log = result.transcript.messages;
  std::vector<Client> clients;
  for (std::size_t c = 0; c < C; ++c) {
    std::optional<std::uint64_t> stream;
    if (!config.distinct_client_streams) stream = 0;
    clients.emplace_back(static_cast<int>(c), config.model, config.train, config.mode, stream);
  }

  AdapterRegistry registry;
  // Every federated client starts from the same server-side base.
  std::seed_seq server_seq{config.train.seed, std::uint64_t{0x5e4fe4}};
  std::mt19937_64 server_rng(server_seq);
  GlobalParameter global = glorot_filters(config.model, server_rng);
  // Aggregated {W_c, W_f} under dense layer sharing.
  std::vector<Tensor> shared;

  for (int t = 1; t <= T; ++t) {
    std::vector<TaskSummary> summaries(C);
    if (sit) {
      for (std::size_t c = 0; c < C; ++c) {
        summaries[c] = summarize_task(grid.at(c, t - 1), embeddings, config.sit.cluster_centers,
                                      summary_seed(config.train.seed, c, t));
      }
    }

    for (int r = 1; r <= R; ++r) {
      Message down{MessageKind::global_down, kServer, kBroadcast, t, r, {}};
      append_bank(down.payload, "theta_G", global);
      if (dls && !shared.empty()) {
        down.payload.push_back({"W_c", shared[0]});
        down.payload.push_back({"W_f", shared[1]});
      }
      log.push_back(down);
      for (auto& client : clients) {
        if (!config.isolated) client.apply_global(extract_bank(down.payload, "theta_G", sizes));
      }

      if (r == 1) {
        std::vector<std::vector<ForeignAdapter>> foreign(C);
        if (t > 1 && !config.isolated) {
          const std::size_t queries = log.size();
          if (sit) {
            for (std::size_t c = 0; c < C; ++c) {
              log.push_back({MessageKind::summary_up, static_cast<int>(c), kServer, t, r,
                             {{"summary", summaries[c].centers}}});
            }
          }
          for (std::size_t c = 0; c < C; ++c) {
            std::vector<ForeignAdapter> picked;
            if (sit) {
              const Message& query = log[queries + c];
              picked = select_top_k(static_cast<int>(c), TaskSummary{find_array(query.payload, "summary")}, registry,
                                    config.sit);
            } else {
              picked = latest_adapters(static_cast<int>(c), registry, t, C);
            }
            log.push_back({MessageKind::adapters_down, kServer, static_cast<int>(c), t, r, pack_adapters(picked)});
            foreign[c] = unpack_adapters(log.back().payload, sizes);
          }
        }
        std::vector<Tensor> init;
        if (dls && try_find_array(down.payload, "W_c")) {
          init = {find_array(down.payload, "W_c"), find_array(down.payload, "W_f")};
        }
        for (std::size_t c = 0; c < C; ++c) {
          clients[c].begin_task(t, grid.at(c, t - 1).labels.size(), std::move(foreign[c]), init.empty() ? nullptr : &init);
        }
      }

      // Clients train concurrently; results and failures are taken in client order.
      std::vector<std::future<RoundOutcome>> futures;
      for (std::size_t c = 0; c < C; ++c) {
        futures.push_back(std::async(std::launch::async, [&, c] {
          Client& client = clients[c];
          const TaskDataset& cell = grid.at(c, t - 1);
          RoundOutcome outcome;
          outcome.report = client.train_round(cell, embeddings, r);
          outcome.accuracy =
              test_accuracy(client.model_config(), client.mode(), client.base(), client.current(), cell, embeddings);
          return outcome;
        }));
      }
      std::exception_ptr failure;
      std::vector<RoundOutcome> outcomes(C);
      for (std::size_t c = 0; c < C; ++c) {
        try {
          outcomes[c] = futures[c].get();
        } catch (...) {
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
      for (std::size_t c = 0; c < C; ++c) {
        result.reports.push_back(outcomes[c].report);
        result.trajectory.push_back({static_cast<int>(c), t, r, outcomes[c].accuracy});
      }

      std::vector<std::vector<Tensor>> bases;
      std::vector<std::vector<Tensor>> projections;
      for (std::size_t c = 0; c < C; ++c) {
        Message up{MessageKind::base_up, static_cast<int>(c), kServer, t, r, {}};
        append_bank(up.payload, "B_hat", clients[c].sparsified_base());
        if (dls) {
          up.payload.push_back({"W_c", clients[c].current().combine_projection});
          up.payload.push_back({"W_f", clients[c].current().foreign_projection});
        }
        log.push_back(std::move(up));
        const auto& payload = log.back().payload;
        bases.push_back(extract_bank(payload, "B_hat", sizes));
        if (dls) projections.push_back({find_array(payload, "W_c"), find_array(payload, "W_f")});
      }
      global = aggregate(bases);
      result.global_trajectory.push_back(global);
      if (dls) shared = aggregate(projections);

      if (r == R) {
        for (std::size_t c = 0; c < C; ++c) {
          Message up{MessageKind::adapter_up, static_cast<int>(c), kServer, t, r, {}};
          append_bank(up.payload, "A", clients[c].current().adaptive);
          log.push_back(std::move(up));
          RegistryEntry entry{static_cast<int>(c), t, extract_bank(log.back().payload, "A", sizes), std::nullopt};
          if (sit) {
            log.push_back({MessageKind::summary_up, static_cast<int>(c), kServer, t, r,
                           {{"summary", summaries[c].centers}}});
            entry.summary = TaskSummary{find_array(log.back().payload, "summary")};
          }
          registry.store(std::move(entry));
          clients[c].end_task();
        }
      }
    }
  }
  result.registry = std::move(registry);
  result.clients = std::move(clients);
  return result;
}

std::vector<GlobalParameter> replay_global(const Transcript& transcript) {
  std::vector<GlobalParameter> trajectory;
  std::vector<std::vector<Tensor>> pending;
  std::pair<int, int> at{0, 0};
  auto flush = [&] {
    if (!pending.empty()) trajectory.push_back(aggregate(pending));
    pending.clear();
  };
  for (const auto& m : transcript.messages) {
    if (m.kind != MessageKind::base_up) continue;
    if (std::make_pair(m.task, m.round) != at) {
      flush();
      at = {m.task, m.round};
    }
    pending.push_back(extract_bank(m.payload, "B_hat", bank_size(m.payload, "B_hat")));
  }
  flush();
  return trajectory;
}

}  // namespace fedseit
