#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "fedseit/client.hpp"
#include "fedseit/data.hpp"
#include "fedseit/eval.hpp"
#include "fedseit/model.hpp"
#include "fedseit/param_io.hpp"
#include "fedseit/server.hpp"

namespace fedseit {

enum class MessageKind { global_down, base_up, adapter_up, summary_up, adapters_down };

std::string to_string(MessageKind kind);
MessageKind parse_message_kind(std::string_view name);

/// Endpoint id of the server in messages.
inline constexpr int kServer = -1;
/// Receiver id of messages addressed to every client.
inline constexpr int kBroadcast = -2;

struct Message {
  MessageKind kind = MessageKind::global_down;
  int sender = kServer;
  int receiver = kBroadcast;
  int task = 1;
  int round = 1;
  ParameterPack payload;

  bool operator==(const Message&) const = default;
};

/// Ordered log of every message exchanged during a run.
struct Transcript {
  std::vector<Message> messages;

  std::size_t count(MessageKind kind) const;
  /// One JSON object per line; doubles are written round-trip exact.
  void write(std::ostream& out) const;
  static Transcript read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Transcript load(const std::filesystem::path& path);

  bool operator==(const Transcript&) const = default;
};

struct FederationConfig {
  std::size_t clients = 3;
  std::size_t tasks = 5;
  std::size_t rounds = 10;
  Mode mode = Mode::fedseit;
  /// Baseline without federation: clients ignore the global parameter and
  /// never receive foreign adapters.
  bool isolated = false;
  /// When false every client draws from the same random stream (useful for
  /// symmetry checks); otherwise each client has its own.
  bool distinct_client_streams = true;
  SITConfig sit{};
  TrainConfig train{};
  ModelConfig model{};

  void validate() const;
};

struct FederationResult {
  std::vector<RoundReport> reports;
  Transcript transcript;
  /// Global parameter after every round, in round order.
  std::vector<GlobalParameter> global_trajectory;
  std::vector<TrajectoryPoint> trajectory;
  AdapterRegistry registry;
  /// Final client states; each holds its final base and frozen task bundles.
  std::vector<Client> clients;
};

/// Runs every task and round over `grid` (C x T cells).
FederationResult run(const FederationConfig& config, const TaskGrid& grid, const EmbeddingTable& embeddings);

/// Recomputes the global parameter trajectory from the BaseUp messages.
std::vector<GlobalParameter> replay_global(const Transcript& transcript);

}  // namespace fedseit
