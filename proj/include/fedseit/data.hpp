#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fedseit/tensor.hpp"

namespace fedseit {

/// Raised for malformed inputs or corpora that cannot satisfy a split.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lowercases, splits on whitespace, strips leading/trailing
/// non-alphanumeric characters and drops empty tokens.
std::vector<std::string> tokenize(std::string_view text);

struct LabeledDocument {
  std::string label;
  std::vector<std::string> tokens;
};

struct Corpus {
  std::vector<LabeledDocument> documents;
  /// Distinct labels, sorted.
  std::vector<std::string> labels;
  /// Lines whose text tokenized to nothing.
  std::size_t dropped_empty = 0;
};

/// Builds a corpus from already tokenized documents; empty ones are dropped.
Corpus make_corpus(std::vector<LabeledDocument> documents);

/// Reads "label<TAB>text" lines (UTF-8).
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Frozen word embeddings with a trailing all-zero row for unknown tokens.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  /// `vectors` has shape [tokens.size(), D]; the OOV row is appended here.
  EmbeddingTable(std::vector<std::string> tokens, const Tensor& vectors);

  std::size_t dim() const noexcept { return dim_; }
  /// Number of known tokens (the OOV row is not counted).
  std::size_t vocab_size() const noexcept { return tokens_.size(); }
  std::size_t oov_index() const noexcept { return tokens_.size(); }
  std::size_t index_of(std::string_view token) const;
  std::span<const double> row(std::size_t index) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Embedding matrix [max(|tokens|, min_length), D]; short documents are
  /// right-padded with zero rows.
  Tensor embed(std::span<const std::string> tokens, std::size_t min_length) const;

  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> rows_;
  std::size_t dim_ = 0;
};

/// Text format: optional "<count> <dim>" header, then "token v1 ... vD" rows.
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dim);

/// Rows drawn from uniform(-0.1, 0.1) with a seeded generator.
EmbeddingTable synth_embeddings(std::vector<std::string> vocabulary, std::size_t dim, std::uint64_t seed);

/// Sorted distinct tokens of a set of corpora.
std::vector<std::string> vocabulary_of(std::span<const Corpus* const> corpora);

struct Example {
  std::vector<std::string> tokens;
  /// Index into the owning task's label list.
  std::size_t label = 0;

  bool operator==(const Example&) const = default;
};

struct TaskDataset {
  int client_id = 0;
  /// 1-based position in the client's task sequence.
  int task_id = 1;
  std::vector<std::string> labels;
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;

  bool operator==(const TaskDataset&) const = default;
};

struct SplitConfig {
  std::size_t clients = 3;
  std::size_t tasks = 5;
  std::size_t labels_per_task = 4;
  std::uint64_t seed = 42;
  double valid_fraction = 0.1;
};

/// C x T task cells, stored client-major.
struct TaskGrid {
  std::size_t clients = 0;
  std::size_t tasks = 0;
  std::vector<TaskDataset> cells;

  TaskDataset& at(std::size_t client, std::size_t task_index) { return cells.at(client * tasks + task_index); }
  const TaskDataset& at(std::size_t client, std::size_t task_index) const {
    return cells.at(client * tasks + task_index);
  }
  bool operator==(const TaskGrid&) const = default;
};

/// Label-sampled non-iid task construction. Every (client, task) cell draws
/// `labels_per_task` labels without replacement; each label's training
/// documents are partitioned into equal disjoint shares among the cells that
/// drew it, in draw order. Test sets take every test document of the cell's
/// labels.
TaskGrid non_iid_split(const Corpus& train, const Corpus& test, const SplitConfig& config);

/// Permutes each client's task order with `seed` and renumbers task ids.
TaskGrid reorder_tasks(const TaskGrid& grid, std::uint64_t seed);

/// Writes manifest.json plus one JSON file per cell under `dir/tasks`.
void save_grid(const TaskGrid& grid, const std::filesystem::path& dir);
TaskGrid load_grid(const std::filesystem::path& dir);

/// Parameters of a keyword-driven synthetic corpus used for desk-scale runs.
struct SyntheticCorpusSpec {
  std::size_t labels = 12;
  std::size_t train_docs = 1000;
  std::size_t test_docs = 240;
  std::size_t keywords_per_label = 6;
  std::size_t shared_words = 40;
  std::size_t min_length = 8;
  std::size_t max_length = 16;
  /// Probability that a token is a label keyword rather than a shared word.
  double keyword_rate = 0.35;
  std::string prefix = "w";
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  Corpus train;
  Corpus test;
};

SyntheticCorpus synthetic_corpus(const SyntheticCorpusSpec& spec);

}  // namespace fedseit
