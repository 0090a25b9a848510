#include "fedseit/data.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fedseit {

namespace {

using json = nlohmann::json;

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[uniform_index(rng, i)]);
}

bool is_alnum(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t end = i;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    std::size_t first = i, last = end;
    while (first < last && !is_alnum(static_cast<unsigned char>(text[first]))) ++first;
    while (last > first && !is_alnum(static_cast<unsigned char>(text[last - 1]))) --last;
    if (first < last) {
      std::string token(text.substr(first, last - first));
      for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      tokens.push_back(std::move(token));
    }
    i = end;
  }
  return tokens;
}

Corpus make_corpus(std::vector<LabeledDocument> documents) {
  Corpus corpus;
  std::set<std::string> labels;
  for (auto& doc : documents) {
    if (doc.tokens.empty()) {
      ++corpus.dropped_empty;
      continue;
    }
    labels.insert(doc.label);
    corpus.documents.push_back(std::move(doc));
  }
  corpus.labels.assign(labels.begin(), labels.end());
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::vector<LabeledDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected label<TAB>text");
    }
    docs.push_back({line.substr(0, tab), tokenize(std::string_view(line).substr(tab + 1))});
  }
  return make_corpus(std::move(docs));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus " + path.string());
  for (const auto& doc : corpus.documents) {
    out << doc.label << '\t';
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) out << (i ? " " : "") << doc.tokens[i];
    out << '\n';
  }
}

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, const Tensor& vectors) : tokens_(std::move(tokens)) {
  if (vectors.rank() != 2 || vectors.dim(0) != tokens_.size()) {
    throw ShapeError("embedding matrix " + to_string(vectors.shape()) + " does not match " +
                     std::to_string(tokens_.size()) + " tokens");
  }
  if (!vectors.is_finite()) throw DataError("embedding matrix has non-finite entries");
  dim_ = vectors.dim(1);
  rows_.assign(vectors.data().begin(), vectors.data().end());
  rows_.resize(rows_.size() + dim_, 0.0);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw DataError("duplicate embedding token '" + tokens_[i] + "'");
  }
}

std::size_t EmbeddingTable::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? oov_index() : it->second;
}

std::span<const double> EmbeddingTable::row(std::size_t index) const {
  return std::span<const double>(rows_).subspan(index * dim_, dim_);
}

Tensor EmbeddingTable::embed(std::span<const std::string> tokens, std::size_t min_length) const {
  const std::size_t length = std::max(tokens.size(), min_length);
  Tensor out({length, dim_});
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    auto r = row(index_of(tokens[p]));
    std::copy(r.begin(), r.end(), out.data().begin() + static_cast<std::ptrdiff_t>(p * dim_));
  }
  return out;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embeddings " + path.string());
  out.precision(17);
  out << tokens_.size() << ' ' << dim_ << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << tokens_[i];
    for (double v : row(i)) out << ' ' << v;
    out << '\n';
  }
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings " + path.string());
  std::vector<std::string> tokens;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> parts;
    for (std::string f; fields >> f;) parts.push_back(std::move(f));
    if (parts.empty()) continue;
    if (line_no == 1 && parts.size() == 2 && tokens.empty()) {
      // "<count> <dim>" header as written by word2vec tools.
      char* end = nullptr;
      std::strtoull(parts[0].c_str(), &end, 10);
      if (*end == '\0') {
        std::strtoull(parts[1].c_str(), &end, 10);
        if (*end == '\0') continue;
      }
    }
    if (parts.size() != dim + 1) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected token and " + std::to_string(dim) +
                      " values, got " + std::to_string(parts.size() - 1));
    }
    for (std::size_t k = 1; k <= dim; ++k) {
      char* end = nullptr;
      const double v = std::strtod(parts[k].c_str(), &end);
      if (*end != '\0') {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed number '" + parts[k] + "'");
      }
      values.push_back(v);
    }
    tokens.push_back(parts[0]);
  }
  const std::size_t count = tokens.size();
  return EmbeddingTable(std::move(tokens), Tensor({count, dim}, std::move(values)));
}

EmbeddingTable synth_embeddings(std::vector<std::string> vocabulary, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  Tensor vectors({vocabulary.size(), dim});
  for (auto& v : vectors.data()) v = dist(rng);
  return EmbeddingTable(std::move(vocabulary), vectors);
}

std::vector<std::string> vocabulary_of(std::span<const Corpus* const> corpora) {
  std::set<std::string> vocab;
  for (const Corpus* c : corpora)
    for (const auto& doc : c->documents) vocab.insert(doc.tokens.begin(), doc.tokens.end());
  return {vocab.begin(), vocab.end()};
}

TaskGrid non_iid_split(const Corpus& train, const Corpus& test, const SplitConfig& config) {
  if (config.clients == 0 || config.tasks == 0 || config.labels_per_task == 0) {
    throw DataError("split needs at least one client, task and label per task");
  }
  const std::size_t n_labels = train.labels.size();
  if (config.labels_per_task > n_labels) {
    throw DataError("labels_per_task " + std::to_string(config.labels_per_task) + " exceeds the corpus' " +
                    std::to_string(n_labels) + " labels");
  }
  std::mt19937_64 rng(config.seed);
  const std::size_t n_cells = config.clients * config.tasks;

  // Label draws, cell by cell in client-major order.
  std::vector<std::vector<std::size_t>> cell_labels(n_cells);
  std::vector<std::vector<std::size_t>> label_cells(n_labels);
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    std::vector<std::size_t> pool(n_labels);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t k = 0; k < config.labels_per_task; ++k) {
      const std::size_t pick = k + uniform_index(rng, n_labels - k);
      std::swap(pool[k], pool[pick]);
      cell_labels[cell].push_back(pool[k]);
      label_cells[pool[k]].push_back(cell);
    }
  }

  std::map<std::string, std::size_t> label_index;
  for (std::size_t i = 0; i < n_labels; ++i) label_index[train.labels[i]] = i;
  std::vector<std::vector<std::size_t>> label_docs(n_labels);
  for (std::size_t d = 0; d < train.documents.size(); ++d) {
    label_docs[label_index.at(train.documents[d].label)].push_back(d);
  }

  // Equal disjoint shares per label, assigned in draw order.
  std::vector<std::map<std::size_t, std::vector<std::size_t>>> cell_share(n_cells);
  for (std::size_t l = 0; l < n_labels; ++l) {
    const auto& cells = label_cells[l];
    if (cells.empty()) continue;
    auto docs = label_docs[l];
    if (docs.size() < cells.size()) {
      throw DataError("label '" + train.labels[l] + "' has " + std::to_string(docs.size()) +
                      " training documents but was drawn by " + std::to_string(cells.size()) + " tasks");
    }
    seeded_shuffle(docs, rng);
    const std::size_t k = cells.size(), base = docs.size() / k, extra = docs.size() % k;
    std::size_t offset = 0;
    for (std::size_t part = 0; part < k; ++part) {
      const std::size_t len = base + (part < extra ? 1 : 0);
      cell_share[cells[part]][l].assign(docs.begin() + static_cast<std::ptrdiff_t>(offset),
                                        docs.begin() + static_cast<std::ptrdiff_t>(offset + len));
      offset += len;
    }
  }

  TaskGrid grid{config.clients, config.tasks, {}};
  grid.cells.reserve(n_cells);
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    TaskDataset task;
    task.client_id = static_cast<int>(cell / config.tasks);
    task.task_id = static_cast<int>(cell % config.tasks) + 1;
    std::map<std::size_t, std::size_t> local;
    std::vector<Example> pool;
    for (std::size_t l : cell_labels[cell]) {
      local[l] = task.labels.size();
      task.labels.push_back(train.labels[l]);
      for (std::size_t d : cell_share[cell][l]) pool.push_back({train.documents[d].tokens, local[l]});
    }
    seeded_shuffle(pool, rng);
    const auto n_valid = static_cast<std::size_t>(static_cast<double>(pool.size()) * config.valid_fraction);
    task.valid.assign(std::make_move_iterator(pool.begin()),
                      std::make_move_iterator(pool.begin() + static_cast<std::ptrdiff_t>(n_valid)));
    task.train.assign(std::make_move_iterator(pool.begin() + static_cast<std::ptrdiff_t>(n_valid)),
                      std::make_move_iterator(pool.end()));
    for (const auto& doc : test.documents) {
      auto it = label_index.find(doc.label);
      if (it == label_index.end()) continue;
      if (auto hit = local.find(it->second); hit != local.end()) task.test.push_back({doc.tokens, hit->second});
    }
    grid.cells.push_back(std::move(task));
  }
  return grid;
}

TaskGrid reorder_tasks(const TaskGrid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TaskGrid out{grid.clients, grid.tasks, {}};
  out.cells.reserve(grid.cells.size());
  for (std::size_t c = 0; c < grid.clients; ++c) {
    std::vector<std::size_t> order(grid.tasks);
    std::iota(order.begin(), order.end(), 0);
    seeded_shuffle(order, rng);
    for (std::size_t t = 0; t < grid.tasks; ++t) {
      TaskDataset task = grid.at(c, order[t]);
      task.task_id = static_cast<int>(t) + 1;
      out.cells.push_back(std::move(task));
    }
  }
  return out;
}

namespace {

json examples_to_json(const std::vector<Example>& examples) {
  json arr = json::array();
  for (const auto& e : examples) arr.push_back({{"label", e.label}, {"tokens", e.tokens}});
  return arr;
}

std::vector<Example> examples_from_json(const json& arr) {
  std::vector<Example> out;
  for (const auto& e : arr) out.push_back({e.at("tokens").get<std::vector<std::string>>(), e.at("label").get<std::size_t>()});
  return out;
}

std::string cell_file(const TaskDataset& task) {
  return "c" + std::to_string(task.client_id) + "_t" + std::to_string(task.task_id) + ".json";
}

}  // namespace

void save_grid(const TaskGrid& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tasks");
  json manifest = {{"clients", grid.clients}, {"tasks", grid.tasks}, {"cells", json::array()}};
  for (const auto& task : grid.cells) {
    manifest["cells"].push_back({{"client", task.client_id},
                                 {"task", task.task_id},
                                 {"labels", task.labels},
                                 {"train", task.train.size()},
                                 {"valid", task.valid.size()},
                                 {"test", task.test.size()},
                                 {"file", "tasks/" + cell_file(task)}});
    json cell = {{"client", task.client_id},
                 {"task", task.task_id},
                 {"labels", task.labels},
                 {"train", examples_to_json(task.train)},
                 {"valid", examples_to_json(task.valid)},
                 {"test", examples_to_json(task.test)}};
    std::ofstream out(dir / "tasks" / cell_file(task));
    if (!out) throw DataError("cannot write " + (dir / "tasks" / cell_file(task)).string());
    out << cell.dump() << '\n';
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

TaskGrid load_grid(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("cannot open " + (dir / "manifest.json").string());
  const json manifest = json::parse(in);
  TaskGrid grid{manifest.at("clients").get<std::size_t>(), manifest.at("tasks").get<std::size_t>(), {}};
  for (const auto& entry : manifest.at("cells")) {
    std::ifstream cell_in(dir / entry.at("file").get<std::string>());
    if (!cell_in) throw DataError("cannot open " + (dir / entry.at("file").get<std::string>()).string());
    const json cell = json::parse(cell_in);
    TaskDataset task;
    task.client_id = cell.at("client").get<int>();
    task.task_id = cell.at("task").get<int>();
    task.labels = cell.at("labels").get<std::vector<std::string>>();
    task.train = examples_from_json(cell.at("train"));
    task.valid = examples_from_json(cell.at("valid"));
    task.test = examples_from_json(cell.at("test"));
    grid.cells.push_back(std::move(task));
  }
  if (grid.cells.size() != grid.clients * grid.tasks) {
    throw DataError("grid manifest lists " + std::to_string(grid.cells.size()) + " cells, expected " +
                    std::to_string(grid.clients * grid.tasks));
  }
  return grid;
}

SyntheticCorpus synthetic_corpus(const SyntheticCorpusSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  auto label_name = [&](std::size_t l) {
    std::string id = std::to_string(l);
    return spec.prefix + "label" + std::string(id.size() < 2 ? 2 - id.size() : 0, '0') + id;
  };
  auto make = [&](std::size_t count) {
    std::vector<LabeledDocument> docs;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t l = i % spec.labels;
      const std::size_t length = spec.min_length + uniform_index(rng, spec.max_length - spec.min_length + 1);
      LabeledDocument doc{label_name(l), {}};
      for (std::size_t p = 0; p < length; ++p) {
        if (coin(rng) < spec.keyword_rate) {
          doc.tokens.push_back(spec.prefix + "k" + std::to_string(l) + "_" +
                               std::to_string(uniform_index(rng, spec.keywords_per_label)));
        } else {
          doc.tokens.push_back(spec.prefix + "s" + std::to_string(uniform_index(rng, spec.shared_words)));
        }
      }
      docs.push_back(std::move(doc));
    }
    return make_corpus(std::move(docs));
  };
  SyntheticCorpus out;
  out.train = make(spec.train_docs);
  out.test = make(spec.test_docs);
  return out;
}

}  // namespace fedseit
