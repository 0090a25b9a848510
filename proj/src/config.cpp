#include "fedseit/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string_view>

namespace fedseit {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text, std::string_view key) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("key '" + std::string(key) + "': cannot parse '" + std::string(text) + "' as a number");
  }
  return value;
}

// from_chars for double is missing from older standard libraries.
double parse_double(std::string_view text, std::string_view key) {
  const std::string s(text);
  char* end = nullptr;
  const double value = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ConfigError("key '" + std::string(key) + "': cannot parse '" + s + "' as a number");
  }
  return value;
}

bool parse_bool(std::string_view text, std::string_view key) {
  if (text == "true" || text == "on" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "off" || text == "no" || text == "0") return false;
  throw ConfigError("key '" + std::string(key) + "': expected true/false, got '" + std::string(text) + "'");
}

template <typename T>
std::vector<T> parse_list(std::string_view text, std::string_view key) {
  std::vector<T> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (item.empty()) throw ConfigError("key '" + std::string(key) + "': empty list item");
    out.push_back(parse_number<T>(item, key));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError("key '" + std::string(key) + "': empty list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, std::string_view, const std::filesystem::path&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string resolve(std::string_view value, const std::filesystem::path& base) {
  if (value == kSynthetic || base.empty()) return std::string(value);
  const std::filesystem::path p{std::string(value)};
  return p.is_absolute() ? p.string() : (base / p).lexically_normal().string();
}

#define FS_SIZE(name, field)                                                                                   \
  Key {                                                                                                        \
    name, [](ExperimentConfig& c, std::string_view v, const auto&) { c.field = parse_number<std::size_t>(v, name); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                                      \
  }
#define FS_DOUBLE(name, field)                                                                                  \
  Key {                                                                                                         \
    name, [](ExperimentConfig& c, std::string_view v, const auto&) { c.field = parse_double(v, name); },         \
        [](const ExperimentConfig& c) { return number(c.field); }                                               \
  }
#define FS_U64(name, field)                                                                                       \
  Key {                                                                                                           \
    name, [](ExperimentConfig& c, std::string_view v, const auto&) { c.field = parse_number<std::uint64_t>(v, name); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                                         \
  }
#define FS_PATH(name, field)                                                                                    \
  Key {                                                                                                         \
    name, [](ExperimentConfig& c, std::string_view v, const auto& base) { c.field = resolve(v, base); },        \
        [](const ExperimentConfig& c) { return c.field; }                                                       \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      FS_SIZE("clients", federation.clients),
      FS_SIZE("tasks", federation.tasks),
      FS_SIZE("rounds", federation.rounds),
      FS_SIZE("epochs_per_round", federation.train.epochs_per_round),
      FS_SIZE("early_stopping_patience", federation.train.early_stop_patience),
      FS_DOUBLE("learning_rate", federation.train.learning_rate),
      FS_SIZE("batch_size", federation.train.batch_size),
      FS_DOUBLE("dropout", federation.model.dropout),
      FS_DOUBLE("lambda1", federation.train.lambda1),
      FS_DOUBLE("lambda2", federation.train.lambda2),
      Key{"kernel_sizes",
          [](ExperimentConfig& c, std::string_view v, const auto&) {
            c.federation.model.filter_sizes = parse_list<std::size_t>(v, "kernel_sizes");
          },
          [](const ExperimentConfig& c) { return join(c.federation.model.filter_sizes); }},
      FS_SIZE("filters_per_size", federation.model.filters_per_size),
      FS_SIZE("embedding_dim", federation.model.embedding_dim),
      Key{"sit",
          [](ExperimentConfig& c, std::string_view v, const auto&) {
            if (v == "off") {
              c.federation.sit.enabled = false;
            } else {
              c.federation.sit.enabled = true;
              c.federation.sit.top_k = parse_number<std::size_t>(v, "sit");
            }
          },
          [](const ExperimentConfig& c) {
            return c.federation.sit.enabled ? std::to_string(c.federation.sit.top_k) : std::string("off");
          }},
      FS_SIZE("cluster_centers", federation.sit.cluster_centers),
      Key{"mode",
          [](ExperimentConfig& c, std::string_view v, const auto&) {
            try {
              c.federation.mode = parse_mode(v);
            } catch (const std::invalid_argument& e) {
              throw ConfigError(std::string("key 'mode': ") + e.what());
            }
          },
          [](const ExperimentConfig& c) { return to_string(c.federation.mode); }},
      Key{"isolated",
          [](ExperimentConfig& c, std::string_view v, const auto&) { c.federation.isolated = parse_bool(v, "isolated"); },
          [](const ExperimentConfig& c) { return std::string(c.federation.isolated ? "true" : "false"); }},
      FS_SIZE("labels_per_task", split.labels_per_task),
      FS_DOUBLE("valid_fraction", split.valid_fraction),
      FS_U64("task_generation_seed", split.seed),
      Key{"seeds",
          [](ExperimentConfig& c, std::string_view v, const auto&) { c.seeds = parse_list<std::uint64_t>(v, "seeds"); },
          [](const ExperimentConfig& c) { return join(c.seeds); }},
      FS_PATH("train_corpus", train_corpus),
      FS_PATH("test_corpus", test_corpus),
      FS_PATH("embeddings", embeddings),
      FS_U64("embedding_seed", embedding_seed),
      FS_DOUBLE("mask_init_logit", federation.train.init.mask_logit),
      FS_DOUBLE("adaptive_init_scale", federation.train.init.adaptive_scale),
      FS_SIZE("synthetic_labels", synthetic.labels),
      FS_SIZE("synthetic_train_docs", synthetic.train_docs),
      FS_SIZE("synthetic_test_docs", synthetic.test_docs),
      FS_SIZE("synthetic_keywords_per_label", synthetic.keywords_per_label),
      FS_SIZE("synthetic_shared_words", synthetic.shared_words),
      FS_SIZE("synthetic_min_length", synthetic.min_length),
      FS_SIZE("synthetic_max_length", synthetic.max_length),
      FS_DOUBLE("synthetic_keyword_rate", synthetic.keyword_rate),
      FS_U64("synthetic_seed", synthetic.seed),
  };
  return table;
}

#undef FS_SIZE
#undef FS_DOUBLE
#undef FS_U64
#undef FS_PATH

}  // namespace

void ExperimentConfig::validate() const {
  federation.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (split.labels_per_task == 0) throw ConfigError("labels_per_task must be at least 1");
  if (!(split.valid_fraction >= 0.0 && split.valid_fraction < 1.0)) throw ConfigError("valid_fraction must lie in [0, 1)");
  if ((train_corpus == kSynthetic) != (test_corpus == kSynthetic)) {
    throw ConfigError("train_corpus and test_corpus must both be files or both be synthetic");
  }
}

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  ExperimentConfig config;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
    }
    const auto key = trim(view.substr(0, eq));
    const auto value = trim(view.substr(eq + 1));
    const Key* match = nullptr;
    for (const auto& k : keys())
      if (key == k.name) match = &k;
    if (!match) throw ConfigError("line " + std::to_string(number) + ": unknown key '" + std::string(key) + "'");
    try {
      match->set(config, value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  config.split.clients = config.federation.clients;
  config.split.tasks = config.federation.tasks;
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, path.parent_path());
}

std::string to_text(const ExperimentConfig& config) {
  std::ostringstream out;
  for (const auto& k : keys()) out << k.name << " = " << k.get(config) << '\n';
  return out.str();
}

}  // namespace fedseit
