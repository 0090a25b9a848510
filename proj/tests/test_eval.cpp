#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedseit/config.hpp"
#include "fedseit/eval.hpp"
#include "fedseit/experiment.hpp"
#include "fedseit/param_io.hpp"
#include "support.hpp"

using namespace fedseit;
using namespace fedseit::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fedseit_eval_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream s(line);
    std::string f;
    while (std::getline(s, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    rows.push_back(fields);
  }
  return rows;
}

ExperimentConfig tiny_experiment() {
  std::istringstream in(
      "clients = 2\n"
      "tasks = 2\n"
      "rounds = 1\n"
      "epochs_per_round = 1\n"
      "learning_rate = 0.1\n"
      "batch_size = 8\n"
      "dropout = 0\n"
      "kernel_sizes = 2,3\n"
      "filters_per_size = 3\n"
      "embedding_dim = 8\n"
      "labels_per_task = 2\n"
      "seeds = 1,2\n"
      "synthetic_labels = 4\n"
      "synthetic_train_docs = 120\n"
      "synthetic_test_docs = 40\n");
  return parse_config(in);
}

}  // namespace

TEST_CASE("micro accuracy examples and errors") {
  const std::vector<std::size_t> p{0, 1, 1, 2}, t{0, 1, 2, 2};
  CHECK(micro_accuracy(p, t) == 0.75);
  CHECK(micro_accuracy(t, t) == 1.0);
  const std::vector<std::size_t> none{1, 1}, zero{0, 0};
  CHECK(micro_accuracy(none, zero) == 0.0);
  CHECK_THROWS(micro_accuracy(p, none));
  CHECK_THROWS(micro_accuracy(std::span<const std::size_t>{}, std::span<const std::size_t>{}));
}

TEST_CASE("mean and population standard deviation") {
  const std::vector<double> v{0.5, 0.7, 0.9};
  const MeanStd m = mean_std(v);
  CHECK(m.mean == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(m.std == doctest::Approx(std::sqrt(0.08 / 3)).epsilon(1e-14));
  const std::vector<double> one{0.3};
  CHECK(mean_std(one).std == 0.0);
}

TEST_CASE("emit writes one row per cell, a TTA row per seed and the summary") {
  ExperimentResult a{1, {{0, 1, 1.0, 4}, {0, 2, 0.5, 4}, {1, 1, 0.75, 4}, {1, 2, 0.75, 4}}, 0.75, {{0, 1, 1, 0.5}}};
  ExperimentResult b = a;
  b.seed = 2;
  b.tta = 0.25;
  const std::vector<ExperimentResult> results{a, b};
  const fs::path dir = fresh_dir("emit");
  const std::vector<fs::path> refs{"checkpoints/seed_1/transcript.jsonl"};
  const MeanStd summary = emit(results, dir, "echo\n", refs);
  CHECK(summary.mean == 0.5);
  CHECK(summary.std == 0.25);
  const auto rows = read_csv(dir / "results.csv");
  REQUIRE(rows.size() == 1 + 2 * 5 + 1);
  const std::string header = std::string(kResultsHeader) + "\n";
  CHECK(slurp(dir / "results.csv").substr(0, header.size()) == header);
  CHECK(rows[1] == std::vector<std::string>{"maa", "1", "0", "1", "1", ""});
  CHECK(rows[5] == std::vector<std::string>{"tta", "1", "", "", "0.75", ""});
  CHECK(rows.back() == std::vector<std::string>{"summary", "", "", "", "0.5", "0.25"});
  CHECK(slurp(dir / "config.echo") == "echo\n");
  CHECK(slurp(dir / "transcripts.txt") == "checkpoints/seed_1/transcript.jsonl\n");
  const auto traj = read_csv(dir / "trajectory.csv");
  CHECK(traj.size() == 3);
  CHECK(traj[1] == std::vector<std::string>{"1", "0", "1", "1", "0.5"});
  CHECK_THROWS(emit(std::span<const ExperimentResult>{}, dir, ""));
}

TEST_CASE("parameter packs round trip and reject corrupt input") {
  std::mt19937_64 rng(51);
  ParameterPack pack{{"a", random_tensor({2, 3}, rng)}, {"b/0", Tensor::scalar(1e-300)}, {"empty", Tensor(Shape{0})}};
  std::stringstream io;
  write_pack(io, pack);
  CHECK(read_pack(io) == pack);
  std::stringstream bad("FSPX");
  CHECK_THROWS(read_pack(bad));
  std::string bytes;
  {
    std::stringstream s;
    write_pack(s, pack);
    bytes = s.str();
  }
  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS(read_pack(truncated));
  CHECK_THROWS(find_array(pack, "missing"));
}

TEST_CASE("task bundles round trip through pack_task") {
  std::mt19937_64 rng(52);
  const ModelConfig config = tiny_model();
  for (Mode mode : {Mode::fedseit, Mode::fedweit}) {
    TaskState task = random_task(config, mode, 3, 2, rng);
    task.task_id = 4;
    task.base_snapshot = random_bank(config, rng);
    task.adaptive_snapshot = random_bank(config, rng);
    task.frozen = true;
    const FilterBank base = random_bank(config, rng);
    FilterBank back;
    const TaskState again = unpack_task(pack_task(base, task), 2, &back);
    CHECK(again == task);
    CHECK(back == base);
  }
}

TEST_CASE("a frozen task evaluates to the oracle's argmax accuracy") {
  std::mt19937_64 rng(53);
  const ModelConfig config = tiny_model(4, 2, {2});
  const TaskState task = random_task(config, Mode::fedseit, 3, 1, rng);
  const FilterBank base = random_bank(config, rng);
  const EmbeddingTable emb({"a", "b", "c"}, random_tensor({3, 4}, rng));
  TaskDataset data;
  data.labels = {"x", "y", "z"};
  for (std::size_t i = 0; i < 12; ++i) data.test.push_back({{std::string(1, char('a' + i % 3)), "b", "c"}, i % 3});
  const auto pred = predict_all(config, Mode::fedseit, base, task, data.test, emb);
  std::size_t right = 0;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const auto logits = oracle_logits(config, Mode::fedseit, base, task, emb.embed(data.test[i].tokens, 2));
    const auto best = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    CHECK(pred[i] == best);
    right += best == data.test[i].label;
  }
  CHECK(test_accuracy(config, Mode::fedseit, base, task, data, emb) == static_cast<double>(right) / 12);
  data.test.clear();
  CHECK_THROWS_AS(test_accuracy(config, Mode::fedseit, base, task, data, emb), DataError);
}

TEST_CASE("config parsing, canonical text and errors") {
  std::istringstream in(
      "# comment\n"
      "clients = 4   # trailing\n"
      "mode = fedweit\n"
      "sit = 2\n"
      "kernel_sizes = 3,4,5\n"
      "seeds = 7\n"
      "train_corpus = data/train.tsv\n"
      "test_corpus = data/test.tsv\n");
  const ExperimentConfig c = parse_config(in, "/base");
  CHECK(c.federation.clients == 4);
  CHECK(c.split.clients == 4);
  CHECK(c.federation.mode == Mode::fedweit);
  CHECK(c.federation.sit.enabled);
  CHECK(c.federation.sit.top_k == 2);
  CHECK(c.federation.model.filter_sizes == std::vector<std::size_t>{3, 4, 5});
  CHECK(c.seeds == std::vector<std::uint64_t>{7});
  CHECK(fs::path(c.train_corpus) == fs::path("/base/data/train.tsv"));
  CHECK(c.embeddings == kSynthetic);

  std::istringstream round(to_text(c));
  const ExperimentConfig again = parse_config(round);
  CHECK(to_text(again) == to_text(c));

  std::istringstream unknown("clients = 2\nbogus = 1\n");
  try {
    parse_config(unknown);
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  std::istringstream bad_number("rounds = many\n");
  CHECK_THROWS_AS(parse_config(bad_number), ConfigError);
  std::istringstream bad_mode("mode = fedavg\n");
  CHECK_THROWS_AS(parse_config(bad_mode), ConfigError);
  std::istringstream no_equals("clients 3\n");
  CHECK_THROWS_AS(parse_config(no_equals), ConfigError);
}

TEST_CASE("experiment: reruns are byte identical, evaluation is idempotent, TTA recomputes from the CSV") {
  const ExperimentConfig config = tiny_experiment();
  const fs::path a = fresh_dir("run_a"), b = fresh_dir("run_b");
  const MeanStd first = run_experiment(config, a);
  run_experiment(config, b);
  for (const char* f : {"results.csv", "trajectory.csv", "config.echo", "transcripts.txt"})
    CHECK(slurp(a / f) == slurp(b / f));

  // C*T maa rows per seed; their mean is the seed's TTA row.
  const auto rows = read_csv(a / "results.csv");
  std::map<std::string, std::vector<double>> maa;
  std::map<std::string, double> tta;
  std::vector<double> ttas;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][0] == "maa") maa[rows[i][1]].push_back(std::stod(rows[i][4]));
    if (rows[i][0] == "tta") {
      tta[rows[i][1]] = std::stod(rows[i][4]);
      ttas.push_back(tta[rows[i][1]]);
    }
  }
  REQUIRE(maa.size() == 2);
  for (const auto& [seed, values] : maa) {
    CHECK(values.size() == 4);
    double s = 0;
    for (double v : values) s += v;
    CHECK(std::abs(s / 4 - tta[seed]) <= 1e-12);
  }
  const MeanStd oracle = mean_std(ttas);
  CHECK(std::abs(first.mean - oracle.mean) <= 1e-12);
  CHECK(std::abs(first.std - oracle.std) <= 1e-12);

  const fs::path c = fresh_dir("eval_c"), d = fresh_dir("eval_d");
  evaluate_checkpoints(a / "checkpoints", c);
  evaluate_checkpoints(a / "checkpoints", d);
  CHECK(slurp(c / "results.csv") == slurp(a / "results.csv"));
  CHECK(slurp(c / "results.csv") == slurp(d / "results.csv"));
  CHECK(slurp(c / "trajectory.csv") == slurp(a / "trajectory.csv"));
  CHECK_THROWS(evaluate_checkpoints(a / "nowhere", c));
}

TEST_CASE("a single well-trained task reaches perfect accuracy on its own training documents") {
  std::mt19937_64 rng(54);
  TaskDataset data;
  data.labels = {"x", "y"};
  data.train = keyword_examples(2, 3, rng);
  data.test = data.train;
  const auto vocab = vocabulary_of_examples(data.train);
  const EmbeddingTable emb = synth_embeddings(vocab, 8, 5);
  TrainConfig train;
  train.learning_rate = 0.5;
  train.batch_size = 6;
  train.epochs_per_round = 300;
  train.lambda1 = 0;
  train.lambda2 = 0;
  const ModelConfig config = tiny_model(8, 4, {2});
  Client client(0, config, train, Mode::fedseit);
  client.begin_task(1, 2, {});
  client.train_round(data, emb, 1);
  client.end_task();
  const TaskBundle bundle{0, client.base(), client.tasks()[0]};
  TaskGrid grid{1, 1, {data}};
  const ExperimentResult r = evaluate_all(config, Mode::fedseit, std::span(&bundle, 1), grid, emb);
  CHECK(r.cells[0].maa == 1.0);
  CHECK(r.tta == 1.0);
}
