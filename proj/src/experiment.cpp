#include "fedseit/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedseit/param_io.hpp"

namespace fedseit {

namespace {

namespace fs = std::filesystem;

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string bundle_name(int client, int task) {
  return "client" + std::to_string(client) + "_task" + std::to_string(task) + ".bin";
}

void save_trajectory(const std::vector<TrajectoryPoint>& points, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "client,task,round,accuracy\n";
  char buf[32];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g", p.accuracy);
    out << p.client_id << ',' << p.task_id << ',' << p.round << ',' << buf << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<TrajectoryPoint> load_trajectory(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<TrajectoryPoint> points;
  std::string line;
  std::getline(in, line);
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    TrajectoryPoint p;
    char comma[3];
    std::istringstream row(line);
    std::string accuracy;
    if (!(row >> p.client_id >> comma[0] >> p.task_id >> comma[1] >> p.round >> comma[2]) ||
        !std::getline(row, accuracy)) {
      throw std::runtime_error(path.string() + " line " + std::to_string(number) + ": malformed row");
    }
    p.accuracy = std::strtod(accuracy.c_str(), nullptr);
    points.push_back(p);
  }
  return points;
}

}  // namespace

Workspace prepare(const ExperimentConfig& config) {
  config.validate();
  Workspace ws;
  if (config.train_corpus == kSynthetic) {
    auto corpus = synthetic_corpus(config.synthetic);
    ws.train = std::move(corpus.train);
    ws.test = std::move(corpus.test);
  } else {
    ws.train = load_corpus(config.train_corpus);
    ws.test = load_corpus(config.test_corpus);
  }
  const std::size_t dim = config.federation.model.embedding_dim;
  if (config.embeddings == kSynthetic) {
    const Corpus* corpora[] = {&ws.train, &ws.test};
    ws.embeddings = synth_embeddings(vocabulary_of(corpora), dim, config.embedding_seed);
  } else {
    ws.embeddings = load_embeddings(config.embeddings, dim);
  }
  SplitConfig split = config.split;
  split.clients = config.federation.clients;
  split.tasks = config.federation.tasks;
  ws.grid = non_iid_split(ws.train, ws.test, split);
  return ws;
}

std::vector<TaskBundle> bundles_of(const FederationResult& federation) {
  std::vector<TaskBundle> bundles;
  for (const auto& client : federation.clients) {
    for (const auto& task : client.tasks()) bundles.push_back({client.id(), client.base(), task});
  }
  return bundles;
}

SeedRun run_seed(const ExperimentConfig& config, const Workspace& workspace, std::uint64_t seed) {
  SeedRun out;
  out.seed = seed;
  out.grid = reorder_tasks(workspace.grid, seed);
  FederationConfig fed = config.federation;
  fed.train.seed = seed;
  out.federation = run(fed, out.grid, workspace.embeddings);
  const auto bundles = bundles_of(out.federation);
  out.result = evaluate_all(fed.model, fed.mode, bundles, out.grid, workspace.embeddings);
  out.result.seed = seed;
  out.result.trajectory = out.federation.trajectory;
  return out;
}

MeanStd run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  const Workspace ws = prepare(config);
  const fs::path checkpoints = out_dir / "checkpoints";
  fs::create_directories(checkpoints);
  const std::string echo = to_text(config);
  {
    std::ofstream out(checkpoints / "config.echo", std::ios::binary);
    out << echo;
    if (!out) throw std::runtime_error("cannot write " + (checkpoints / "config.echo").string());
  }
  ws.embeddings.save(checkpoints / "embeddings.txt");

  std::vector<ExperimentResult> results;
  std::vector<fs::path> transcripts;
  for (std::uint64_t seed : config.seeds) {
    SeedRun run = run_seed(config, ws, seed);
    const fs::path dir = checkpoints / seed_dir(seed);
    fs::create_directories(dir);
    save_grid(run.grid, dir);
    for (const auto& bundle : bundles_of(run.federation)) {
      save_pack(dir / bundle_name(bundle.client_id, bundle.task.task_id), pack_task(bundle.base, bundle.task));
    }
    run.federation.transcript.save(dir / "transcript.jsonl");
    run.federation.registry.save(dir / "registry.bin");
    save_trajectory(run.result.trajectory, dir / "trajectory.csv");
    transcripts.push_back(fs::path("checkpoints") / seed_dir(seed) / "transcript.jsonl");
    results.push_back(std::move(run.result));
  }
  return emit(results, out_dir, echo, transcripts);
}

MeanStd evaluate_checkpoints(const fs::path& checkpoints, const fs::path& out_dir) {
  if (!fs::is_directory(checkpoints)) throw std::runtime_error("no checkpoint directory at " + checkpoints.string());
  std::ifstream echo_in(checkpoints / "config.echo");
  if (!echo_in) throw std::runtime_error("missing " + (checkpoints / "config.echo").string());
  std::stringstream echo;
  echo << echo_in.rdbuf();
  std::istringstream parse_in(echo.str());
  const ExperimentConfig config = parse_config(parse_in);
  const auto& model = config.federation.model;
  const EmbeddingTable embeddings = load_embeddings(checkpoints / "embeddings.txt", model.embedding_dim);

  std::vector<ExperimentResult> results;
  std::vector<fs::path> transcripts;
  for (std::uint64_t seed : config.seeds) {
    const fs::path dir = checkpoints / seed_dir(seed);
    const TaskGrid grid = load_grid(dir);
    std::vector<TaskBundle> bundles;
    for (std::size_t c = 0; c < grid.clients; ++c) {
      for (std::size_t t = 1; t <= grid.tasks; ++t) {
        const fs::path file = dir / bundle_name(static_cast<int>(c), static_cast<int>(t));
        if (!fs::exists(file)) throw std::runtime_error("missing task bundle " + file.string());
        TaskBundle bundle;
        bundle.client_id = static_cast<int>(c);
        bundle.task = unpack_task(load_pack(file), model.filter_sizes.size(), &bundle.base);
        bundles.push_back(std::move(bundle));
      }
    }
    ExperimentResult result = evaluate_all(model, config.federation.mode, bundles, grid, embeddings);
    result.seed = seed;
    if (fs::exists(dir / "trajectory.csv")) result.trajectory = load_trajectory(dir / "trajectory.csv");
    transcripts.push_back(fs::path("checkpoints") / seed_dir(seed) / "transcript.jsonl");
    results.push_back(std::move(result));
  }
  return emit(results, out_dir, echo.str(), transcripts);
}

}  // namespace fedseit
