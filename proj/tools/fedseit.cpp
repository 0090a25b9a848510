// Command-line entry point: run, eval and split.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedseit/config.hpp"
#include "fedseit/data.hpp"
#include "fedseit/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using namespace fedseit;

struct RunArgs {
  std::string config;
  std::string mode;
  std::string sit;
  std::optional<double> lambda2;
  std::vector<std::uint64_t> seeds;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct EvalArgs {
  std::string checkpoints;
  std::string out;
};

struct SplitArgs {
  std::string corpus;
  std::string test_corpus;
  std::size_t clients = 3;
  std::size_t tasks = 5;
  std::size_t labels_per_task = 4;
  std::uint64_t seed = 42;
  std::string out;
};

void print_summary(const MeanStd& s, const fs::path& out) {
  std::printf("TTA %.4f +- %.4f (results in %s)\n", s.mean, s.std, out.string().c_str());
}

void do_run(const RunArgs& args) {
  ExperimentConfig config = load_config(args.config);
  if (!args.mode.empty()) config.federation.mode = parse_mode(args.mode);
  if (!args.sit.empty()) {
    config.federation.sit.enabled = args.sit != "off";
    if (config.federation.sit.enabled) {
      std::size_t k = 0;
      try {
        std::size_t used = 0;
        k = std::stoul(args.sit, &used);
        if (used != args.sit.size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw std::invalid_argument("--sit expects 'off' or a positive K, got '" + args.sit + "'");
      }
      config.federation.sit.top_k = k;
    }
  }
  if (args.lambda2) config.federation.train.lambda2 = *args.lambda2;
  if (!args.seeds.empty()) config.seeds = args.seeds;
  if (args.seed) config.seeds = {*args.seed};
  config.validate();
  print_summary(run_experiment(config, args.out), args.out);
}

void do_split(const SplitArgs& args) {
  const Corpus train = load_corpus(args.corpus);
  const Corpus test = args.test_corpus.empty() ? Corpus{} : load_corpus(args.test_corpus);
  SplitConfig cfg;
  cfg.clients = args.clients;
  cfg.tasks = args.tasks;
  cfg.labels_per_task = args.labels_per_task;
  cfg.seed = args.seed;
  const TaskGrid grid = non_iid_split(train, test, cfg);
  save_grid(grid, args.out);
  std::printf("wrote %zu x %zu task grid to %s\n", grid.clients, grid.tasks, args.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated continual learning with selective inter-client transfer"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "train every seed of an experiment and write results");
  run->add_option("--config", run_args.config, "experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("--mode", run_args.mode, "fedseit, fedweit or fedseit-dls");
  run->add_option("--sit", run_args.sit, "selective transfer: off or K");
  run->add_option("--lambda2", run_args.lambda2, "drift penalty weight");
  run->add_option("--seeds", run_args.seeds, "comma separated seeds")->delimiter(',');
  run->add_option("--seed", run_args.seed, "single seed");
  run->add_option("--out", run_args.out, "output directory")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "re-evaluate saved checkpoints");
  eval->add_option("--checkpoints", eval_args.checkpoints, "checkpoint directory")->required();
  eval->add_option("--out", eval_args.out, "output directory")->required();

  SplitArgs split_args;
  auto* split = app.add_subcommand("split", "build the non-iid task grid of a corpus");
  split->add_option("--corpus", split_args.corpus, "training corpus (label<TAB>text)")->required()->check(CLI::ExistingFile);
  split->add_option("--test-corpus", split_args.test_corpus, "test corpus")->check(CLI::ExistingFile);
  split->add_option("--clients", split_args.clients, "number of clients")->check(CLI::PositiveNumber);
  split->add_option("--tasks", split_args.tasks, "tasks per client")->check(CLI::PositiveNumber);
  split->add_option("--labels-per-task", split_args.labels_per_task, "labels per task")->check(CLI::PositiveNumber);
  split->add_option("--seed", split_args.seed, "split seed");
  split->add_option("--out", split_args.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (*run) do_run(run_args);
    if (*eval) print_summary(evaluate_checkpoints(eval_args.checkpoints, eval_args.out), eval_args.out);
    if (*split) do_split(split_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
