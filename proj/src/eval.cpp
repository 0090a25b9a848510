#include "fedseit/eval.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fedseit {

double micro_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> truths) {
  if (predictions.size() != truths.size()) {
    throw std::invalid_argument("micro_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(truths.size()) + " labels");
  }
  if (predictions.empty()) throw std::invalid_argument("micro_accuracy: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::vector<std::size_t> predict_all(const ModelConfig& config, Mode mode, const FilterBank& base,
                                     const TaskState& task, std::span<const Example> examples,
                                     const EmbeddingTable& embeddings) {
  Predictor predictor(config, mode, base, task);
  std::vector<std::size_t> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(predictor.predict(embeddings.embed(ex.tokens, config.max_filter_size())));
  return out;
}

double test_accuracy(const ModelConfig& config, Mode mode, const FilterBank& base, const TaskState& task,
                     const TaskDataset& dataset, const EmbeddingTable& embeddings) {
  if (dataset.test.empty()) {
    throw DataError("client " + std::to_string(dataset.client_id) + " task " + std::to_string(dataset.task_id) +
                    " has no test documents");
  }
  if (task.num_labels != dataset.labels.size()) {
    throw ShapeError("task head has " + std::to_string(task.num_labels) + " labels, dataset has " +
                     std::to_string(dataset.labels.size()));
  }
  const auto predictions = predict_all(config, mode, base, task, dataset.test, embeddings);
  std::vector<std::size_t> truths;
  truths.reserve(dataset.test.size());
  for (const auto& ex : dataset.test) truths.push_back(ex.label);
  return micro_accuracy(predictions, truths);
}

ExperimentResult evaluate_all(const ModelConfig& config, Mode mode, std::span<const TaskBundle> bundles,
                              const TaskGrid& grid, const EmbeddingTable& embeddings) {
  if (bundles.size() != grid.cells.size()) {
    throw std::invalid_argument("evaluate_all: " + std::to_string(bundles.size()) + " bundles for " +
                                std::to_string(grid.cells.size()) + " task cells");
  }
  ExperimentResult result;
  double total = 0.0;
  for (const auto& bundle : bundles) {
    if (!bundle.task.frozen) {
      throw std::invalid_argument("evaluate_all: client " + std::to_string(bundle.client_id) + " task " +
                                  std::to_string(bundle.task.task_id) + " is not frozen");
    }
    if (bundle.client_id < 0 || static_cast<std::size_t>(bundle.client_id) >= grid.clients || bundle.task.task_id < 1 ||
        static_cast<std::size_t>(bundle.task.task_id) > grid.tasks) {
      throw std::invalid_argument("evaluate_all: bundle for client " + std::to_string(bundle.client_id) + " task " +
                                  std::to_string(bundle.task.task_id) + " lies outside the task grid");
    }
    const TaskDataset& cell = grid.at(static_cast<std::size_t>(bundle.client_id),
                                      static_cast<std::size_t>(bundle.task.task_id - 1));
    const double maa = test_accuracy(config, mode, bundle.base, bundle.task, cell, embeddings);
    result.cells.push_back({bundle.client_id, bundle.task.task_id, maa, cell.test.size()});
    total += maa;
  }
  result.tta = result.cells.empty() ? 0.0 : total / static_cast<double>(result.cells.size());
  return result;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_std: no values");
  MeanStd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

MeanStd emit(std::span<const ExperimentResult> results, const std::filesystem::path& out_dir,
             const std::string& config_echo, std::span<const std::filesystem::path> transcripts) {
  if (results.empty()) throw std::invalid_argument("emit: no results");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<double> ttas;
  const auto results_path = out_dir / "results.csv";
  auto csv = open_output(results_path);
  csv << kResultsHeader << '\n';
  for (const auto& r : results) {
    for (const auto& cell : r.cells) {
      csv << "maa," << r.seed << ',' << cell.client_id << ',' << cell.task_id << ',' << number(cell.maa) << ",\n";
    }
    csv << "tta," << r.seed << ",,," << number(r.tta) << ",\n";
    ttas.push_back(r.tta);
  }
  const MeanStd summary = mean_std(ttas);
  csv << "summary,,,," << number(summary.mean) << ',' << number(summary.std) << '\n';
  finish(csv, results_path);

  const auto trajectory_path = out_dir / "trajectory.csv";
  auto traj = open_output(trajectory_path);
  traj << kTrajectoryHeader << '\n';
  for (const auto& r : results) {
    for (const auto& p : r.trajectory) {
      traj << r.seed << ',' << p.client_id << ',' << p.task_id << ',' << p.round << ',' << number(p.accuracy) << '\n';
    }
  }
  finish(traj, trajectory_path);

  const auto echo_path = out_dir / "config.echo";
  auto echo = open_output(echo_path);
  echo << config_echo;
  finish(echo, echo_path);

  const auto ref_path = out_dir / "transcripts.txt";
  auto refs = open_output(ref_path);
  for (const auto& p : transcripts) refs << p.generic_string() << '\n';
  finish(refs, ref_path);
  return summary;
}

}  // namespace fedseit
