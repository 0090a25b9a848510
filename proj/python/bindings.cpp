#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "fedseit/config.hpp"
#include "fedseit/experiment.hpp"
#include "fedseit/graph.hpp"
#include "fedseit/server.hpp"
#include "fedseit/summary.hpp"

namespace py = pybind11;
using namespace fedseit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<Tensor> to_tensors(const std::vector<Array>& arrays) {
  std::vector<Tensor> out;
  for (const auto& a : arrays) out.push_back(to_tensor(a));
  return out;
}

std::vector<Array> to_arrays(const std::vector<Tensor>& tensors) {
  std::vector<Array> out;
  for (const auto& t : tensors) out.push_back(to_array(t));
  return out;
}

py::dict summary_dict(const MeanStd& m) {
  py::dict d;
  d["mean"] = m.mean;
  d["std"] = m.std;
  return d;
}

py::list messages(const Transcript& transcript) {
  py::list out;
  for (const auto& m : transcript.messages) {
    py::dict d;
    d["kind"] = to_string(m.kind);
    d["sender"] = m.sender;
    d["receiver"] = m.receiver;
    d["task"] = m.task;
    d["round"] = m.round;
    py::dict payload;
    for (const auto& entry : m.payload) payload[py::str(entry.name)] = to_array(entry.value);
    d["payload"] = payload;
    out.append(d);
  }
  return out;
}

py::list cells(const TaskGrid& grid) {
  auto examples = [](const std::vector<Example>& list) {
    py::list out;
    for (const auto& e : list) out.append(py::make_tuple(e.tokens, e.label));
    return out;
  };
  py::list out;
  for (const auto& cell : grid.cells) {
    py::dict d;
    d["client"] = cell.client_id;
    d["task"] = cell.task_id;
    d["labels"] = cell.labels;
    d["train"] = examples(cell.train);
    d["valid"] = examples(cell.valid);
    d["test"] = examples(cell.test);
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_fedseit, m) {
  m.doc() = "Federated continual text classification with selective inter-client transfer.";

  m.def("tokenize", &tokenize, py::arg("text"));

  m.def(
      "conv1d_maxpool", [](const Array& input, const Array& filters) {
        return to_array(kernels::conv1d_maxpool(to_tensor(input), to_tensor(filters)));
      },
      py::arg("input"), py::arg("filters"), "Valid 1-d convolution followed by max-over-time pooling.");

  m.def(
      "compose",
      [](const std::vector<Array>& base, const std::vector<Array>& mask, const std::vector<Array>& adaptive) {
        return to_arrays(compose(to_tensors(base), to_tensors(mask), to_tensors(adaptive)));
      },
      py::arg("base"), py::arg("mask"), py::arg("adaptive"), "base * mask + adaptive, per filter size.");

  m.def(
      "aggregate",
      [](const std::vector<std::vector<Array>>& inputs) {
        std::vector<std::vector<Tensor>> lists;
        for (const auto& l : inputs) lists.push_back(to_tensors(l));
        return to_arrays(aggregate(lists));
      },
      py::arg("inputs"), "Elementwise mean of equally shaped lists of arrays.");

  m.def(
      "score_overlap", [](const Array& query, const Array& candidate) {
        return score_overlap(TaskSummary{to_tensor(query)}, TaskSummary{to_tensor(candidate)});
      },
      py::arg("query"), py::arg("candidate"));

  m.def(
      "select_top_k",
      [](int requester, const Array& query, const std::vector<std::tuple<int, int, Array>>& candidates, std::size_t k) {
        AdapterRegistry registry;
        for (const auto& [client, task, centers] : candidates) {
          registry.store({client, task, {}, TaskSummary{to_tensor(centers)}});
        }
        py::list out;
        for (const auto& s : rank_candidates(requester, TaskSummary{to_tensor(query)}, registry, k)) {
          out.append(py::make_tuple(s.client_id, s.task_id, s.score));
        }
        return out;
      },
      py::arg("requester"), py::arg("query"), py::arg("candidates"), py::arg("k"),
      "Ranks (client, task, centers) candidates against a query summary; returns (client, task, score).");

  m.def(
      "kmeans",
      [](const Array& points, std::size_t k, std::uint64_t seed) {
        if (points.ndim() != 2) throw std::invalid_argument("points must be a 2-d array");
        std::vector<std::vector<double>> rows;
        for (py::ssize_t i = 0; i < points.shape(0); ++i)
          rows.emplace_back(points.data(i, 0), points.data(i, 0) + points.shape(1));
        return to_array(kmeans(rows, k, KMeansOptions{100, 1e-6, seed}));
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "micro_accuracy",
      [](const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& truths) {
        return micro_accuracy(predictions, truths);
      },
      py::arg("predictions"), py::arg("truths"));

  m.def(
      "split",
      [](const std::filesystem::path& train, const std::filesystem::path& test, std::size_t clients, std::size_t tasks,
         std::size_t labels_per_task, std::uint64_t seed, double valid_fraction) {
        return cells(non_iid_split(load_corpus(train), load_corpus(test),
                                   SplitConfig{clients, tasks, labels_per_task, seed, valid_fraction}));
      },
      py::arg("train"), py::arg("test"), py::arg("clients"), py::arg("tasks"), py::arg("labels_per_task"),
      py::arg("seed") = 42, py::arg("valid_fraction") = 0.1, "Non-iid task split of two label<TAB>text corpora.");

  m.def(
      "canonical_config", [](const std::filesystem::path& path) { return to_text(load_config(path)); },
      py::arg("path"), "Parses a config file and returns its canonical text.");

  m.def(
      "run_experiment",
      [](const std::filesystem::path& config, const std::filesystem::path& out_dir) {
        const ExperimentConfig parsed = load_config(config);
        MeanStd result;
        {
          py::gil_scoped_release release;
          result = run_experiment(parsed, out_dir);
        }
        return summary_dict(result);
      },
      py::arg("config"), py::arg("out_dir"), "Runs every seed of a config file; returns the TTA mean and std.");

  m.def(
      "run_experiment_text",
      [](const std::string& text, const std::filesystem::path& out_dir) {
        std::istringstream in(text);
        const ExperimentConfig parsed = parse_config(in);
        MeanStd result;
        {
          py::gil_scoped_release release;
          result = run_experiment(parsed, out_dir);
        }
        return summary_dict(result);
      },
      py::arg("text"), py::arg("out_dir"));

  m.def(
      "evaluate_checkpoints",
      [](const std::filesystem::path& checkpoints, const std::filesystem::path& out_dir) {
        return summary_dict(evaluate_checkpoints(checkpoints, out_dir));
      },
      py::arg("checkpoints"), py::arg("out_dir"));

  m.def(
      "read_transcript", [](const std::filesystem::path& path) { return messages(Transcript::load(path)); },
      py::arg("path"), "Messages of a transcript.jsonl file as dicts.");

  m.def(
      "replay_global",
      [](const std::filesystem::path& path) {
        py::list out;
        for (const auto& g : replay_global(Transcript::load(path))) out.append(to_arrays(g));
        return out;
      },
      py::arg("path"), "Global parameter after every round, recomputed from the BaseUp messages.");

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
}
