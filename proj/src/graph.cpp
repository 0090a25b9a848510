#include "fedseit/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fedseit {

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::span<const Var> parents, Backward fn) {
  bool tracked = std::any_of(parents.begin(), parents.end(), [&](Var p) { return requires_grad(p); });
  nodes_.push_back(Node{std::move(value), {}, tracked, tracked ? std::move(fn) : Backward{}});
  return Var{nodes_.size() - 1};
}

void Graph::truncate(std::size_t count) {
  if (count < nodes_.size()) nodes_.resize(count);
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
}

Tensor* Graph::grad_target(Var v) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

void Graph::accumulate(Var v, const Tensor& delta) {
  if (Tensor* target = grad_target(v)) *target += delta;
}

void Graph::backward(Var root) {
  if (nodes_.at(root.id).value.size() != 1) {
    throw ShapeError("backward root must be scalar, got shape " + to_string(value(root).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  Tensor* seed = grad_target(root);
  if (!seed) return;
  seed->fill(1.0);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    // Parents always precede the node, so its own gradient is final here.
    n.backward(*this, n.grad);
  }
}

namespace kernels {

Tensor conv1d_maxpool(const Tensor& input, const Tensor& filters, std::vector<std::size_t>* argmax) {
  if (input.rank() != 2 || filters.rank() != 3) {
    throw ShapeError("conv1d_maxpool expects input [L, D] and filters [F, D, N], got " +
                     to_string(input.shape()) + " and " + to_string(filters.shape()));
  }
  const std::size_t length = input.dim(0), depth = input.dim(1);
  const std::size_t width = filters.dim(0), count = filters.dim(2);
  if (filters.dim(1) != depth) {
    throw ShapeError("conv1d_maxpool embedding dimension mismatch: input " + to_string(input.shape()) +
                     ", filters " + to_string(filters.shape()));
  }
  if (length < width) {
    throw ShapeError("conv1d_maxpool input length " + std::to_string(length) + " shorter than filter width " +
                     std::to_string(width));
  }
  const std::size_t positions = length - width + 1;
  Tensor out({count}, -std::numeric_limits<double>::infinity());
  if (argmax) argmax->assign(count, 0);
  std::vector<double> acc(count);
  for (std::size_t p = 0; p < positions; ++p) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t f = 0; f < width; ++f) {
      const double* row = &input.data()[(p + f) * depth];
      const double* w = &filters.data()[f * depth * count];
      for (std::size_t d = 0; d < depth; ++d) {
        const double x = row[d];
        const double* wd = w + d * count;
        for (std::size_t j = 0; j < count; ++j) acc[j] += x * wd[j];
      }
    }
    for (std::size_t j = 0; j < count; ++j) {
      if (acc[j] > out[j]) {
        out[j] = acc[j];
        if (argmax) (*argmax)[j] = p;
      }
    }
  }
  return out;
}

Tensor softmax(std::span<const double> logits) {
  Tensor out({logits.size()});
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (auto& v : out.data()) v /= total;
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  const auto top = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  double rest = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != top) rest += std::exp(logits[i] - logits[top]);
  return (logits[top] - logits[label]) + std::log1p(rest);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace kernels

namespace ops {

namespace {

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out = a;
  for (auto& v : out.data()) v = f(v);
  return out;
}

void require_vector(const Tensor& t, const char* what) {
  if (t.rank() != 1) throw ShapeError(std::string(what) + " expects a 1-D tensor, got " + to_string(t.shape()));
}

}  // namespace

Var add(Graph& g, Var a, Var b) {
  Tensor out = g.value(a) + g.value(b);
  Var parents[] = {a, b};
  return g.record(std::move(out), parents, [a, b](Graph& gr, const Tensor& dy) {
    gr.accumulate(a, dy);
    gr.accumulate(b, dy);
  });
}

Var sub(Graph& g, Var a, Var b) {
  Tensor out = g.value(a) - g.value(b);
  Var parents[] = {a, b};
  return g.record(std::move(out), parents, [a, b](Graph& gr, const Tensor& dy) {
    gr.accumulate(a, dy);
    gr.accumulate(b, -1.0 * dy);
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& x = g.value(a);
  const Tensor& y = g.value(b);
  require_same_shape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  Var parents[] = {a, b};
  return g.record(std::move(out), parents, [a, b](Graph& gr, const Tensor& dy) {
    const Tensor& x = gr.value(a);
    const Tensor& y = gr.value(b);
    if (Tensor* ga = gr.grad_target(a))
      for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += dy[i] * y[i];
    if (Tensor* gb = gr.grad_target(b))
      for (std::size_t i = 0; i < dy.size(); ++i) (*gb)[i] += dy[i] * x[i];
  });
}

Var scale(Graph& g, Var a, double factor) {
  Var parents[] = {a};
  return g.record(factor * g.value(a), parents,
                  [a, factor](Graph& gr, const Tensor& dy) { gr.accumulate(a, factor * dy); });
}

Var scale_by(Graph& g, Var a, Var s) {
  const double factor = g.value(s).item();
  Var parents[] = {a, s};
  return g.record(factor * g.value(a), parents, [a, s](Graph& gr, const Tensor& dy) {
    const double factor = gr.value(s).item();
    if (Tensor* ga = gr.grad_target(a))
      for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += factor * dy[i];
    if (Tensor* gs = gr.grad_target(s)) {
      const Tensor& x = gr.value(a);
      double acc = 0.0;
      for (std::size_t i = 0; i < dy.size(); ++i) acc += dy[i] * x[i];
      (*gs)[0] += acc;
    }
  });
}

Var element(Graph& g, Var v, std::size_t index) {
  const Tensor& x = g.value(v);
  if (index >= x.size()) {
    throw ShapeError("element index " + std::to_string(index) + " out of range for " + to_string(x.shape()));
  }
  Var parents[] = {v};
  return g.record(Tensor::scalar(x[index]), parents, [v, index](Graph& gr, const Tensor& dy) {
    if (Tensor* gv = gr.grad_target(v)) (*gv)[index] += dy[0];
  });
}

Var mul_const(Graph& g, Var a, const Tensor& factor) {
  const Tensor& x = g.value(a);
  require_same_shape(x, factor, "mul_const");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  Var parents[] = {a};
  return g.record(std::move(out), parents, [a, factor](Graph& gr, const Tensor& dy) {
    if (Tensor* ga = gr.grad_target(a))
      for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += dy[i] * factor[i];
  });
}

Var relu(Graph& g, Var a) {
  Var parents[] = {a};
  return g.record(map(g.value(a), [](double v) { return v > 0.0 ? v : 0.0; }), parents,
                  [a](Graph& gr, const Tensor& dy) {
                    const Tensor& x = gr.value(a);
                    if (Tensor* ga = gr.grad_target(a))
                      for (std::size_t i = 0; i < dy.size(); ++i)
                        if (x[i] > 0.0) (*ga)[i] += dy[i];
                  });
}

Var sigmoid(Graph& g, Var a) {
  Tensor out = map(g.value(a), kernels::sigmoid);
  Var parents[] = {a};
  return g.record(out, parents, [a, out](Graph& gr, const Tensor& dy) {
    if (Tensor* ga = gr.grad_target(a))
      for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += dy[i] * out[i] * (1.0 - out[i]);
  });
}

Var mask_filters(Graph& g, Var filters, Var mask) {
  const Tensor& w = g.value(filters);
  const Tensor& m = g.value(mask);
  if (w.rank() != 3 || m.rank() != 1 || m.dim(0) != w.dim(2)) {
    throw ShapeError("mask_filters expects filters [F, D, N] and mask [N], got " + to_string(w.shape()) +
                     " and " + to_string(m.shape()));
  }
  const std::size_t count = w.dim(2);
  Tensor out = w;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i % count];
  Var parents[] = {filters, mask};
  return g.record(std::move(out), parents, [filters, mask, count](Graph& gr, const Tensor& dy) {
    const Tensor& w = gr.value(filters);
    const Tensor& m = gr.value(mask);
    if (Tensor* gw = gr.grad_target(filters))
      for (std::size_t i = 0; i < dy.size(); ++i) (*gw)[i] += dy[i] * m[i % count];
    if (Tensor* gm = gr.grad_target(mask))
      for (std::size_t i = 0; i < dy.size(); ++i) (*gm)[i % count] += dy[i] * w[i];
  });
}

Var conv1d_maxpool(Graph& g, Var input, Var filters) {
  std::vector<std::size_t> argmax;
  Tensor out = kernels::conv1d_maxpool(g.value(input), g.value(filters), &argmax);
  Var parents[] = {input, filters};
  return g.record(std::move(out), parents,
                  [input, filters, argmax = std::move(argmax)](Graph& gr, const Tensor& dy) {
                    const Tensor& x = gr.value(input);
                    const Tensor& w = gr.value(filters);
                    const std::size_t depth = x.dim(1), width = w.dim(0), count = w.dim(2);
                    Tensor* gx = gr.grad_target(input);
                    Tensor* gw = gr.grad_target(filters);
                    for (std::size_t j = 0; j < count; ++j) {
                      const double d = dy[j];
                      if (d == 0.0) continue;
                      const std::size_t p = argmax[j];
                      for (std::size_t f = 0; f < width; ++f) {
                        for (std::size_t k = 0; k < depth; ++k) {
                          if (gw) gw->at(f, k, j) += d * x.at(p + f, k);
                          if (gx) gx->at(p + f, k) += d * w.at(f, k, j);
                        }
                      }
                    }
                  });
}

Var affine(Graph& g, Var input, Var weights) {
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(weights);
  require_vector(x, "affine");
  if (w.rank() != 2 || w.dim(0) != x.dim(0)) {
    throw ShapeError("affine input " + to_string(x.shape()) + " incompatible with weights " +
                     to_string(w.shape()));
  }
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  Tensor out({cols});
  for (std::size_t i = 0; i < rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < cols; ++j) out[j] += xi * w.at(i, j);
  }
  Var parents[] = {input, weights};
  return g.record(std::move(out), parents, [input, weights](Graph& gr, const Tensor& dy) {
    const Tensor& x = gr.value(input);
    const Tensor& w = gr.value(weights);
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    if (Tensor* gx = gr.grad_target(input))
      for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += w.at(i, j) * dy[j];
        (*gx)[i] += acc;
      }
    if (Tensor* gw = gr.grad_target(weights))
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gw->at(i, j) += x[i] * dy[j];
  });
}

Var concat(Graph& g, std::span<const Var> parts) {
  std::vector<double> joined;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    const Tensor& t = g.value(p);
    require_vector(t, "concat");
    offsets.push_back(joined.size());
    joined.insert(joined.end(), t.data().begin(), t.data().end());
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return g.record(Tensor::vector(std::move(joined)), parts,
                  [owned, offsets](Graph& gr, const Tensor& dy) {
                    for (std::size_t k = 0; k < owned.size(); ++k) {
                      Tensor* gp = gr.grad_target(owned[k]);
                      if (!gp) continue;
                      for (std::size_t i = 0; i < gp->size(); ++i) (*gp)[i] += dy[offsets[k] + i];
                    }
                  });
}

Var softmax_cross_entropy(Graph& g, Var logits, std::size_t label) {
  const Tensor& z = g.value(logits);
  require_vector(z, "softmax_cross_entropy");
  if (label >= z.size()) {
    throw std::out_of_range("label " + std::to_string(label) + " out of range for " + std::to_string(z.size()) +
                            " logits");
  }
  Tensor probs = kernels::softmax(z.data());
  const double loss = kernels::cross_entropy(z.data(), label);
  Var parents[] = {logits};
  return g.record(Tensor::scalar(loss), parents,
                  [logits, label, probs = std::move(probs)](Graph& gr, const Tensor& dy) {
                    if (Tensor* gz = gr.grad_target(logits)) {
                      for (std::size_t i = 0; i < probs.size(); ++i)
                        (*gz)[i] += dy[0] * (probs[i] - (i == label ? 1.0 : 0.0));
                    }
                  });
}

Var sum(Graph& g, Var a) {
  double s = 0.0;
  for (double v : g.value(a).data()) s += v;
  Var parents[] = {a};
  return g.record(Tensor::scalar(s), parents, [a](Graph& gr, const Tensor& dy) {
    if (Tensor* ga = gr.grad_target(a))
      for (auto& v : ga->data()) v += dy[0];
  });
}

Var l1(Graph& g, Var a) {
  Var parents[] = {a};
  return g.record(Tensor::scalar(sum_abs(g.value(a))), parents, [a](Graph& gr, const Tensor& dy) {
    const Tensor& x = gr.value(a);
    if (Tensor* ga = gr.grad_target(a))
      for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += dy[0] * ((x[i] > 0.0) - (x[i] < 0.0));
  });
}

Var squared_l2(Graph& g, Var a) {
  Var parents[] = {a};
  return g.record(Tensor::scalar(sum_squares(g.value(a))), parents, [a](Graph& gr, const Tensor& dy) {
    const Tensor& x = gr.value(a);
    if (Tensor* ga = gr.grad_target(a))
      for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += 2.0 * dy[0] * x[i];
  });
}

}  // namespace ops

}  // namespace fedseit
