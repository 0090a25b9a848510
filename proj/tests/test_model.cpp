#include <doctest.h>

#include <cmath>
#include <random>

#include "fedseit/model.hpp"
#include "support.hpp"

using namespace fedseit;
using namespace fedseit::testing;

namespace {

Tensor logits_of(const ModelConfig& config, Mode mode, const FilterBank& base, const TaskState& task,
                 const Tensor& doc) {
  Predictor p(config, mode, base, task);
  return p.logits(doc);
}

std::vector<Tensor> sigmoid_masks(const TaskState& task) {
  std::vector<Tensor> out;
  for (const auto& m : task.mask_logits) out.push_back(effective_mask(m));
  return out;
}

}  // namespace

TEST_CASE("model config defaults and validation") {
  ModelConfig c;
  CHECK(c.z_dim() == 384);
  CHECK(c.max_filter_size() == 5);
  CHECK_NOTHROW(c.validate());
  c.dropout = 1.0;
  CHECK_THROWS(c.validate());
  c.dropout = 0.3;
  c.filter_sizes = {3, 0};
  CHECK_THROWS(c.validate());
}

TEST_CASE("mode names round trip") {
  for (Mode m : {Mode::fedseit, Mode::fedweit, Mode::fedseit_dls}) CHECK(parse_mode(to_string(m)) == m);
  CHECK(parse_mode("fedseit+dls") == Mode::fedseit_dls);
  CHECK_THROWS_AS(parse_mode("fedprox"), std::invalid_argument);
}

TEST_CASE("effective mask values") {
  CHECK(effective_mask(Tensor::vector({0.0}))[0] == 0.5);
  CHECK(std::abs(effective_mask(Tensor::vector({20.0}))[0] - 1.0) < 1e-8);
  const Tensor m = effective_mask(Tensor::vector({-2.0, 2.0}));
  CHECK(m[0] == doctest::Approx(0.11920292202211755).epsilon(1e-15));
  CHECK(m[1] == doctest::Approx(0.8807970779778823).epsilon(1e-15));
  CHECK(effective_mask(Tensor::vector({-800.0}))[0] >= 0.0);
}

TEST_CASE("compose identities and elementwise oracle") {
  const ModelConfig config = tiny_model(2, 2, {2});
  std::mt19937_64 rng(17);
  const FilterBank base = random_bank(config, rng);
  const FilterBank adaptive = random_bank(config, rng);
  const FilterBank zeros = zero_filters(config);
  const std::vector<Tensor> ones = {Tensor({2}, 1.0)};
  CHECK(compose(base, ones, zeros) == base);
  CHECK(compose(zeros, {random_tensor({2}, rng, 0, 1)}, adaptive) == adaptive);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<Tensor> mask = {random_tensor({2}, rng, 0, 1)};
    const FilterBank theta = compose(base, mask, adaptive);
    CHECK(max_abs_diff(theta[0], naive_compose(base[0], mask[0], adaptive[0])) <= 1e-15);
  }
  CHECK_THROWS_AS(compose(base, {Tensor({3})}, adaptive), ShapeError);
}

TEST_CASE("fedseit forward matches the straight-line oracle") {
  std::mt19937_64 rng(99);
  const ModelConfig config = tiny_model(4, 2, {2, 3});
  for (int trial = 0; trial < 10; ++trial) {
    const FilterBank base = random_bank(config, rng);
    const TaskState task = random_task(config, Mode::fedseit, 3, 2, rng);
    const Tensor doc = random_tensor({6, 4}, rng);
    const Tensor got = logits_of(config, Mode::fedseit, base, task, doc);
    const auto want = oracle_logits(config, Mode::fedseit, base, task, doc);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(got[k] - want[k]) <= 1e-10);
  }
}

TEST_CASE("fedweit forward matches the additive-composition oracle") {
  std::mt19937_64 rng(98);
  const ModelConfig config = tiny_model(4, 2, {2, 3});
  for (int trial = 0; trial < 10; ++trial) {
    const FilterBank base = random_bank(config, rng);
    const TaskState task = random_task(config, Mode::fedweit, 3, 2, rng);
    const Tensor doc = random_tensor({6, 4}, rng);
    const Tensor got = logits_of(config, Mode::fedweit, base, task, doc);
    const auto want = oracle_logits(config, Mode::fedweit, base, task, doc);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(got[k] - want[k]) <= 1e-10);
  }
}

TEST_CASE("zero foreign filters with identity projections reduce logits to z_c") {
  std::mt19937_64 rng(5);
  const ModelConfig config = tiny_model(4, 2, {2, 3});
  const std::size_t z = config.z_dim();
  const FilterBank base = random_bank(config, rng);
  TaskState task = random_task(config, Mode::fedseit, z, 2, rng);
  for (auto& f : task.foreign) f.filters = zero_filters(config);
  task.combine_projection = Tensor({2 * z, z});
  for (std::size_t i = 0; i < z; ++i) task.combine_projection.data()[i * z + i] = 1.0;
  task.head = Tensor({z, z});
  for (std::size_t i = 0; i < z; ++i) task.head.data()[i * z + i] = 1.0;
  const Tensor doc = random_tensor({5, 4}, rng);

  std::vector<double> zc;
  const FilterBank theta = compose(base, sigmoid_masks(task), task.adaptive);
  for (const auto& f : theta) {
    const auto part = naive_conv(doc, f);
    zc.insert(zc.end(), part.begin(), part.end());
  }
  zc = relu(zc);
  const Tensor got = logits_of(config, Mode::fedseit, base, task, doc);
  for (std::size_t k = 0; k < z; ++k) CHECK(std::abs(got[k] - zc[k]) <= 1e-12);
}

TEST_CASE("a foreign adapter equal to the local filters reproduces z_c") {
  std::mt19937_64 rng(6);
  const ModelConfig config = tiny_model(4, 2, {2, 3});
  const std::size_t z = config.z_dim();
  const FilterBank base = random_bank(config, rng);
  TaskState task = random_task(config, Mode::fedseit, 2, 1, rng);
  task.foreign[0].filters = compose(base, sigmoid_masks(task), task.adaptive);
  task.attention = Tensor::vector({1.0});
  // Route z_c to the first z outputs and z_f = z_hat_1 to the next z.
  task.foreign_projection = Tensor({z, z});
  for (std::size_t i = 0; i < z; ++i) task.foreign_projection.data()[i * z + i] = 1.0;
  const Tensor doc = random_tensor({5, 4}, rng);
  // Read z_c and z_f separately through W_c blocks that copy one half.
  TaskState left = task, right = task;
  left.combine_projection = Tensor({2 * z, z});
  right.combine_projection = Tensor({2 * z, z});
  for (std::size_t i = 0; i < z; ++i) {
    left.combine_projection.data()[i * z + i] = 1.0;
    right.combine_projection.data()[(z + i) * z + i] = 1.0;
  }
  left.head = right.head = Tensor({z, z});
  for (std::size_t i = 0; i < z; ++i) left.head.data()[i * z + i] = right.head.data()[i * z + i] = 1.0;
  const Tensor zc = logits_of(config, Mode::fedseit, base, left, doc);
  const Tensor zf = logits_of(config, Mode::fedseit, base, right, doc);
  for (std::size_t k = 0; k < z; ++k) CHECK(std::abs(zc[k] - zf[k]) <= 1e-12);
}

TEST_CASE("fedweit: zero attention equals the local model; lone foreign replaces theta") {
  std::mt19937_64 rng(8);
  const ModelConfig config = tiny_model(4, 3, {2});
  const FilterBank base = random_bank(config, rng);
  TaskState task = random_task(config, Mode::fedweit, 3, 2, rng);
  const Tensor doc = random_tensor({5, 4}, rng);
  TaskState local = task;
  local.foreign.clear();
  local.attention = Tensor(Shape{0});
  task.attention = Tensor({2}, 0.0);
  CHECK(logits_of(config, Mode::fedweit, base, task, doc) == logits_of(config, Mode::fedweit, base, local, doc));

  TaskState lone = random_task(config, Mode::fedweit, 3, 1, rng);
  lone.attention = Tensor::vector({1.0});
  lone.adaptive = zero_filters(config);
  const FilterBank zero_base = zero_filters(config);
  std::vector<double> z = relu(naive_conv(doc, lone.foreign[0].filters[0]));
  const auto want = naive_affine(z, lone.head);
  const Tensor got = logits_of(config, Mode::fedweit, zero_base, lone, doc);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(got[k] - want[k]) <= 1e-12);
}

TEST_CASE("with no foreign adapters both modes agree when W_c only reads z_c") {
  std::mt19937_64 rng(12);
  const ModelConfig config = tiny_model(4, 2, {2, 3});
  const std::size_t z = config.z_dim();
  for (int trial = 0; trial < 5; ++trial) {
    const FilterBank base = random_bank(config, rng);
    TaskState seit = random_task(config, Mode::fedseit, 3, 0, rng);
    seit.combine_projection = Tensor({2 * z, z});
    for (std::size_t i = 0; i < z; ++i) seit.combine_projection.data()[i * z + i] = 1.0;
    TaskState weit = seit;
    weit.foreign_projection = weit.combine_projection = Tensor(Shape{0});
    const Tensor doc = random_tensor({6, 4}, rng);
    const Tensor a = logits_of(config, Mode::fedseit, base, seit, doc);
    const Tensor b = logits_of(config, Mode::fedweit, base, weit, doc);
    CHECK(max_abs_diff(a, b) <= 1e-12);
  }
}

TEST_CASE("foreign filters never receive gradient") {
  std::mt19937_64 rng(13);
  const ModelConfig config = tiny_model(4, 2, {2, 3});
  for (Mode mode : {Mode::fedseit, Mode::fedweit}) {
    const FilterBank base = random_bank(config, rng);
    const TaskState task = random_task(config, mode, 3, 2, rng);
    Graph g;
    BoundModel m = bind_model(g, config, mode, base, task);
    Var doc = g.constant(random_tensor({6, 4}, rng));
    g.backward(ops::softmax_cross_entropy(g, forward(g, m, doc), 1));
    CHECK(g.has_grad(m.attention));
    for (std::size_t id = 0; id < g.size(); ++id) {
      // Every constant node, including the foreign filters, stays without gradient.
      if (!g.requires_grad(Var{id})) CHECK_FALSE(g.has_grad(Var{id}));
    }
  }
}

TEST_CASE("argmax is invariant to shifting every logit") {
  std::mt19937_64 rng(21);
  const ModelConfig config = tiny_model(4, 2, {2, 3});
  const FilterBank base = random_bank(config, rng);
  TaskState task = random_task(config, Mode::fedseit, 4, 1, rng);
  const Tensor doc = random_tensor({6, 4}, rng);
  Predictor p(config, Mode::fedseit, base, task);
  Tensor z = p.logits(doc);
  const std::size_t best = p.predict(doc);
  for (auto& v : z.data()) v += 123.0;
  CHECK(static_cast<std::size_t>(std::max_element(z.data().begin(), z.data().end()) - z.data().begin()) == best);
}

TEST_CASE("dropout disabled makes forward deterministic; enabled changes it") {
  std::mt19937_64 rng(22);
  ModelConfig config = tiny_model(4, 6, {2, 3});
  const FilterBank base = random_bank(config, rng);
  const TaskState task = random_task(config, Mode::fedseit, 3, 1, rng);
  const Tensor doc = random_tensor({6, 4}, rng);
  auto run = [&](double rate, std::uint64_t seed) {
    std::mt19937_64 drop(seed);
    Graph g;
    BoundModel m = bind_model(g, config, Mode::fedseit, base, task);
    return g.value(forward(g, m, g.constant(doc), Dropout{rate, &drop}));
  };
  CHECK(run(0.0, 1) == run(0.0, 2));
  CHECK(run(0.5, 1) == run(0.5, 1));
  CHECK_FALSE(run(0.5, 1) == run(0.0, 1));
}

TEST_CASE("bind_model rejects inconsistent task states") {
  std::mt19937_64 rng(23);
  const ModelConfig config = tiny_model(4, 2, {2, 3});
  const FilterBank base = random_bank(config, rng);
  TaskState task = random_task(config, Mode::fedseit, 3, 2, rng);
  Graph g;
  TaskState bad = task;
  bad.attention = Tensor({1});
  CHECK_THROWS_AS(bind_model(g, config, Mode::fedseit, base, bad), ShapeError);
  bad = task;
  bad.foreign_projection = Tensor({3, 3});
  CHECK_THROWS_AS(bind_model(g, config, Mode::fedseit, base, bad), ShapeError);
  FilterBank short_base = base;
  short_base.pop_back();
  CHECK_THROWS_AS(bind_model(g, config, Mode::fedseit, short_base, task), ShapeError);
}

TEST_CASE("init_task_state shapes and attention") {
  std::mt19937_64 rng(24);
  const ModelConfig config = tiny_model(4, 2, {2, 3});
  std::vector<ForeignAdapter> foreign(3, ForeignAdapter{0, 1, zero_filters(config)});
  const TaskState s = init_task_state(config, Mode::fedseit, 2, 5, foreign, TaskInit{}, rng);
  CHECK(s.attention.size() == 3);
  CHECK(s.attention[0] == doctest::Approx(1.0 / 3));
  CHECK(s.foreign_projection.shape() == Shape{3 * config.z_dim(), config.z_dim()});
  CHECK(s.combine_projection.shape() == Shape{2 * config.z_dim(), config.z_dim()});
  CHECK(s.head.shape() == Shape{config.z_dim(), 5});
  CHECK(s.mask_logits[1][0] == TaskInit{}.mask_logit);
  const TaskState w = init_task_state(config, Mode::fedweit, 1, 2, {}, TaskInit{}, rng);
  CHECK(w.foreign_projection.size() == 0);
  std::vector<ForeignAdapter> wrong{ForeignAdapter{0, 1, FilterBank{Tensor({1, 1, 1})}}};
  CHECK_THROWS_AS(init_task_state(config, Mode::fedseit, 2, 2, wrong, TaskInit{}, rng), ShapeError);
}
