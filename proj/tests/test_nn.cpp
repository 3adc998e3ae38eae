#include <cmath>
#include <numeric>
#include <span>

#include "doctest.h"
#include "pcbd/checkpoint.hpp"
#include "pcbd/error.hpp"
#include "pcbd/nn.hpp"

using namespace pcbd;
using namespace pcbd::nn;

namespace {

Tensor random_tensor(Index r, Index c, SeededRng& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-scale, scale);
  return t;
}

double weighted_sum(const Tensor& out, const Tensor& w) { return (out.array() * w.array()).sum(); }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no pcbd::Error thrown");
  return ErrorKind::IoError;
}

Tensor permute_rows(const Tensor& x, const std::vector<Index>& perm) {
  Tensor out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(perm[std::size_t(i)]);
  return out;
}

}  // namespace

TEST_CASE("dense gradients match central differences") {
  for (auto kind : {Dense::Kind::BnRelu, Dense::Kind::Relu, Dense::Kind::Linear}) {
    for (auto mode : {Mode::Train, Mode::Infer}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SeededRng rng(seed, 17);
        const Index rows = 3 + Index(rng.below(10)), in = 1 + Index(rng.below(5)), out = 1 + Index(rng.below(5));
        Dense layer(in, out, kind);
        layer.init(rng);
        layer.bias().value = random_tensor(1, out, rng, 0.3);
        if (layer.has_bn()) {
          layer.gamma().value = random_tensor(1, out, rng).array() + 1.5;
          layer.beta().value = random_tensor(1, out, rng, 0.3);
          layer.running_mean() = random_tensor(1, out, rng, 0.5);
          layer.running_var() = random_tensor(1, out, rng, 0.5).array() + 1.0;
        }
        Tensor x = random_tensor(rows, in, rng);
        const Tensor w = random_tensor(rows, out, rng);
        layer.zero_grad();
        layer.forward(x, mode);
        const Tensor dx = layer.backward(w);
        std::vector<GradBlock> blocks{{"x", &x, dx},
                                      {"W", &layer.weight().value, layer.weight().grad},
                                      {"b", &layer.bias().value, layer.bias().grad}};
        if (layer.has_bn()) {
          blocks.push_back({"gamma", &layer.gamma().value, layer.gamma().grad});
          blocks.push_back({"beta", &layer.beta().value, layer.beta().grad});
        }
        const auto report = grad_check([&] { return weighted_sum(layer.forward(x, mode), w); }, blocks);
        CAPTURE(seed);
        CHECK(report.passed());
      }
    }
  }
}

TEST_CASE("two-input dense equals dense on the explicit concatenation") {
  SeededRng rng(3);
  for (auto kind : {Dense::Kind::BnRelu, Dense::Kind::Relu, Dense::Kind::Linear}) {
    Dense layer(5, 4, kind);
    layer.init(rng);
    layer.bias().value = random_tensor(1, 4, rng, 0.3);
    const Tensor local = random_tensor(12, 3, rng), global = random_tensor(3, 2, rng);
    const Tensor joined = concat_broadcast(local, global, 4);
    Dense copy = layer;
    const Tensor a = layer.forward(local, global, 4, Mode::Train);
    const Tensor b = copy.forward(joined, Mode::Train);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((layer.infer(local, global, 4) - copy.infer(joined)).cwiseAbs().maxCoeff() < 1e-12);

    const Tensor w = random_tensor(12, 4, rng);
    Tensor dg;
    const Tensor dl = layer.backward(w, &dg);
    const auto [want_local, want_global] = concat_broadcast_backward(copy.backward(w), 3, 4);
    CHECK((dl - want_local).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((dg - want_global).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("dense examples") {
  SUBCASE("identity weights with neutral batch norm pass non-negative input through") {
    Dense layer(3, 3, Dense::Kind::BnRelu);
    layer.weight().value = Tensor::Identity(3, 3);
    layer.running_mean().setZero();
    layer.running_var().setConstant(1.0 - kBnEps);
    SeededRng rng(1);
    const Tensor x = random_tensor(7, 3, rng).cwiseAbs();
    CHECK((layer.forward(x, Mode::Infer) - x).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("zero weights give the bias on every row") {
    for (auto kind : {Dense::Kind::Relu, Dense::Kind::Linear}) {
      Dense layer(4, 2, kind);
      layer.bias().value << 0.25, 1.5;
      SeededRng rng(2);
      const Tensor y = layer.infer(random_tensor(5, 4, rng));
      for (Index i = 0; i < 5; ++i) CHECK(y.row(i) == layer.bias().value);
    }
  }
  SUBCASE("linear layers are affine") {
    SeededRng rng(3);
    Dense layer(4, 3, Dense::Kind::Linear);
    layer.init(rng);
    layer.bias().value = random_tensor(1, 3, rng);
    const Tensor x = random_tensor(6, 4, rng), y = random_tensor(6, 4, rng);
    const double a = 0.37;
    const Tensor lhs = layer.infer(a * x + (1 - a) * y);
    const Tensor rhs = a * layer.infer(x) + (1 - a) * layer.infer(y);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("infer mode is deterministic and row-permutation equivariant") {
    SeededRng rng(4);
    Dense layer(3, 5, Dense::Kind::BnRelu);
    layer.init(rng);
    layer.forward(random_tensor(10, 3, rng), Mode::Train);
    const Tensor x = random_tensor(9, 3, rng);
    const Tensor y = layer.forward(x, Mode::Infer);
    CHECK(layer.forward(x, Mode::Infer) == y);
    CHECK(layer.infer(x) == y);
    std::vector<Index> perm(9);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::reverse(perm.begin(), perm.end());
    // GEMM kernels treat remainder rows differently, so equality is up to rounding.
    CHECK((layer.infer(permute_rows(x, perm)) - permute_rows(y, perm)).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("shape mismatch") {
    Dense layer(3, 2, Dense::Kind::Linear);
    CHECK(kind_of([&] { layer.forward(Tensor::Zero(4, 2), Mode::Infer); }) == ErrorKind::ShapeMismatch);
    layer.forward(Tensor::Zero(4, 3), Mode::Train);
    CHECK(kind_of([&] { layer.backward(Tensor::Zero(5, 2)); }) == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("batch norm statistics") {
  SeededRng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const Index out = 4;
    Dense layer(3, out, Dense::Kind::BnRelu);
    layer.init(rng);
    layer.bias().value = random_tensor(1, out, rng);
    // beta large enough that ReLU never clips, so the output is the normalised value.
    layer.beta().value.setConstant(100.0);
    const Tensor x = random_tensor(20, 3, rng, 2.0);
    const Tensor y = layer.forward(x, Mode::Train).array() - 100.0;
    const Eigen::RowVectorXd mean = y.colwise().mean();
    const Eigen::RowVectorXd var = (y.rowwise() - mean).array().square().colwise().mean();
    CHECK(mean.cwiseAbs().maxCoeff() <= 1e-8);
    // Normalisation divides by sqrt(var + eps).
    const Tensor pre = (x * layer.weight().value).rowwise() + layer.bias().value.row(0);
    const Eigen::RowVectorXd pre_mean = pre.colwise().mean();
    const Eigen::RowVectorXd pre_var = (pre.rowwise() - pre_mean).array().square().colwise().mean();
    // Running variance tracks the unbiased batch estimate.
    for (Index c = 0; c < out; ++c) {
      CHECK(std::abs(var(c) * (pre_var(c) + kBnEps) / pre_var(c) - 1.0) <= 1e-6);
      CHECK(layer.running_mean()(0, c) == doctest::Approx(0.1 * pre_mean(c)).epsilon(1e-12));
      CHECK(layer.running_var()(0, c) == doctest::Approx(0.9 + 0.1 * pre_var(c) * 20.0 / 19.0).epsilon(1e-12));
      CHECK(layer.running_var()(0, c) >= 0.0);
    }
  }
}

TEST_CASE("maxpool") {
  SUBCASE("single row") {
    Tensor x(1, 3);
    x << 1, -2, 3;
    CHECK(maxpool_points(x, 1) == x);
  }
  SUBCASE("gradient goes to the first argmax of each column") {
    Tensor x(3, 2);
    x << 1, 5, 4, 5, 4, 0;
    MaxPool pool;
    Tensor y = pool.forward(x, 3);
    CHECK(y(0, 0) == 4);
    CHECK(y(0, 1) == 5);
    Tensor g(1, 2);
    g << 2, 3;
    Tensor want = Tensor::Zero(3, 2);
    want(1, 0) = 2;
    want(0, 1) = 3;
    CHECK(pool.backward(g) == want);
  }
  SUBCASE("finite differences and permutation invariance") {
    SeededRng rng(6);
    for (int rep = 0; rep < 10; ++rep) {
      Tensor x = random_tensor(16, 4, rng);
      const Tensor w = random_tensor(2, 4, rng);
      MaxPool pool;
      pool.forward(x, 8);
      std::vector<GradBlock> blocks{{"x", &x, pool.backward(w)}};
      CHECK(grad_check([&] { return weighted_sum(maxpool_points(x, 8), w); }, blocks).passed());
      std::vector<Index> perm(8);
      std::iota(perm.begin(), perm.end(), Index{0});
      rng.shuffle(std::span<Index>(perm));
      for (Index i = 0; i < 8; ++i) perm.push_back(perm[std::size_t(i)] + 8);
      CHECK(maxpool_points(permute_rows(x, perm), 8) == maxpool_points(x, 8));
    }
  }
  CHECK(kind_of([] { maxpool_points(Tensor(0, 3), 1); }) == ErrorKind::EmptyInput);
}

TEST_CASE("concat_broadcast") {
  SeededRng rng(7);
  const Tensor local = random_tensor(6, 2, rng), global = random_tensor(2, 3, rng);
  const Tensor c = concat_broadcast(local, global, 3);
  CHECK(c.rows() == 6);
  CHECK(c.leftCols(2) == local);
  for (Index i = 0; i < 6; ++i) CHECK(c.row(i).tail(3) == global.row(i / 3));
  Tensor g = global;
  const Tensor w = random_tensor(6, 5, rng);
  std::vector<GradBlock> blocks{{"global", &g, concat_broadcast_backward(w, 2, 3).second}};
  CHECK(grad_check([&] { return weighted_sum(concat_broadcast(local, g, 3), w); }, blocks).passed());
  CHECK(kind_of([&] { concat_broadcast(local, random_tensor(3, 3, rng), 3); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("softmax cross-entropy") {
  const Tensor uniform = Tensor::Constant(1, 4, 0.7);
  CHECK(softmax_xent(uniform, {2}).loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  SeededRng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor logits = random_tensor(3, 5, rng, 4.0);
    const std::vector<int> labels{int(rng.below(5)), int(rng.below(5)), int(rng.below(5))};
    const auto r = softmax_xent(logits, labels);
    for (Index i = 0; i < 3; ++i) CHECK(std::abs(r.grad.row(i).sum()) <= 1e-12);
    CHECK((r.probs - softmax(logits)).cwiseAbs().maxCoeff() == 0.0);
    std::vector<GradBlock> blocks{{"logits", &logits, r.grad}};
    CHECK(grad_check([&] { return softmax_xent(logits, labels).loss; }, blocks, 1e-5).passed());
  }
  CHECK(kind_of([] { softmax_xent(Tensor::Zero(1, 3), {3}); }) == ErrorKind::LabelOutOfRange);
  CHECK(kind_of([] { softmax_xent(Tensor::Zero(1, 3), {-1}); }) == ErrorKind::LabelOutOfRange);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Param p{Tensor::Constant(2, 2, 0.5), Tensor::Zero(2, 2)};
    AdamState s;
    adam_step({&p}, s);
    CHECK(p.value == Tensor::Constant(2, 2, 0.5));
    CHECK(s.step == 1);
  }
  SUBCASE("first step from hand-evaluated formulas") {
    Param p{Tensor::Zero(1, 1), Tensor::Ones(1, 1)};
    AdamState s;
    adam_step({&p}, s);
    // m_hat = v_hat = 1, so the step is lr / (1 + eps).
    CHECK(std::abs(p.value(0, 0) + 0.001) <= 1e-6);
    CHECK(p.value(0, 0) == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("trajectories are deterministic") {
    auto run = [] {
      SeededRng rng(9);
      Param p{random_tensor(3, 2, rng), Tensor()};
      AdamState s;
      for (int k = 0; k < 20; ++k) {
        p.grad = random_tensor(3, 2, rng);
        adam_step({&p}, s);
      }
      return p.value;
    };
    CHECK(run() == run());
  }
  SUBCASE("shape mismatch") {
    Param p{Tensor::Zero(2, 2), Tensor::Zero(2, 3)};
    AdamState s;
    CHECK(kind_of([&] { adam_step({&p}, s); }) == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("grad_check") {
  SeededRng rng(10);
  Tensor x = random_tensor(4, 3, rng);
  auto loss = [&] { return x.array().cube().sum(); };
  Tensor good = 3.0 * x.array().square();
  std::vector<GradBlock> blocks{{"x", &x, good}};
  const auto a = grad_check(loss, blocks);
  const auto b = grad_check(loss, blocks);
  CHECK(a.passed());
  CHECK(a.blocks[0].rel_error == b.blocks[0].rel_error);
  Tensor bad = good;
  bad(2, 1) *= 1.01;
  std::vector<GradBlock> corrupted{{"x", &x, bad}};
  CHECK_FALSE(grad_check(loss, corrupted).passed());
}

TEST_CASE("checkpoint round trip") {
  SeededRng rng(11);
  Dense layer(3, 4, Dense::Kind::BnRelu);
  layer.init(rng);
  layer.forward(random_tensor(8, 3, rng), Mode::Train);
  Checkpoint ckpt;
  ckpt.meta["arch"] = "dense-test";
  layer.export_arrays("l0.", ckpt.arrays);
  const std::string bytes = serialize_checkpoint(ckpt);
  CHECK(bytes.rfind("PCBD1\n", 0) == 0);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.meta["arch"] == "dense-test");
  Dense copy(3, 4, Dense::Kind::BnRelu);
  copy.import_arrays("l0.", back.array_map());
  const Tensor x = random_tensor(5, 3, rng);
  CHECK(copy.infer(x) == layer.infer(x));
  CHECK(serialize_checkpoint(back) == bytes);

  CHECK(kind_of([&] { deserialize_checkpoint("PCBD2\n0\n"); }) == ErrorKind::ParseError);
  CHECK(kind_of([&] { deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)); }) == ErrorKind::ParseError);
  Dense wrong(2, 4, Dense::Kind::BnRelu);
  CHECK(kind_of([&] { wrong.import_arrays("l0.", back.array_map()); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("content hash matches git blob ids") {
  CHECK(content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}
