#include "support.hpp"

#include "ded/nn/adam.hpp"
#include "ded/nn/layers.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>

using namespace ded;
using namespace ded::nn;
using ded::test::gradient_error;
using ded::test::random_matrix;

namespace {

// Reduces any matrix to a scalar with fixed random weights so every output
// entry receives a distinct upstream gradient.
Var probe(const Var& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(x, constant(random_matrix(x.rows(), x.cols(), rng))));
}

// Naive per-element attention for one segment and head.
Matrix naive_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<double> s(static_cast<std::size_t>(k.rows()));
    double mx = -1e300;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      s[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(q.cols()));
      mx = std::max(mx, s[static_cast<std::size_t>(j)]);
    }
    double z = 0.0;
    for (auto& x : s) z += (x = std::exp(x - mx));
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += s[static_cast<std::size_t>(j)] / z * v(j, c);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("elementwise and structural ops match central differences") {
  std::mt19937_64 rng(11);
  Var a = leaf(random_matrix(3, 4, rng));
  Var b = leaf(random_matrix(3, 4, rng));
  Var c = leaf(random_matrix(4, 2, rng));
  Var row = leaf(random_matrix(1, 4, rng));
  Var col = leaf(random_matrix(3, 1, rng));
  Var pos = leaf(random_matrix(3, 4, rng).array().abs().matrix() + Matrix::Constant(3, 4, 0.5));

  CHECK(gradient_error([&] { return probe(add(a, b), 1); }, {a, b}) < 1e-7);
  CHECK(gradient_error([&] { return probe(sub(a, b), 2); }, {a, b}) < 1e-7);
  CHECK(gradient_error([&] { return probe(mul(a, b), 3); }, {a, b}) < 1e-7);
  CHECK(gradient_error([&] { return probe(div(a, pos), 4); }, {a, pos}) < 1e-7);
  CHECK(gradient_error([&] { return probe(matmul(a, c), 5); }, {a, c}) < 1e-7);
  CHECK(gradient_error([&] { return probe(add_row(a, row), 6); }, {a, row}) < 1e-7);
  CHECK(gradient_error([&] { return probe(mul_col(a, col), 7); }, {a, col}) < 1e-7);
  CHECK(gradient_error([&] { return probe(sigmoid(a), 8); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return probe(ded::nn::tanh(a), 9); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return probe(silu(a), 10); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return probe(softplus(a), 11); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return probe(ded::nn::exp(a), 12); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return probe(ded::nn::log(pos), 13); }, {pos}) < 1e-7);
  CHECK(gradient_error([&] { return probe(square(a), 14); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return probe(log_sigmoid(a), 15); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return probe(reshape(a, 2, 6), 16); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return probe(tile_rows(row, 3), 17); }, {row}) < 1e-7);
  CHECK(gradient_error([&] { return probe(tile_cols(col, 3), 25); }, {col}) < 1e-7);
  CHECK(gradient_error([&] { return probe(row_sum(a), 18); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return probe(block_mean_rows(reshape(a, 6, 2), 3), 19); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return mean(square(a)); }, {a}) < 1e-7);
  const std::array<Var, 2> pair{a, b};
  CHECK(gradient_error([&] { return probe(concat_cols(pair), 20); }, {a, b}) < 1e-7);
  CHECK(gradient_error([&] { return probe(concat_rows(pair), 21); }, {a, b}) < 1e-7);
  CHECK(gradient_error([&] { return probe(slice_cols(a, 1, 2), 22); }, {a}) < 1e-7);
  CHECK(gradient_error([&] { return probe(slice_rows(a, 1, 2), 23); }, {a}) < 1e-7);
  const std::vector<Eigen::Index> idx{2, 0, 2, 1};
  CHECK(gradient_error([&] { return probe(gather_rows(a, idx), 24); }, {a}) < 1e-7);
}

TEST_CASE("layer norm normalizes rows and matches central differences") {
  std::mt19937_64 rng(5);
  Var x = leaf(random_matrix(4, 8, rng, 3.0));
  Var g = leaf(random_matrix(1, 8, rng));
  Var b = leaf(random_matrix(1, 8, rng));
  const Var ones = constant(Matrix::Ones(1, 8));
  const Var zeros = constant(Matrix::Zero(1, 8));
  const Matrix y = layer_norm(x, ones, zeros).value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    CHECK(std::abs(y.row(r).mean()) < 1e-12);
    CHECK(std::abs((y.row(r).array().square().mean()) - 1.0) < 1e-4);
  }
  CHECK(gradient_error([&] { return probe(layer_norm(x, g, b), 3); }, {x, g, b}) < 1e-6);
}

TEST_CASE("segmented attention matches a naive double loop per segment and head") {
  std::mt19937_64 rng(21);
  const int heads = 2;
  const Matrix q = random_matrix(7, 6, rng), k = random_matrix(9, 6, rng), v = random_matrix(9, 4, rng);
  const std::vector<Segment> qs{{0, 3}, {3, 4}};
  const std::vector<Segment> ks{{0, 5}, {5, 4}};
  const Matrix out = segmented_attention(constant(q), constant(k), constant(v), qs, ks, heads).value();
  for (std::size_t s = 0; s < qs.size(); ++s) {
    for (int h = 0; h < heads; ++h) {
      const Matrix ref = naive_attention(q.block(qs[s].start, 3 * h, qs[s].length, 3),
                                         k.block(ks[s].start, 3 * h, ks[s].length, 3),
                                         v.block(ks[s].start, 2 * h, ks[s].length, 2));
      CHECK((out.block(qs[s].start, 2 * h, qs[s].length, 2) - ref).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("segmented attention gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Var q = leaf(random_matrix(5, 4, rng)), k = leaf(random_matrix(6, 4, rng)), v = leaf(random_matrix(6, 4, rng));
    const std::vector<Segment> qs{{0, 2}, {2, 3}}, ks{{0, 4}, {4, 2}};
    CHECK(gradient_error([&] { return probe(segmented_attention(q, k, v, qs, ks, 2), seed); }, {q, k, v}) <
          1e-4);
  }
}

TEST_CASE("neighbor mean is exact under neighbor permutation and differentiable") {
  std::mt19937_64 rng(3);
  Var a = leaf(random_matrix(5, 3, rng, 1e3));
  std::vector<std::vector<Eigen::Index>> nb{{1, 2, 3, 4}, {0}, {}, {4, 0, 1}, {3, 2, 1, 0}};
  const Matrix base = neighbor_mean(a, nb).value();
  CHECK(base.row(2).isZero(0.0));
  CHECK(base.row(1) == a.value().row(0));
  for (int trial = 0; trial < 10; ++trial) {
    auto shuffled = nb;
    for (auto& list : shuffled) std::shuffle(list.begin(), list.end(), rng);
    CHECK(neighbor_mean(a, shuffled).value() == base);
  }
  CHECK(gradient_error([&] { return probe(neighbor_mean(a, nb), 9); }, {a}, 1e-3) < 1e-7);
}

TEST_CASE("gradients of a shared leaf accumulate across uses") {
  Var x = leaf(Matrix::Constant(1, 1, 3.0));
  backward(add(mul(x, x), x));  // d/dx (x^2 + x) = 7
  CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("no-grad guard suppresses graph construction") {
  Var x = leaf(Matrix::Ones(2, 2));
  {
    NoGradGuard guard;
    CHECK_FALSE(add(x, x).requires_grad());
  }
  CHECK(add(x, x).requires_grad());
}

TEST_CASE("LSTM carries state through masked steps and matches central differences") {
  std::mt19937_64 rng(8);
  ParamStore store;
  Lstm lstm(store, "lstm", 3, 4, rng);
  const Matrix inputs = random_matrix(3 * 2, 3, rng);  // 3 steps, 2 agents
  // Agent 1 is absent at the final step: its output equals the state after step 2.
  const std::vector<bool> mask{true, true, true, true, true, false};
  const Matrix full = lstm(constant(inputs), 3, 2, mask).value();
  const Matrix two = lstm(constant(inputs.topRows(4)), 2, 2).value();
  CHECK((full.row(1) - two.row(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((full.row(0) - two.row(0)).cwiseAbs().maxCoeff() > 0.0);

  Var in = leaf(inputs);
  std::vector<Var> leaves{in};
  for (auto& p : store.items()) leaves.push_back(p.var);
  CHECK(gradient_error([&] { return probe(lstm(in, 3, 2, mask), 4); }, leaves) < 1e-6);
}

TEST_CASE("Adam minimizes a quadratic and clips the global gradient norm") {
  ParamStore store;
  Var w = store.add("w", Matrix::Constant(1, 2, 5.0));
  Adam adam(store, AdamOptions{0.1, 0.9, 0.999, 1e-8, 1.0});
  double first_norm = 0.0;
  for (int i = 0; i < 500; ++i) {
    backward(sum(square(add_scalar(w, -1.0))));
    const double n = adam.step();
    if (i == 0) first_norm = n;
  }
  CHECK(first_norm == doctest::Approx(std::sqrt(2.0) * 8.0));
  CHECK(w.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(w.value()(0, 1) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("group clipping scales each parameter group by its own norm") {
  // Two steps with beta1 = 0, beta2 = 0.5, eps = 0. Step one sends a large
  // gradient to group a and 0.5 to group b; step two sends 0.5 to b only.
  // Second update of b is 0.5 f2 / sqrt((0.25 (0.5 f1)^2 + 0.5 (0.5 f2)^2) / 0.75).
  auto run = [](bool by_group) {
    ParamStore store;
    Var a = store.add("a.w", Matrix::Zero(1, 1));
    Var b = store.add("b.w", Matrix::Zero(1, 1));
    Adam adam(store, AdamOptions{1.0, 0.0, 0.5, 0.0, 1.0, by_group});
    backward(add(scale(a, 100.0), scale(b, 0.5)));
    CHECK(adam.step() == doctest::Approx(std::sqrt(100.0 * 100.0 + 0.25)));
    backward(scale(b, 0.5));
    adam.step();
    return b.value()(0, 0);
  };
  const double f1 = 1.0 / std::sqrt(100.0 * 100.0 + 0.25);
  const double global = 1.0 + 0.5 / std::sqrt((0.25 * 0.25 * f1 * f1 + 0.5 * 0.25) / 0.75);
  CHECK(run(true) == doctest::Approx(-2.0));
  CHECK(run(false) == doctest::Approx(-global));
}

TEST_CASE("encoder block gradients match central differences and ignore the key bias") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed + 50);
    ParamStore store;
    const EncoderBlock block(store, "blk", 4, 2, rng);
    Var x = leaf(random_matrix(5, 4, rng));
    const std::vector<Segment> segs{{0, 2}, {2, 3}};
    std::vector<Var> leaves{x};
    for (auto& p : store.items()) leaves.push_back(p.var);
    CHECK(ded::test::stacked_gradient_error([&] { return probe(block(x, segs), seed); }, leaves) < 1e-4);
    // A shared shift of every key moves all logits of a row equally.
    CHECK(block.attention.key.bias.grad().cwiseAbs().maxCoeff() < 1e-12);
  }
}
