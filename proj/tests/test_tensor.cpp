#include <cmath>
#include <vector>

#include <doctest.h>

#include "czproxy/gradcheck.hpp"
#include "czproxy/rng.hpp"
#include "czproxy/tensor.hpp"

using namespace czp;

namespace {

TensorPtr t64(std::vector<std::size_t> shape, std::vector<double> vals,
              bool rg = false) {
  return Tensor::from_values(std::move(shape), std::move(vals), Dtype::F64,
                             rg);
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
  TensorPtr eye = t64({2, 2}, {1, 0, 0, 1});
  TensorPtr a = t64({2, 2}, {1, 2, 3, 4});
  TensorPtr out = ops::matmul(eye, a);
  CHECK(out->values() == std::vector<double>{1, 2, 3, 4});

  TensorPtr row = t64({1, 2}, {1, 2});
  TensorPtr col = t64({2, 1}, {3, 4});
  CHECK(ops::matmul(row, col)->item() == doctest::Approx(11.0));

  CHECK_THROWS_AS(ops::matmul(row, row), ShapeError);
}

TEST_CASE("matmul gradient of sum vs central differences") {
  CounterRng rng(42);
  TensorPtr a = t64({3, 4}, rng.gaussians(12), true);
  TensorPtr b = t64({4, 2}, rng.gaussians(8), true);
  auto loss_fn = [&] { return ops::sum_all(ops::matmul(a, b)); };
  backward(loss_fn());
  CHECK(finite_difference_error(a, [&] { return loss_fn()->item(); }) < 1e-6);
  CHECK(finite_difference_error(b, [&] { return loss_fn()->item(); }) < 1e-6);
}

TEST_CASE("softmax uniform, stability, and direct formula") {
  TensorPtr u = ops::softmax(t64({3}, {0, 0, 0}), 0);
  for (double v : u->values()) CHECK(v == doctest::Approx(1.0 / 3.0));

  TensorPtr big = ops::softmax(t64({2}, {1000, 1000}), 0);
  CHECK(big->values()[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(big->values()[1]));

  TensorPtr s = ops::softmax(t64({3}, {1, 2, 3}), 0);
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(s->values()[k] - std::exp(1.0 + k) / denom) < 1e-12);
  }
}

TEST_CASE("softmax rows sum to one for large magnitudes") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(seed);
    std::vector<double> vals = rng.gaussians(4 * 7);
    for (double& v : vals) v *= 1e4 / 3.0;
    TensorPtr p = ops::softmax(t64({4, 7}, vals), -1);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0;
      for (std::size_t c = 0; c < 7; ++c) sum += p->values()[r * 7 + c];
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("layer_norm zero-variance row, symmetry, and row statistics") {
  TensorPtr gain = t64({4}, {1, 1, 1, 1});
  TensorPtr bias = t64({4}, {0, 0, 0, 0});
  TensorPtr flat = ops::layer_norm(t64({1, 4}, {5, 5, 5, 5}), gain, bias);
  for (double v : flat->values()) CHECK(v == doctest::Approx(0.0));

  TensorPtr two = ops::layer_norm(t64({1, 2}, {1, 3}), t64({2}, {1, 1}),
                                  t64({2}, {0, 0}), 1e-12);
  CHECK(two->values()[0] == doctest::Approx(-1.0));
  CHECK(two->values()[1] == doctest::Approx(1.0));

  CounterRng rng(7);
  std::vector<double> vals = rng.gaussians(16, 3.0);
  TensorPtr x = t64({2, 8}, vals);
  TensorPtr out = ops::layer_norm(x, t64({8}, std::vector<double>(8, 1.0)),
                                  t64({8}, std::vector<double>(8, 0.0)),
                                  1e-10);
  for (std::size_t r = 0; r < 2; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 8; ++c) mean += vals[r * 8 + c];
    mean /= 8;
    for (std::size_t c = 0; c < 8; ++c) {
      var += (vals[r * 8 + c] - mean) * (vals[r * 8 + c] - mean);
    }
    var /= 8;
    for (std::size_t c = 0; c < 8; ++c) {
      const double expect = (vals[r * 8 + c] - mean) / std::sqrt(var + 1e-10);
      CHECK(std::abs(out->values()[r * 8 + c] - expect) < 1e-10);
    }
  }
}

TEST_CASE("cross entropy hand values and naive loop oracle") {
  CHECK(ops::cross_entropy_from_logits(t64({1, 2}, {0, 0}), {0})->item() ==
        doctest::Approx(std::log(2.0)));
  CHECK(ops::cross_entropy_from_logits(t64({1, 3}, {50, 0, 0}), {0})->item() ==
        doctest::Approx(0.0).epsilon(1e-12));

  CounterRng rng(11);
  std::vector<double> logits = rng.gaussians(4 * 5, 2.0);
  const std::vector<std::size_t> targets{3, 0, 4, 1};
  const double got =
      ops::cross_entropy_from_logits(t64({4, 5}, logits), targets)->item();
  // Independent per-sample log-sum-exp loop.
  double expect = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    double denom = 0;
    for (std::size_t k = 0; k < 5; ++k) denom += std::exp(logits[i * 5 + k]);
    expect += std::log(denom) - logits[i * 5 + targets[i]];
  }
  expect /= 4;
  CHECK(std::abs(got - expect) < 1e-10);

  CHECK_THROWS_AS(
      ops::cross_entropy_from_logits(t64({1, 2}, {0, 0}), {2}), IndexError);
}

TEST_CASE("kl divergence identities, hand value, naive oracle") {
  TensorPtr p = t64({1, 2}, {0.3, 0.7});
  CHECK(std::abs(ops::kl_divergence(p, p)->item()) <= 1e-10);

  CHECK(ops::kl_divergence(t64({1, 2}, {1, 0}), t64({1, 2}, {0.5, 0.5}))
            ->item() == doctest::Approx(std::log(2.0)));

  CounterRng rng(5);
  auto random_probs = [&](std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0;
      for (std::size_t c = 0; c < cols; ++c) {
        v[r * cols + c] = std::abs(rng.next_gaussian()) + 0.05;
        sum += v[r * cols + c];
      }
      for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] /= sum;
    }
    return v;
  };
  const auto pt = random_probs(3, 4);
  const auto pv = random_probs(3, 4);
  const double got =
      ops::kl_divergence(t64({3, 4}, pt), t64({3, 4}, pv))->item();
  double expect = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      expect += pt[r * 4 + c] * std::log(pt[r * 4 + c] / pv[r * 4 + c]);
    }
  }
  expect /= 3;
  CHECK(std::abs(got - expect) < 1e-10);
  CHECK(got >= -1e-10);

  CHECK_THROWS_AS(
      ops::kl_divergence(t64({1, 2}, {0.9, 0.5}), t64({1, 2}, {0.5, 0.5})),
      ContractError);
  CHECK_THROWS_AS(
      ops::kl_divergence(t64({1, 2}, {1.2, -0.2}), t64({1, 2}, {0.5, 0.5})),
      ContractError);
}

TEST_CASE("kl divergence is nonnegative on random pairs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(seed);
    TensorPtr a = ops::softmax(t64({2, 5}, rng.gaussians(10, 3.0)), -1);
    TensorPtr b = ops::softmax(t64({2, 5}, rng.gaussians(10, 3.0)), -1);
    CHECK(ops::kl_divergence(a, b)->item() >= -1e-10);
  }
}

TEST_CASE("l2_normalize hand case, idempotence, degenerate input") {
  TensorPtr v = ops::l2_normalize(t64({2}, {3, 4}));
  CHECK(v->values()[0] == doctest::Approx(0.6));
  CHECK(v->values()[1] == doctest::Approx(0.8));

  TensorPtr again = ops::l2_normalize(v);
  CHECK(again->values()[0] == doctest::Approx(v->values()[0]));

  CounterRng rng(3);
  TensorPtr x = ops::l2_normalize(t64({4, 6}, rng.gaussians(24, 2.0)));
  for (std::size_t r = 0; r < 4; ++r) {
    double norm = 0;
    for (std::size_t c = 0; c < 6; ++c) {
      norm += x->values()[r * 6 + c] * x->values()[r * 6 + c];
    }
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-7);
  }

  CHECK_THROWS_AS(ops::l2_normalize(t64({2}, {0, 1e-13})),
                  DegenerateInputError);
}

TEST_CASE("backward constants, quadratic, and stale graph") {
  TensorPtr x = t64({3}, {0.3, -1.2, 2.0}, true);
  TensorPtr loss = ops::sum_all(ops::softmax(x, 0));
  backward(loss);
  for (double g : x->grad()) CHECK(std::abs(g) < 1e-12);

  TensorPtr y = Tensor::scalar(3.0, Dtype::F64, true);
  TensorPtr sq = ops::sum_all(ops::mul(y, y));
  backward(sq);
  CHECK(y->grad()[0] == doctest::Approx(6.0));
  CHECK_THROWS_AS(backward(sq), StaleGraphError);
}

TEST_CASE("backward accumulates over shared subexpressions") {
  CounterRng rng(9);
  const auto vals = rng.gaussians(6);

  TensorPtr x1 = t64({2, 3}, vals, true);
  TensorPtr f1 = ops::gelu(ops::scale(x1, 1.7));
  backward(ops::sum_all(ops::add(f1, f1)));

  TensorPtr x2 = t64({2, 3}, vals, true);
  backward(ops::sum_all(ops::scale(ops::gelu(ops::scale(x2, 1.7)), 2.0)));

  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(x1->grad()[i] == doctest::Approx(x2->grad()[i]));
  }
}

TEST_CASE("unreachable leaves keep zero gradients") {
  TensorPtr used = Tensor::scalar(2.0, Dtype::F64, true);
  TensorPtr unused = Tensor::scalar(5.0, Dtype::F64, true);
  backward(ops::mul(used, used));
  CHECK(used->grad()[0] == doctest::Approx(4.0));
  CHECK(unused->grad()[0] == 0.0);
}

TEST_CASE("finite-difference pass over every differentiable op") {
  for (const auto& result : grad_check_ops(20)) {
    INFO(result.name);
    CHECK(result.max_rel_err < 1e-4);
  }
}

TEST_CASE("trailing-axis broadcast is the only broadcast") {
  TensorPtr m = t64({2, 3}, {1, 2, 3, 4, 5, 6});
  TensorPtr v = t64({3}, {10, 20, 30});
  CHECK(ops::add(m, v)->values() ==
        std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(ops::mul(m, v)->values() ==
        std::vector<double>{10, 40, 90, 40, 100, 180});
  // Anything richer is rejected.
  CHECK_THROWS_AS(ops::add(m, t64({2}, {1, 2})), ShapeError);
  CHECK_THROWS_AS(ops::add(v, m), ShapeError);
}

TEST_CASE("gather, concat, linear, reductions basic contracts") {
  TensorPtr table = t64({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  TensorPtr picked = ops::embedding_lookup(table, {2, 0, 2});
  CHECK(picked->values() == std::vector<double>{5, 6, 1, 2, 5, 6});
  backward(ops::sum_all(picked));
  CHECK(table->grad() == std::vector<double>{1, 1, 0, 0, 2, 2});
  CHECK_THROWS_AS(ops::embedding_lookup(table, {3}), IndexError);

  TensorPtr a = t64({2, 1}, {1, 2});
  TensorPtr b = t64({2, 2}, {3, 4, 5, 6});
  CHECK(ops::concat_cols({a, b})->values() ==
        std::vector<double>{1, 3, 4, 2, 5, 6});
  CHECK(ops::concat_rows({b, b})->rows() == 4);
  CHECK_THROWS_AS(ops::concat_cols({a, t64({3, 1}, {1, 2, 3})}), ShapeError);

  TensorPtr x = t64({2, 2}, {1, 2, 3, 4});
  TensorPtr w = t64({2, 2}, {1, 0, 0, 1});
  TensorPtr bias = t64({2}, {10, 20});
  CHECK(ops::linear(x, w, bias)->values() ==
        std::vector<double>{11, 22, 13, 24});

  CHECK(ops::sum_all(x)->item() == doctest::Approx(10.0));
  CHECK(ops::mean_all(x)->item() == doctest::Approx(2.5));
  CHECK(ops::transpose(x)->values() == std::vector<double>{1, 3, 2, 4});
}

TEST_CASE("log rejects nonpositive input") {
  CHECK_THROWS_AS(ops::log(t64({1}, {0.0})), DegenerateInputError);
  CHECK(ops::log(t64({1}, {std::exp(1.0)}))->item() == doctest::Approx(1.0));
}

TEST_CASE("f32 tensors quantize to float-representable values") {
  const double fine = 0.1;  // not exactly representable in f32
  TensorPtr t32 = Tensor::from_values({1}, {fine}, Dtype::F32);
  CHECK(t32->values()[0] == static_cast<double>(static_cast<float>(fine)));
  TensorPtr sum = ops::add(t32, t32);
  CHECK(sum->values()[0] ==
        static_cast<double>(static_cast<float>(t32->values()[0] * 2)));
  CHECK_THROWS_AS(ops::add(t32, Tensor::scalar(1.0, Dtype::F64)), ShapeError);
}

TEST_CASE("tensor invariants: shape product, grad allocation") {
  TensorPtr t = Tensor::zeros({2, 3}, Dtype::F64, true);
  CHECK(t->numel() == 6);
  CHECK(t->grad().size() == 6);
  TensorPtr plain = Tensor::zeros({2}, Dtype::F64, false);
  CHECK_THROWS_AS(plain->grad(), ContractError);
  CHECK_THROWS_AS(Tensor::zeros({0, 2}, Dtype::F64), ShapeError);
  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}, Dtype::F64),
                  ShapeError);
}
