#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "test_util.hpp"
#include "vitlp/grad_check.hpp"
#include "vitlp/ops.hpp"

using namespace vitlp;
using vitlp::testing::random_tensor;

namespace {

double check(const std::function<Tensor()>& f, const std::vector<Tensor>& params) {
  return grad_check(f, params).max_rel_error;
}

}  // namespace

TEST_CASE("tensor construction and shape invariants") {
  const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(t.at(2, 0), IndexError);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
}

TEST_CASE("matmul values") {
  const Tensor i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor p = ops::matmul(i2, i2);
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{1, 0, 0, 1});

  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::from({2, 1}, {0, 1});
  const Tensor c = ops::matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 1});
  CHECK(c.at(0) == 2);
  CHECK(c.at(1) == 4);
  CHECK_THROWS_AS(ops::matmul(a, Tensor::zeros({3, 1})), DimensionError);
}

TEST_CASE("matmul gradients match finite differences") {
  const Tensor a = random_tensor({3, 4}, 1);
  const Tensor b = random_tensor({4, 2}, 2);
  const Tensor w = random_tensor({3, 2}, 3, false);
  CHECK(check([&] { return ops::sum(ops::mul(ops::matmul(a, b), w)); }, {a, b}) < 1e-4);
  const Tensor bt = random_tensor({2, 4}, 4);
  CHECK(check([&] { return ops::sum(ops::mul(ops::matmul_nt(a, bt), w)); }, {a, bt}) < 1e-4);
}

TEST_CASE("softmax values and stability") {
  const Tensor u = ops::softmax(Tensor::from({1, 3}, {0, 0, 0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  const Tensor big = ops::softmax(Tensor::from({1, 2}, {1000, 0}));
  CHECK(std::isfinite(big.at(0)));
  CHECK(big.at(0) == doctest::Approx(1.0));
  CHECK(big.at(1) < 1e-300);

  const Tensor r = ops::softmax(random_tensor({4, 6}, 9, false, 5.0));
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(r.at(i, j) > 0);
      s += r.at(i, j);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax is permutation equivariant") {
  const Tensor x = Tensor::from({1, 4}, {0.3, -1.2, 2.0, 0.7});
  const Tensor y = Tensor::from({1, 4}, {2.0, 0.3, 0.7, -1.2});
  const Tensor sx = ops::softmax(x), sy = ops::softmax(y);
  CHECK(sx.at(0) == sy.at(1));
  CHECK(sx.at(1) == sy.at(3));
  CHECK(sx.at(2) == sy.at(0));
  CHECK(sx.at(3) == sy.at(2));
}

TEST_CASE("softmax jacobian matches finite differences") {
  const Tensor x = random_tensor({1, 5}, 11);
  const Tensor w = random_tensor({1, 5}, 12, false);
  CHECK(check([&] { return ops::sum(ops::mul(ops::softmax(x), w)); }, {x}) < 1e-4);
  CHECK(check([&] { return ops::sum(ops::mul(ops::log_softmax(x), w)); }, {x}) < 1e-4);
}

TEST_CASE("gelu values") {
  const Tensor g = ops::gelu(Tensor::from({3}, {0.0, 10.0, -10.0}));
  CHECK(g.at(0) == 0.0);
  CHECK(std::abs(g.at(1) - 10.0) < 1e-6);
  CHECK(std::abs(g.at(2)) < 1e-6);
  const Tensor x = random_tensor({3, 3}, 13, true, 3.0);
  CHECK(check([&] { return ops::sum(ops::mul(ops::gelu(x), ops::gelu(x))); }, {x}) < 1e-4);
}

TEST_CASE("layer_norm values") {
  const Tensor ones = Tensor::full({4}, 1.0), zeros = Tensor::zeros({4});
  const Tensor c = ops::layer_norm(Tensor::from({1, 4}, {5, 5, 5, 5}), ones, zeros);
  for (double v : c.data()) CHECK(v == 0.0);

  const Tensor pm = ops::layer_norm(Tensor::from({1, 2}, {1, -1}), Tensor::full({2}, 1.0), Tensor::zeros({2}));
  CHECK(pm.at(0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(pm.at(1) == doctest::Approx(-1.0).epsilon(1e-4));

  const Tensor r = ops::layer_norm(random_tensor({1, 16}, 14, false, 4.0), Tensor::full({16}, 1.0), Tensor::zeros({16}));
  const double mean = std::accumulate(r.data().begin(), r.data().end(), 0.0) / 16.0;
  double var = 0;
  for (double v : r.data()) var += (v - mean) * (v - mean);
  var /= 16.0;
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(var - 1.0) < 1e-3);
}

TEST_CASE("layer_norm gradients match finite differences") {
  const Tensor x = random_tensor({3, 5}, 15);
  const Tensor g = random_tensor({5}, 16);
  const Tensor b = random_tensor({5}, 17);
  const Tensor w = random_tensor({3, 5}, 18, false);
  CHECK(check([&] { return ops::sum(ops::mul(ops::layer_norm(x, g, b), w)); }, {x, g, b}) < 1e-4);
}

TEST_CASE("cross_entropy values and gradient") {
  const Tensor uniform = Tensor::zeros({1, 1001});
  CHECK(ops::cross_entropy(uniform, 17).item() == doctest::Approx(std::log(1001.0)).epsilon(1e-12));
  CHECK(std::abs(std::log(1001.0) - 6.9088) < 1e-4);

  std::vector<double> dom(10, 0.0);
  dom[3] = 30.0;
  CHECK(ops::cross_entropy(Tensor::from({1, 10}, dom), 3).item() < 1e-12);
  CHECK_THROWS_AS(ops::cross_entropy(uniform, 1001), IndexError);
  CHECK_THROWS_AS(ops::cross_entropy(uniform, -1), IndexError);

  const Tensor l = random_tensor({1, 7}, 19, true, 2.0);
  CHECK(check([&] { return ops::cross_entropy(l, 4); }, {l}) < 1e-4);

  // Analytic gradient is softmax − one_hot.
  const Tensor l2 = random_tensor({1, 7}, 20);
  ops::cross_entropy(l2, 2).backward();
  const Tensor p = ops::softmax(l2.detach());
  for (std::size_t j = 0; j < 7; ++j) CHECK(l2.grad()[j] == doctest::Approx(p.at(j) - (j == 2 ? 1.0 : 0.0)));
}

TEST_CASE("cross_entropy_sum skips negative targets") {
  const Tensor l = random_tensor({4, 6}, 21);
  const std::vector<int> t{1, -1, 5, 0};
  const double expected = ops::cross_entropy(ops::slice_rows(l, 0, 1), 1).item() +
                          ops::cross_entropy(ops::slice_rows(l, 2, 3), 5).item() +
                          ops::cross_entropy(ops::slice_rows(l, 3, 4), 0).item();
  CHECK(ops::cross_entropy_sum(l, t).item() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(check([&] { return ops::cross_entropy_sum(l, t); }, {l}) < 1e-4);
}

TEST_CASE("indexing and shape ops match finite differences") {
  const Tensor table = random_tensor({6, 4}, 22);
  const std::vector<int> ids{3, 0, 3, 5};
  const Tensor w = random_tensor({4, 4}, 23, false);
  CHECK(check([&] { return ops::sum(ops::mul(ops::embedding(table, ids), w)); }, {table}) < 1e-4);

  const Tensor a = random_tensor({3, 2}, 24), b = random_tensor({3, 3}, 25);
  const Tensor wc = random_tensor({3, 5}, 26, false);
  CHECK(check([&] { return ops::sum(ops::mul(ops::concat_cols({a, b}), wc)); }, {a, b}) < 1e-4);
  const Tensor wr = random_tensor({6, 3}, 27, false);
  CHECK(check([&] { return ops::sum(ops::mul(ops::concat_rows({b, b}), wr)); }, {b}) < 1e-4);

  const Tensor x = random_tensor({5, 6}, 28);
  const std::vector<std::size_t> rows{4, 1, 1}, cols{5, 0};
  CHECK(check([&] { return ops::sum(ops::gelu(ops::gather_rows(x, rows))); }, {x}) < 1e-4);
  CHECK(check([&] { return ops::sum(ops::gelu(ops::select_cols(x, cols))); }, {x}) < 1e-4);
  CHECK(check([&] { return ops::sum(ops::gelu(ops::slice_cols(ops::slice_rows(x, 1, 4), 2, 5))); }, {x}) < 1e-4);
  CHECK(check([&] { return ops::mean(ops::gelu(ops::transpose(x))); }, {x}) < 1e-4);
  CHECK(check([&] { return ops::sum(ops::gelu(ops::reshape(x, {3, 10}))); }, {x}) < 1e-4);

  const Tensor bias = random_tensor({6}, 29);
  const std::vector<double> k(30, 0.25);
  CHECK(check([&] { return ops::sum(ops::gelu(ops::add_constant(ops::add_bias(x, bias), k))); }, {x, bias}) < 1e-4);
  const Tensor y = random_tensor({5, 6}, 30);
  CHECK(check([&] { return ops::sum(ops::mul(ops::sub(x, y), ops::scale(ops::add(x, y), 0.5))); }, {x, y}) < 1e-4);
}

TEST_CASE("randomized shapes up to 8x8 pass gradient checks") {
  Rng rng(31);
  for (int trial = 0; trial < 12; ++trial) {
    const auto m = static_cast<std::size_t>(rng.range(1, 8));
    const auto k = static_cast<std::size_t>(rng.range(1, 8));
    const auto n = static_cast<std::size_t>(rng.range(1, 8));
    const Tensor a = random_tensor({m, k}, 100 + trial);
    const Tensor b = random_tensor({k, n}, 200 + trial);
    const Tensor g = random_tensor({n}, 300 + trial);
    const Tensor beta = random_tensor({n}, 400 + trial);
    const auto f = [&] { return ops::mean(ops::softmax(ops::gelu(ops::layer_norm(ops::matmul(a, b), g, beta)))); };
    const auto f2 = [&] { return ops::sum(ops::mul(ops::log_softmax(ops::matmul(a, b)), ops::matmul(a, b))); };
    CHECK(check(f, {a, b, g, beta}) < 1e-4);
    CHECK(check(f2, {a, b}) < 1e-4);
  }
}

TEST_CASE("a tensor used twice accumulates both contributions") {
  const Tensor x = Tensor::from({2}, {1.5, -0.5}, true);
  const Tensor y = ops::sum(ops::mul(x, x));
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(x.grad()[1] == doctest::Approx(-1.0));
  const Tensor z = random_tensor({3, 3}, 40);
  CHECK(check([&] { return ops::sum(ops::add(ops::matmul(z, z), ops::gelu(z))); }, {z}) < 1e-4);
}

TEST_CASE("backward visits each node once in reverse topological order") {
  const Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  const Tensor a = ops::scale(x, 2.0);
  const Tensor b = ops::add(a, a);
  const Tensor root = ops::sum(ops::mul(b, a));
  Graph g(root);
  const auto& order = g.order();
  REQUIRE(order.back() == root.node());
  for (std::size_t i = 0; i < order.size(); ++i)
    for (const auto& p : order[i]->parents) {
      const auto it = std::find(order.begin(), order.end(), p.get());
      REQUIRE(it != order.end());
      CHECK(static_cast<std::size_t>(it - order.begin()) < i);
    }
  CHECK(std::set<detail::Node*>(order.begin(), order.end()).size() == order.size());
  CHECK(g.backward() == 4);
  // root = Σ (4x)(2x) = 8 Σ x², d/dx = 16x
  CHECK(x.grad()[0] == doctest::Approx(16.0));
  CHECK(x.grad()[1] == doctest::Approx(32.0));
}

TEST_CASE("no-grad guard records no graph") {
  const Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    const Tensor y = ops::sum(ops::mul(x, x));
    CHECK_FALSE(y.requires_grad());
    CHECK(y.item() == 5.0);
  }
  CHECK(grad_enabled());
  CHECK(ops::sum(ops::mul(x, x)).requires_grad());
}

TEST_CASE("grad_check oracle cases") {
  const Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  const auto sq = [&] { return ops::sum(ops::mul(x, x)); };
  sq().backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  const auto r = grad_check(sq, {x});
  CHECK(r.max_rel_error < 1e-8);
  CHECK(r.coordinates == 2);

  const Tensor c = Tensor::from({3}, {1.0, 2.0, 3.0}, true);
  const auto constant = [&] { return ops::add(ops::scale(ops::sum(c), 0.0), Tensor::scalar(4.0)); };
  CHECK(grad_check(constant, {c}).max_rel_error < 1e-12);

  const auto nan = [&] { return ops::scale(ops::sum(x), std::nan("")); };
  CHECK_THROWS_AS(grad_check(nan, {x}), NonFiniteError);
}

TEST_CASE("grad_check reports a wrong gradient") {
  // A hand-made node whose backward is deliberately off by a factor of two.
  const Tensor x = Tensor::from({1}, {0.7}, true);
  const auto bad = [&] {
    auto node = std::make_shared<detail::Node>();
    node->shape = {};
    node->value = {x.at(0) * x.at(0)};
    node->requires_grad = true;
    node->parents = {x.node_ptr()};
    node->backward_fn = [](detail::Node& self) {
      auto& p = *self.parents[0];
      if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
      p.grad[0] += self.grad[0] * 4.0 * p.value[0];
    };
    return Tensor(node);
  };
  CHECK(grad_check(bad, {x}).max_rel_error > 0.5);
}
