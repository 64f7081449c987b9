#include <doctest.h>

#include <cmath>
#include <random>

#include "patchbag/error.hpp"
#include "patchbag/graph.hpp"
#include "support/gradcheck.hpp"
#include "support/random.hpp"

using namespace patchbag;
using patchbag::testing::gradient_check;
using patchbag::testing::random_tensor;

TEST_CASE("tensor construction checks shape against data") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), DimensionError);
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6);
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(t.grad(), ContractError);
}

TEST_CASE("matmul") {
  Graph g;
  SUBCASE("identity") {
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(g, eye, m).to_vector() == std::vector<double>{1, 2, 3, 4});
  }
  SUBCASE("zero") {
    Tensor out = matmul(g, Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {0, 0}));
    CHECK(out.shape() == Shape{1, 1});
    CHECK(out[0] == 0.0);
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      matmul(g, Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string what = e.what();
      CHECK(what.find("[2x3]") != std::string::npos);
    }
  }
  SUBCASE("gradient of sum(a·b) against finite differences") {
    std::mt19937_64 rng(11);
    Tensor a = random_tensor({3, 4}, rng, true);
    Tensor b = random_tensor({4, 2}, rng, true);
    auto r = gradient_check({a, b}, [&](Graph& gg) { return sum(gg, matmul(gg, a, b)); });
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("matmul is associative with the identity") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> extent(1, 16);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = extent(rng), k = extent(rng), n = extent(rng);
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    std::vector<double> eye_values(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) eye_values[i * k + i] = 1.0;
    Tensor eye = Tensor::from({k, k}, eye_values);
    Graph g(false);
    Tensor left = matmul(g, matmul(g, a, eye), b);
    Tensor right = matmul(g, a, matmul(g, eye, b));
    for (std::size_t i = 0; i < left.size(); ++i) CHECK(std::abs(left[i] - right[i]) <= 1e-10);
  }
}

TEST_CASE("softmax") {
  Graph g;
  SUBCASE("equal logits give a uniform distribution") {
    for (double c : {-3.0, 0.0, 17.5}) {
      Tensor p = softmax(g, Tensor::from({4}, {c, c, c, c}));
      for (double v : p.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    }
  }
  SUBCASE("single element") { CHECK(softmax(g, Tensor::from({1}, {42.0}))[0] == 1.0); }
  SUBCASE("closed form [0, ln 3]") {
    Tensor p = softmax(g, Tensor::from({2}, {0.0, std::log(3.0)}));
    CHECK(std::abs(p[0] - 0.25) < 1e-15);
    CHECK(std::abs(p[1] - 0.75) < 1e-15);
  }
  SUBCASE("NaN input is a numeric error") {
    CHECK_THROWS_AS(softmax(g, Tensor::from({2}, {0.0, std::nan("")})), NumericError);
  }
  SUBCASE("rank-2 axes") {
    Tensor x = Tensor::from({2, 2}, {0.0, std::log(3.0), std::log(3.0), 0.0});
    Tensor rows = softmax(g, x, 1);
    CHECK(std::abs(rows.at(0, 1) - 0.75) < 1e-15);
    CHECK(std::abs(rows.at(1, 0) - 0.75) < 1e-15);
    Tensor cols = softmax(g, x, 0);
    CHECK(std::abs(cols.at(1, 0) - 0.75) < 1e-15);
    CHECK(std::abs(cols.at(0, 1) - 0.75) < 1e-15);
  }
}

TEST_CASE("softmax normalizes and ignores constant shifts") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 40;
    Tensor x = random_tensor({n}, rng, false, 5.0);
    const double c = shift(rng);
    std::vector<double> shifted = x.to_vector();
    for (auto& v : shifted) v += c;
    Graph g(false);
    Tensor p = softmax(g, x);
    Tensor q = softmax(g, Tensor::from({n}, shifted));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(p[i] > 0.0);
      total += p[i];
      CHECK(std::abs(p[i] - q[i]) <= 1e-12);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("elementwise ops") {
  Graph g;
  CHECK(relu(g, Tensor::from({3}, {-1, 0, 2})).to_vector() == std::vector<double>{0, 0, 2});
  CHECK(tanh(g, Tensor::from({1}, {0.0}))[0] == 0.0);
  CHECK_THROWS_AS(add(g, Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  CHECK_THROWS_AS(mul(g, Tensor::zeros({2, 1}), Tensor::zeros({1, 2})), DimensionError);

  SUBCASE("relu derivative at exactly zero is zero") {
    Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0}, true);
    Graph gg;
    Tensor loss = sum(gg, relu(gg, x));
    gg.backward(loss);
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 0.0);
    CHECK(x.grad()[2] == 1.0);
  }
  SUBCASE("mul backward against finite differences") {
    std::mt19937_64 rng(8);
    Tensor a = random_tensor({3, 5}, rng, true);
    Tensor b = random_tensor({3, 5}, rng, true);
    Tensor w = random_tensor({3, 5}, rng);
    auto r = gradient_check({a, b}, [&](Graph& gg) { return sum(gg, mul(gg, mul(gg, a, b), w)); });
    CHECK(r.max_rel_error < 1e-6);
  }
  SUBCASE("composite chain against finite differences") {
    std::mt19937_64 rng(9);
    Tensor a = random_tensor({4, 3}, rng, true);
    Tensor bias = random_tensor({3}, rng, true);
    Tensor rows = random_tensor({4}, rng, true);
    auto r = gradient_check({a, bias, rows}, [&](Graph& gg) {
      Tensor h = tanh(gg, add_row(gg, a, bias));
      Tensor s = softmax(gg, scale_rows(gg, h, rows), 1);
      Tensor c = concat_cols(gg, std::vector<Tensor>{s, transpose(gg, transpose(gg, h))});
      return log(gg, sum(gg, mul(gg, c, c)));
    });
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("backward") {
  SUBCASE("sum gives all-ones gradient") {
    Tensor x = Tensor::from({2, 3}, {1, -2, 3, 4, 5, -6}, true);
    Graph g;
    Tensor loss = sum(g, x);
    g.backward(loss);
    for (double v : x.grad()) CHECK(v == 1.0);
  }
  SUBCASE("zero multiple gives all-zero gradient") {
    Tensor x = Tensor::from({4}, {1, 2, 3, 4}, true);
    Graph g;
    Tensor loss = sum(g, scale(g, x, 0.0));
    g.backward(loss);
    for (double v : x.grad()) CHECK(v == 0.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    Graph g;
    Tensor y = scale(g, x, 2.0);
    CHECK_THROWS_AS(g.backward(y), ContractError);
  }
  SUBCASE("second sweep on the same graph is rejected") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    Graph g;
    Tensor loss = sum(g, x);
    g.backward(loss);
    x.zero_grad();
    CHECK_THROWS_AS(g.backward(loss), ContractError);
  }
  SUBCASE("stale leaf gradients are not silently accumulated") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    {
      Graph g;
      Tensor loss = sum(g, x);
      g.backward(loss);
    }
    Graph g2;
    Tensor loss = sum(g2, x);
    CHECK_THROWS_AS(g2.backward(loss), ContractError);
    x.zero_grad();
    Graph g3;
    Tensor again = sum(g3, x);
    g3.backward(again);
    CHECK(x.grad()[0] == 1.0);
  }
  SUBCASE("a tensor used twice accumulates both paths") {
    Tensor x = Tensor::from({1}, {3.0}, true);
    Graph g;
    Tensor loss = sum(g, mul(g, x, x));
    g.backward(loss);
    CHECK(x.grad()[0] == 6.0);
  }
  SUBCASE("a graph without recording cannot be swept") {
    Tensor x = Tensor::from({1}, {3.0}, true);
    Graph g(false);
    Tensor loss = sum(g, x);
    CHECK_FALSE(loss.requires_grad());
    CHECK_THROWS_AS(g.backward(loss), ContractError);
  }
}

TEST_CASE("forward and backward stay finite on finite inputs") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({5, 4}, rng, true, 30.0);
    Tensor w = random_tensor({4, 3}, rng, true, 30.0);
    Graph g;
    Tensor p = softmax(g, tanh(g, matmul(g, x, w)), 0);
    Tensor loss = sum(g, log(g, p));
    g.backward(loss);
    for (double v : p.data()) CHECK(std::isfinite(v));
    for (double v : x.grad()) CHECK(std::isfinite(v));
    for (double v : w.grad()) CHECK(std::isfinite(v));
  }
}
