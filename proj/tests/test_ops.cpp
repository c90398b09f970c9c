#include "doctest.h"

#include <cmath>
#include <numbers>

#include "grad_cases.hpp"
#include "mlcak/error.hpp"
#include "mlcak/ops.hpp"

using namespace mlcak;
using namespace mlcak::testing;

TEST_CASE("matmul hand products") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 2}, {5, 6, 7, 8});
  CHECK(values(matmul(a, b)) == std::vector<double>{19, 22, 43, 50});
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  CHECK(values(matmul(eye, b)) == values(b));
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5})), ShapeError);
}

TEST_CASE("matmul error names both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x5") != std::string::npos);
  }
}

TEST_CASE("matmul variants agree with a triple loop") {
  std::mt19937_64 rng(5);
  const auto a = random_tensor(rng, {3, 5, 7});
  const auto b = random_tensor(rng, {7, 6});
  const auto bt = random_tensor(rng, {3, 6, 7});
  const auto y = matmul(a, b);
  const auto z = matmul_transposed(a, bt);
  double worst = 0.0;
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        double s = 0.0, t = 0.0;
        for (std::size_t k = 0; k < 7; ++k) {
          s += a.data()[(n * 5 + i) * 7 + k] * b.data()[k * 6 + j];
          t += a.data()[(n * 5 + i) * 7 + k] * bt.data()[(n * 6 + j) * 7 + k];
        }
        worst = std::max({worst, std::abs(s - y.data()[(n * 5 + i) * 6 + j]), std::abs(t - z.data()[(n * 5 + i) * 6 + j])});
      }
  CHECK(worst < 1e-12);
}

TEST_CASE("softmax") {
  const auto u = softmax(Tensor({3}, {0, 0, 0}), 0);
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const auto s = softmax(Tensor({3}, {1, 2, 3}), -1);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(max_abs_diff(values(s), {std::exp(1.0) / z, std::exp(2.0) / z, std::exp(3.0) / z}) < 1e-12);

  std::mt19937_64 rng(1);
  const auto x = random_tensor(rng, {4, 6}, -50, 50);
  const auto shifted = add(x, Tensor::full({4, 6}, 123.0));
  CHECK(max_abs_diff(values(softmax(x, 1)), values(softmax(shifted, 1))) < 1e-12);

  const auto big = softmax(Tensor({2}, {1000.0, 0.0}), 0);
  CHECK(std::isfinite(big.data()[1]));
  CHECK(big.data()[0] == doctest::Approx(1.0));
}

TEST_CASE("softmax slices sum to one and stay positive") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_tensor(rng, {3, 7}, -20, 20);
    const auto s = softmax(x, -1);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(s.data()[r * 7 + c] > 0.0);
        total += s.data()[r * 7 + c];
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("layer_norm") {
  const auto ones = Tensor::full({3}, 1.0);
  const auto zeros = Tensor::zeros({3});
  const auto y = layer_norm(Tensor({1, 3}, {1, 2, 3}), ones, zeros, 1e-12);
  const double r = std::sqrt(1.5);
  CHECK(max_abs_diff(values(y), {-r, 0.0, r}) < 1e-9);

  const auto c = layer_norm(Tensor({1, 3}, {4, 4, 4}), ones, zeros);
  CHECK(values(c) == std::vector<double>{0, 0, 0});

  std::mt19937_64 rng(3);
  const auto x = random_tensor(rng, {5, 8}, -3, 3);
  const auto n = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}));
  for (std::size_t row = 0; row < 5; ++row) {
    double m = 0.0;
    for (std::size_t i = 0; i < 8; ++i) m += n.data()[row * 8 + i];
    CHECK(std::abs(m / 8.0) < 1e-10);
  }
  CHECK_THROWS_AS(layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}), 0.0), ParameterError);
  CHECK_THROWS_AS(layer_norm(x, Tensor::full({7}, 1.0), Tensor::zeros({7})), ShapeError);
}

TEST_CASE("gelu") {
  const auto y = gelu(Tensor({3}, {0.0, 1.0, 10.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::numbers::sqrt2))).epsilon(1e-14));
  CHECK(y.data()[1] == doctest::Approx(0.841345).epsilon(1e-6));
  CHECK(std::abs(y.data()[2] - 10.0) < 1e-6);
}

TEST_CASE("sigmoid is stable at the extremes") {
  const auto y = sigmoid(Tensor({3}, {-800.0, 0.0, 800.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == 0.5);
  CHECK(y.data()[2] == 1.0);
}

TEST_CASE("shape ops") {
  const Tensor x({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(values(permute(x, {1, 0})) == std::vector<double>{0, 3, 1, 4, 2, 5});
  CHECK(values(select(x, 1, 2)) == std::vector<double>{2, 5});
  CHECK(select(x, -1, 0).shape() == Shape{2});
  CHECK(values(concat({x, x}, 0)).size() == 12);
  CHECK(values(concat({x, Tensor({2, 1}, {9, 9})}, 1)) == std::vector<double>{0, 1, 2, 9, 3, 4, 5, 9});
  CHECK(expand_leading(x, 2).shape() == Shape{2, 2, 3});
  CHECK_THROWS_AS(reshape(x, {4}), ShapeError);
  CHECK_THROWS_AS(add(x, Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(add_broadcast(x, Tensor::zeros({2})), ShapeError);
}

TEST_CASE("gradients match central differences") {
  for (const auto& c : gradient_cases()) {
    CAPTURE(c.name);
    CHECK(gradient_error(c.fn, c.inputs) < 1e-4);
  }
}

TEST_CASE("finite inputs give finite outputs") {
  std::mt19937_64 rng(8);
  const auto x = random_tensor(rng, {4, 5}, -30, 30);
  for (const auto& y : {softmax(x, -1), log_softmax(x, 0), gelu(x), sigmoid(x),
                        layer_norm(x, Tensor::full({5}, 1.0), Tensor::zeros({5}))}) {
    for (double v : y.data()) CHECK(std::isfinite(v));
  }
}
