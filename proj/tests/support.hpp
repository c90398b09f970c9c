#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mlcak/ops.hpp"
#include "mlcak/tensor.hpp"

namespace mlcak::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// ||analytic - numeric|| / (||analytic|| + ||numeric||) over every input
// element, with central differences of step eps.
inline double gradient_error(const ScalarFn& f, std::vector<Tensor> inputs, double eps = 1e-5) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    tape.backward(f(inputs));
  }
  double diff2 = 0.0, an2 = 0.0, nu2 = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.numel(), 0.0);
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double saved = d[i];
      d[i] = saved + eps;
      const double up = f(inputs).item();
      d[i] = saved - eps;
      const double down = f(inputs).item();
      d[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      an2 += analytic[i] * analytic[i];
      nu2 += numeric * numeric;
    }
  }
  const double denom = std::sqrt(an2) + std::sqrt(nu2);
  return denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
}

// Reduces any tensor to a scalar with fixed pseudo-random weights, so every
// output element contributes a distinct gradient.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, random_tensor(rng, y.shape())));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mlcak_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace mlcak::testing
