#pragma once

#include <cmath>
#include <optional>
#include <vector>

// Plain-loop reference formulas, deliberately free of library calls.
namespace mlcak::oracle {

using Vec = std::vector<double>;

inline Vec block_mean(const std::vector<Vec>& blocks) {
  Vec out(blocks[0].size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (const auto& b : blocks) s += b[i];
    out[i] = s / static_cast<double>(blocks.size());
  }
  return out;
}

inline double mse(const Vec& t, const Vec& s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += (t[i] - s[i]) * (t[i] - s[i]);
  return acc / static_cast<double>(t.size());
}

// -[y log σ(z) + (1-y) log(1-σ(z))], averaged.
inline double naive_bce(const Vec& z, const Vec& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    acc += -(y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
  }
  return acc / static_cast<double>(z.size());
}

// τ² Σ p log(p/q) per row of width `cols`, averaged over rows.
inline double kd_kl(const Vec& t, const Vec& s, std::size_t cols, double tau) {
  const std::size_t rows = t.size() / cols;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double zt = 0.0, zs = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      zt += std::exp(t[r * cols + c] / tau);
      zs += std::exp(s[r * cols + c] / tau);
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = std::exp(t[r * cols + c] / tau) / zt;
      const double q = std::exp(s[r * cols + c] / tau) / zs;
      total += p * std::log(p / q);
    }
  }
  return tau * tau * total / static_cast<double>(rows);
}

inline double per_block_mse(const std::vector<Vec>& t, const std::vector<Vec>& s) {
  double acc = 0.0;
  for (std::size_t b = 0; b < t.size(); ++b) acc += mse(t[b], s[b]);
  return acc / static_cast<double>(t.size());
}

// Counts every (positive, negative) pair.
inline std::optional<double> pair_auroc(const Vec& scores, const std::vector<int>& labels) {
  double good = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) good += 1.0;
      else if (scores[i] == scores[j]) good += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return good / static_cast<double>(pairs);
}

}  // namespace mlcak::oracle
