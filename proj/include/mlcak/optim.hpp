#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mlcak/tensor.hpp"

namespace mlcak {

using NamedParameters = std::vector<std::pair<std::string, Tensor>>;

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  AdamWOptions options;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step_count = 0;
};

AdamWState make_adamw_state(const NamedParameters& params, AdamWOptions options = {});

/// One AdamW update with decoupled weight decay and bias-corrected moments.
/// Every parameter must carry a gradient; throws ContractError naming the
/// first one that does not, before anything is modified.
void adamw_step(NamedParameters& params, AdamWState& state, double lr);

class AdamW {
 public:
  AdamW(NamedParameters params, AdamWOptions options = {});

  void step(double lr) { adamw_step(params_, state_, lr); }
  void zero_grad();

  const AdamWState& state() const { return state_; }
  const NamedParameters& parameters() const { return params_; }

 private:
  NamedParameters params_;
  AdamWState state_;
};

struct CosineSchedule {
  double base_lr = 5e-4;
  double min_lr = 0.0;
  std::size_t total_steps = 1;
};

/// min_lr + (base_lr - min_lr)·(1 + cos(π·t/total_steps))/2 for t in [0, total_steps].
double cosine_lr(const CosineSchedule& schedule, std::size_t t);

}  // namespace mlcak
