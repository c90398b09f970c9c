#include "mlcak/optim.hpp"

#include <cmath>
#include <numbers>

#include "mlcak/error.hpp"

namespace mlcak {

AdamWState make_adamw_state(const NamedParameters& params, AdamWOptions options) {
  AdamWState state;
  state.options = options;
  for (const auto& [name, p] : params) {
    state.first_moment.emplace_back(p.numel(), 0.0);
    state.second_moment.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adamw_step(NamedParameters& params, AdamWState& state, double lr) {
  if (!(lr > 0.0)) throw ParameterError("adamw_step: learning rate must be positive, got " + std::to_string(lr));
  if (state.first_moment.size() != params.size()) {
    throw ContractError("adamw_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    if (!p.has_grad()) throw ContractError("adamw_step: parameter '" + name + "' has no gradient");
    if (state.first_moment[i].size() != p.numel()) {
      throw ContractError("adamw_step: state shape mismatch for parameter '" + name + "'");
    }
  }

  const auto& o = state.options;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  const double decay = 1.0 - lr * o.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].second;
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] = w[j] * decay - lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

AdamW::AdamW(NamedParameters params, AdamWOptions options)
    : params_(std::move(params)), state_(make_adamw_state(params_, options)) {}

void AdamW::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

double cosine_lr(const CosineSchedule& schedule, std::size_t t) {
  if (schedule.total_steps == 0) throw ParameterError("cosine_lr: total_steps must be positive");
  if (t > schedule.total_steps) {
    throw ParameterError("cosine_lr: step " + std::to_string(t) + " outside [0, " +
                         std::to_string(schedule.total_steps) + "]");
  }
  const double progress = static_cast<double>(t) / static_cast<double>(schedule.total_steps);
  return schedule.min_lr +
         0.5 * (schedule.base_lr - schedule.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace mlcak
