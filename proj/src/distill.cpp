#include "mlcak/distill.hpp"

#include <cmath>

#include "mlcak/error.hpp"
#include "mlcak/ops.hpp"

namespace mlcak {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  }
}

Tensor zero_loss() { return Tensor::scalar(0.0); }

}  // namespace

std::string_view to_string(KDScheme scheme) {
  switch (scheme) {
    case KDScheme::none: return "none";
    case KDScheme::vanilla: return "vanilla";
    case KDScheme::last_block: return "last_block";
    case KDScheme::one_to_one: return "one_to_one";
    case KDScheme::mlcak: return "mlcak";
  }
  return "unknown";
}

KDScheme parse_scheme(std::string_view name) {
  for (auto s : {KDScheme::none, KDScheme::vanilla, KDScheme::last_block, KDScheme::one_to_one, KDScheme::mlcak}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown KD scheme '" + std::string(name) +
                    "' (expected none, vanilla, last_block, one_to_one or mlcak)");
}

void KDConfig::validate() const {
  std::string problems;
  if (!(alpha >= 0.0)) problems += "\n  - alpha must be non-negative";
  if (!(beta >= 0.0)) problems += "\n  - beta must be non-negative";
  if (!(gamma >= 0.0)) problems += "\n  - gamma must be non-negative";
  if (!(temperature > 0.0)) problems += "\n  - temperature must be positive";
  if (!problems.empty()) throw ConfigError("invalid KD configuration:" + problems);
}

nlohmann::json to_json(const KDConfig& kd) {
  return {{"scheme", to_string(kd.scheme)},
          {"alpha", kd.alpha},
          {"beta", kd.beta},
          {"gamma", kd.gamma},
          {"temperature", kd.temperature}};
}

nlohmann::json to_json(const LossBreakdown& l) {
  return {{"bce_mlct", l.bce_mlct}, {"bce_mcct", l.bce_mcct},     {"kd_mlct", l.kd_mlct},
          {"kd_mcct", l.kd_mcct},   {"kd_feature", l.kd_feature}, {"total", l.total}};
}

Tensor mlcak_summary(const std::vector<Tensor>& hidden_states) {
  if (hidden_states.empty()) throw ContractError("mlcak_summary: no hidden states given");
  Tensor acc = hidden_states.front();
  for (std::size_t i = 1; i < hidden_states.size(); ++i) {
    require_same(hidden_states.front(), hidden_states[i], "mlcak_summary");
    acc = add(acc, hidden_states[i]);
  }
  return scale(acc, 1.0 / static_cast<double>(hidden_states.size()));
}

Tensor mse_loss(const Tensor& teacher, const Tensor& student) {
  require_same(teacher, student, "mse_loss");
  auto diff = sub(teacher.detach(), student);
  return mean(mul(diff, diff));
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same(logits, targets, "bce_with_logits");
  auto z = logits.data();
  auto y = targets.data();
  const double n = static_cast<double>(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!(y[i] >= 0.0 && y[i] <= 1.0)) {
      throw ContractError("bce_with_logits: target " + std::to_string(y[i]) + " at index " + std::to_string(i) +
                          " outside [0, 1]");
    }
    total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  auto y_const = targets.detach();
  return make_op_result("bce_with_logits", {1}, {total / n}, {logits}, [logits, y_const, n](auto g, auto) {
    auto gz = grad_accumulator(logits);
    auto z = logits.data();
    auto y = y_const.data();
    for (std::size_t i = 0; i < gz.size(); ++i) {
      const double s = z[i] >= 0 ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]) / (1.0 + std::exp(z[i]));
      gz[i] += g[0] * (s - y[i]) / n;
    }
  });
}

Tensor vanilla_kd_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature) {
  require_same(teacher_logits, student_logits, "vanilla_kd_loss");
  if (!(temperature > 0.0)) throw ParameterError("vanilla_kd_loss: temperature must be positive");
  for (const auto* t : {&teacher_logits, &student_logits}) {
    for (double v : t->data()) {
      if (!std::isfinite(v)) throw ContractError("vanilla_kd_loss: non-finite logit");
    }
  }
  const double inv_t = 1.0 / temperature;
  const std::size_t classes = teacher_logits.shape().back();
  const std::size_t rows = teacher_logits.numel() / classes;
  auto as_rows = [&](const Tensor& t) { return Tensor({rows, classes}, std::vector<double>(t.data().begin(), t.data().end())); };
  Tensor t_log, s_log;
  {
    NoGradGuard no_grad;
    t_log = log_softmax(scale(as_rows(teacher_logits), inv_t), -1);
    s_log = log_softmax(scale(as_rows(student_logits), inv_t), -1);
  }
  auto lt = t_log.data();
  auto ls = s_log.data();
  double kl = 0.0;
  for (std::size_t i = 0; i < lt.size(); ++i) kl += std::exp(lt[i]) * (lt[i] - ls[i]);
  const double value = temperature * temperature * kl / static_cast<double>(rows);

  // d/ds of τ²·KL(p‖q) with q = softmax(s/τ) is τ·(q - p).
  return make_op_result("vanilla_kd", {1}, {value}, {student_logits},
                        [student_logits, t_log, s_log, temperature, rows](auto g, auto) {
                          auto gs = grad_accumulator(student_logits);
                          auto lt = t_log.data();
                          auto ls = s_log.data();
                          const double f = g[0] * temperature / static_cast<double>(rows);
                          for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += f * (std::exp(ls[i]) - std::exp(lt[i]));
                        });
}

Tensor feature_kd_loss(KDScheme scheme, const ForwardTrace& teacher, const ForwardTrace& student) {
  if (scheme == KDScheme::none || scheme == KDScheme::vanilla) return zero_loss();
  if (teacher.depth() != student.depth() || teacher.depth() == 0) {
    throw ContractError("feature_kd_loss: teacher depth " + std::to_string(teacher.depth()) +
                        " does not match student depth " + std::to_string(student.depth()));
  }
  switch (scheme) {
    case KDScheme::mlcak:
      return mse_loss(mlcak_summary(teacher.hidden_states), mlcak_summary(student.hidden_states));
    case KDScheme::last_block:
      return mse_loss(teacher.hidden_states.back(), student.hidden_states.back());
    case KDScheme::one_to_one: {
      Tensor acc = mse_loss(teacher.hidden_states[0], student.hidden_states[0]);
      for (std::size_t i = 1; i < teacher.depth(); ++i) {
        acc = add(acc, mse_loss(teacher.hidden_states[i], student.hidden_states[i]));
      }
      return scale(acc, 1.0 / static_cast<double>(teacher.depth()));
    }
    default:
      return zero_loss();
  }
}

LossBreakdown joint_loss(const KDConfig& kd, const ForwardTrace& teacher, const ForwardTrace& student,
                         const Tensor& finding_targets, const Tensor& global_targets) {
  kd.validate();
  auto bce_mlct = bce_with_logits(student.mlct_logits, finding_targets);
  auto bce_mcct = bce_with_logits(student.mcct_logits, global_targets);

  LossBreakdown out;
  out.bce_mlct = bce_mlct.item();
  out.bce_mcct = bce_mcct.item();
  out.total_tensor = add(bce_mlct, bce_mcct);

  if (kd.scheme != KDScheme::none) {
    Tensor kd_mlct, kd_mcct;
    if (kd.scheme == KDScheme::vanilla) {
      kd_mlct = vanilla_kd_loss(teacher.mlct_logits, student.mlct_logits, kd.temperature);
      kd_mcct = vanilla_kd_loss(teacher.mcct_logits, student.mcct_logits, kd.temperature);
    } else {
      kd_mlct = mse_loss(teacher.mlct_logits, student.mlct_logits);
      kd_mcct = mse_loss(teacher.mcct_logits, student.mcct_logits);
    }
    auto kd_feature = feature_kd_loss(kd.scheme, teacher, student);
    out.kd_mlct = kd_mlct.item();
    out.kd_mcct = kd_mcct.item();
    out.kd_feature = kd_feature.item();
    auto weighted = add(add(scale(kd_mlct, kd.alpha), scale(kd_mcct, kd.beta)), scale(kd_feature, kd.gamma));
    out.total_tensor = add(out.total_tensor, weighted);
  }
  out.total = out.total_tensor.item();
  return out;
}

Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes) {
  if (labels.empty()) throw ContractError("one_hot: no labels");
  std::vector<double> v(labels.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ContractError("one_hot: label " + std::to_string(labels[i]) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    v[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor({labels.size(), num_classes}, std::move(v));
}

}  // namespace mlcak
