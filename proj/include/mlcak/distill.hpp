#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mlcak/tensor.hpp"
#include "mlcak/vit.hpp"

namespace mlcak {

enum class KDScheme { none, vanilla, last_block, one_to_one, mlcak };

std::string_view to_string(KDScheme scheme);
/// Accepts none, vanilla, last_block, one_to_one, mlcak; ConfigError otherwise.
KDScheme parse_scheme(std::string_view name);

struct KDConfig {
  KDScheme scheme = KDScheme::mlcak;
  double alpha = 1.0;  // logit transfer, multi-label head
  double beta = 1.0;   // logit transfer, global head
  double gamma = 1.0;  // encoder feature transfer
  double temperature = 2.0;  // vanilla scheme only

  void validate() const;
};

nlohmann::json to_json(const KDConfig& kd);

/// Itemized loss of one step. `total_tensor` is the differentiable total.
struct LossBreakdown {
  double bce_mlct = 0.0;
  double bce_mcct = 0.0;
  double kd_mlct = 0.0;
  double kd_mcct = 0.0;
  double kd_feature = 0.0;
  double total = 0.0;
  Tensor total_tensor;

  double classification() const { return bce_mlct + bce_mcct; }
};

nlohmann::json to_json(const LossBreakdown& loss);

/// Elementwise mean of the per-block encoder outputs.
Tensor mlcak_summary(const std::vector<Tensor>& hidden_states);

/// Mean over all elements of (teacher - student)²; the teacher is a constant.
Tensor mse_loss(const Tensor& teacher, const Tensor& student);

/// Stable mean of max(z,0) - z·y + log(1 + exp(-|z|)); targets in [0, 1].
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

/// τ²·KL(softmax(t/τ) ‖ softmax(s/τ)) over the last axis, averaged over rows.
Tensor vanilla_kd_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature);

/// Encoder-output transfer for the feature schemes; a constant zero for none
/// and vanilla.
Tensor feature_kd_loss(KDScheme scheme, const ForwardTrace& teacher, const ForwardTrace& student);

/// Classification plus weighted distillation terms. The teacher trace is not
/// read when scheme == none. global_targets is one-hot [B, num_global_classes].
LossBreakdown joint_loss(const KDConfig& kd, const ForwardTrace& teacher, const ForwardTrace& student,
                         const Tensor& finding_targets, const Tensor& global_targets);

/// One-hot encoding of integer class labels: [labels.size(), num_classes].
Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes);

}  // namespace mlcak
