#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mlcak/optim.hpp"
#include "mlcak/tensor.hpp"

namespace mlcak {

/// Architecture hyperparameters. Member defaults are the full-size ViT-Tiny
/// at 224/16; desk_variant() gives the small configurations used for training
/// on a workstation.
struct ViTConfig {
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  std::size_t embed_dim = 192;
  std::size_t depth = 12;
  std::size_t num_heads = 3;
  double mlp_ratio = 4.0;
  std::size_t num_findings = 8;
  std::size_t num_global_classes = 2;
  std::string variant_name = "custom";

  std::size_t grid_size() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid_size() * grid_size(); }
  /// Patches plus the class token.
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t head_dim() const { return embed_dim / num_heads; }
  std::size_t mlp_hidden() const;

  /// Human-readable list of violated constraints; empty when valid.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing every violation.
  void validate() const;

  bool operator==(const ViTConfig&) const = default;
};

/// Desk-scale variant table: tiny (32 dims, 2 heads), small (64, 4),
/// base (128, 8); depth 4, 64-pixel images, 8-pixel patches.
ViTConfig desk_variant(std::string_view name, std::size_t num_findings = 8);

nlohmann::json to_json(const ViTConfig& config);
ViTConfig vit_config_from_json(const nlohmann::json& j);

/// Outputs of one forward pass over a batch of B images.
struct ForwardTrace {
  /// Per-block encoder outputs, each [B, tokens, embed_dim].
  std::vector<Tensor> hidden_states;
  /// Per-block attention probabilities, each [B, heads, tokens, tokens].
  std::vector<Tensor> attentions;
  Tensor mlct_logits;  // [B, num_findings]
  Tensor mcct_logits;  // [B, num_global_classes]

  std::size_t batch_size() const { return mlct_logits.dim(0); }
  std::size_t depth() const { return hidden_states.size(); }
  /// Single-sample trace (batch of one) with detached copies of the values.
  ForwardTrace sample(std::size_t index) const;
};

struct EncoderBlock {
  Tensor norm1_gamma, norm1_beta;
  Tensor q_weight, q_bias, k_weight, k_bias, v_weight, v_bias;
  Tensor out_weight, out_bias;
  Tensor norm2_gamma, norm2_beta;
  Tensor fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

class ViTModel {
 public:
  /// All weights zero; see init_model() for a trainable initialization.
  explicit ViTModel(ViTConfig config);

  const ViTConfig& config() const { return config_; }

  /// Parameters in declaration order (the checkpoint layout).
  NamedParameters named_parameters() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool value);
  void zero_grad();

  /// images: [B, image_size, image_size] with values in [0, 1].
  ForwardTrace forward(const Tensor& images) const;

  /// Deep copy of all parameters.
  ViTModel clone() const;

 private:
  ViTConfig config_;
  Tensor patch_weight_, patch_bias_;
  Tensor cls_token_, pos_embed_;
  std::vector<EncoderBlock> blocks_;
  Tensor final_gamma_, final_beta_;
  Tensor mlct_weight_, mlct_bias_;
  Tensor mcct_weight_, mcct_bias_;
};

/// Truncated normal (σ=0.02, cut at ±2σ) for projections and embeddings,
/// zeros for biases and the class token, identity layer norms.
ViTModel init_model(const ViTConfig& config, std::uint64_t seed);

/// [H, W] -> [patches, patch_size²] or [B, H, W] -> [B, patches, patch_size²].
/// Patches in row-major grid order, pixels row-major within each patch.
Tensor patchify(const Tensor& images, std::size_t patch_size);

/// Per-sample traces for a batch.
std::vector<ForwardTrace> forward(const ViTModel& model, const Tensor& images);

/// Head-averaged class-token attention to the patch tokens of one block,
/// laid out on the patch grid and renormalized to sum to 1: [g, g].
Tensor attention_grid(const ForwardTrace& trace, std::size_t block_index, std::size_t sample = 0);

}  // namespace mlcak
