#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlcak/dataset.hpp"
#include "mlcak/distill.hpp"
#include "mlcak/vit.hpp"

namespace mlcak {

struct RunConfig {
  std::string variant = "tiny";
  // Overrides applied on top of the variant.
  std::optional<std::size_t> depth, embed_dim, heads, image_size, patch_size;

  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double base_lr = 5e-4;
  double min_lr = 0.0;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  KDConfig kd{};
  std::string resolution = "native";

  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::filesystem::path teacher;

  /// Variant table entry with the overrides applied; renamed "custom" when an
  /// override changes it.
  ViTConfig model_config(std::size_t num_findings) const;
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Applies the keys present in `j` on top of `base`; unknown keys are a ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

struct TrainResult {
  ViTModel model;
  std::vector<nlohmann::json> epochs;  // one object per epoch
};

using EpochCallback = std::function<void(const nlohmann::json&)>;

/// Trains a freshly initialized student on `student_data`. With a KD scheme
/// other than none the frozen `teacher` sees `teacher_data` (same samples, in
/// the same order); its outputs are computed once up front.
TrainResult train_model(const RunConfig& config, const ViTConfig& model_config, const PreparedData& student_data,
                        const ViTModel* teacher = nullptr, const PreparedData* teacher_data = nullptr,
                        const EpochCallback& on_epoch = {});

/// File-level runs: write <out>/run_config.json before the first step, then
/// <out>/metrics.jsonl and <out>/model.ckpt. The teacher always trains at
/// native resolution without distillation.
ViTModel run_train_teacher(RunConfig config);
ViTModel run_train_student(RunConfig config);

/// Loads <data_dir>/<split>.csv and its images.
Dataset load_split(const std::filesystem::path& data_dir, const std::string& split);

}  // namespace mlcak
