#pragma once

#include <filesystem>
#include <optional>

#include "mlcak/vit.hpp"

namespace mlcak {

// Checkpoint layout: the 6 bytes "MLCAK1", a little-endian u64 byte length,
// the config as UTF-8 JSON, then every parameter in declaration order as
// little-endian f64.

void save_checkpoint(const ViTModel& model, const std::filesystem::path& path);

/// Reads the config, validates it against `expected` when given (ConfigError
/// on mismatch, before any weights are read), then loads the weights.
ViTModel load_checkpoint(const std::filesystem::path& path, const std::optional<ViTConfig>& expected = std::nullopt);

/// Config stored in a checkpoint header.
ViTConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace mlcak
