#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlcak/dataset.hpp"
#include "mlcak/image.hpp"
#include "mlcak/vit.hpp"

namespace mlcak {

/// Mann-Whitney AUROC: share of (positive, negative) pairs ranked correctly,
/// ties counting one half. Empty when either class is absent.
std::optional<double> auroc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Macro mean over the defined entries; empty when none is defined.
std::optional<double> macro_mean(const std::vector<std::optional<double>>& values);

struct EvalReport {
  std::vector<std::string> finding_names;
  std::vector<std::optional<double>> per_finding;
  std::optional<double> mlct_macro_auroc;
  std::optional<double> mcct_auroc;
  std::size_t num_samples = 0;
  std::string resolution_level = "native";
  ResolutionSpec resolution;
  std::string scheme = "none";
};

/// Fixed keys: mlct_macro_auroc, mcct_auroc, per_finding, resolution, scheme,
/// num_samples. Undefined AUROCs serialize as null.
nlohmann::json to_json(const EvalReport& report);

/// Sigmoid scores per finding and sigmoid of the abnormal logit.
struct Predictions {
  std::vector<std::vector<double>> finding_scores;  // [F][N]
  std::vector<double> global_scores;                // [N]
};

Predictions predict(const ViTModel& model, const Tensor& images, std::size_t chunk = 64);

/// AUROCs from predicted scores. finding_labels is [N, F].
EvalReport score_report(const Predictions& predictions, const Tensor& finding_labels,
                        const std::vector<int>& global_labels);

EvalReport evaluate(const ViTModel& model, const PreparedData& data, const std::vector<std::string>& finding_names,
                    const std::string& scheme, const std::string& resolution_level = "native");

/// Min-max normalizes the grid to 0..255 (a constant grid becomes 128) and
/// upscales with nearest neighbour to upscale_to x upscale_to.
Image attention_heatmap(const Tensor& grid, std::size_t upscale_to);

/// Writes the heatmap of one block of a single-sample trace as PGM.
Image export_attention(const ForwardTrace& trace, std::size_t block_index, const std::filesystem::path& out_path,
                       std::size_t upscale_to);

/// Grid cell (x, y) of the largest entry; the first one wins on ties.
std::pair<std::size_t, std::size_t> argmax_cell(const Tensor& grid);

}  // namespace mlcak
