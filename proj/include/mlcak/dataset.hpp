#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlcak/image.hpp"
#include "mlcak/tensor.hpp"

namespace mlcak {

struct SampleRecord {
  std::string image_id;
  std::string image_path;  // relative to the manifest directory
  std::vector<int> findings;
  int global_label = 0;  // 0 normal, 1 abnormal

  bool operator==(const SampleRecord&) const = default;
};

struct Manifest {
  int version = 1;
  std::size_t num_findings = 0;
  std::vector<std::string> finding_names;
  std::vector<SampleRecord> records;
  std::string split = "train";

  bool operator==(const Manifest&) const = default;
};

// CSV schema: image_id,image_path,global_label,f_<name1>,...,f_<nameF>
// UTF-8 with LF line endings, 0/1 values.

void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Parses a manifest CSV; the split is taken from the file stem. Records whose
/// global label disagrees with their findings are rejected when the directory
/// holds a generation.json (synthetic data) and only warned about otherwise.
Manifest load_manifest(const std::filesystem::path& path);

struct SyntheticConfig {
  std::size_t num_samples = 512;
  std::size_t num_findings = 8;
  std::size_t image_size = 224;
  /// Blob radius range in native pixels; {0, 0} selects 3/64 .. 6/64 of image_size.
  std::array<double, 2> blob_radius_range{0.0, 0.0};
  double blob_amplitude = 0.3;
  double noise_sigma = 0.03;
  double abnormal_fraction = 0.5;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  std::array<double, 2> radius_range() const;
  void validate() const;
};

nlohmann::json to_json(const SyntheticConfig& config);

/// Where each planted blob went; kept for localization checks.
struct PlantedBlob {
  std::size_t finding = 0;
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
};

struct SyntheticSample {
  Image image;
  std::vector<int> findings;
  int global_label = 0;
  std::vector<PlantedBlob> blobs;
};

/// Renders sample `index` of a synthetic set; a pure function of (config, index).
SyntheticSample render_synthetic_sample(const SyntheticConfig& config, std::size_t index);

struct SyntheticDataset {
  Manifest train;
  Manifest test;
};

/// Writes <out_dir>/images/*.pgm, train.csv, test.csv and generation.json.
SyntheticDataset generate_synthetic(const SyntheticConfig& config, const std::filesystem::path& out_dir);

/// A manifest with its images loaded at native resolution.
struct Dataset {
  Manifest manifest;
  std::vector<Image> images;

  std::size_t size() const { return images.size(); }
  std::size_t native_size() const;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Model-ready tensors for a whole split at one resolution.
struct PreparedData {
  Tensor images;    // [N, model_input, model_input]
  Tensor findings;  // [N, F]
  std::vector<int> global_labels;
  ResolutionSpec resolution;

  std::size_t size() const { return global_labels.size(); }
};

PreparedData prepare(const Dataset& dataset, const ResolutionSpec& spec);

struct Batch {
  std::vector<std::size_t> indices;  // rows of the PreparedData
  Tensor images;
  Tensor findings;
  Tensor global_targets;  // one-hot [B, num_global_classes]
};

/// Shuffled index batches; the permutation is seeded with shuffle_seed XOR
/// epoch, and the final partial batch is kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t num_samples, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed, std::uint64_t epoch);

Batch gather_batch(const PreparedData& data, const std::vector<std::size_t>& indices,
                   std::size_t num_global_classes = 2);

std::vector<Batch> batches(const PreparedData& data, std::size_t batch_size, std::uint64_t shuffle_seed,
                           std::uint64_t epoch, std::size_t num_global_classes = 2);

}  // namespace mlcak
