#pragma once

#include <cstddef>
#include <filesystem>
#include <string_view>
#include <vector>

namespace mlcak {

/// Square or rectangular grayscale image, row-major, values nominally in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  double mean() const;
};

/// Binary "P5" PGM with maxval 255; pixels are divided by 255 on load.
Image load_image(const std::filesystem::path& path);
/// Clamps to [0, 1] and rounds to 8 bits.
void save_image(const Image& image, const std::filesystem::path& path);

/// Area-average downscale by an integer factor (size must divide evenly).
Image box_downscale(const Image& image, std::size_t target);
/// Exact fractional-coverage area average for arbitrary target sizes.
Image area_resize(const Image& image, std::size_t target);
/// Bilinear resampling with half-pixel centers and edge clamping.
Image bilinear_resize(const Image& image, std::size_t target);

/// Resolution chain of one experiment: images are stored at `native`, reduced
/// to `target`, then brought to the model input size.
struct ResolutionSpec {
  std::size_t native = 224;
  std::size_t target = 224;
  std::size_t model_input = 224;
  /// Permits targets that do not divide `native`.
  bool allow_custom = false;

  void validate() const;
  bool is_native() const { return target == native; }
};

/// Parses a resolution level. "native", "112", "56" and "28" are the
/// 224-equivalent levels and scale with `native` (28 means native/8); any
/// other integer is a literal pixel count and enables allow_custom.
ResolutionSpec resolve_resolution(std::string_view level, std::size_t native, std::size_t model_input);

/// Box-filter downscale native -> target followed by bilinear upscale
/// target -> model_input (area average when the model input is smaller).
/// Output values stay in [0, 1].
Image degrade(const Image& image, const ResolutionSpec& spec);

}  // namespace mlcak
