#include "mlcak/image.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

#include "mlcak/error.hpp"

namespace mlcak {

namespace {

// One output pixel's contributions along an axis.
struct Tap {
  std::size_t index;
  double weight;
};

std::vector<std::vector<Tap>> area_taps(std::size_t in, std::size_t out) {
  std::vector<std::vector<Tap>> taps(out);
  const double s = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = static_cast<double>(o) * s;
    const double hi = lo + s;
    for (auto i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
      const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) taps[o].push_back({i, overlap / s});
    }
  }
  return taps;
}

std::vector<std::vector<Tap>> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<std::vector<Tap>> taps(out);
  const double s = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * s - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double f = src - static_cast<double>(i0);
    if (i1 == i0 || f == 0.0) {
      taps[o].push_back({i0, 1.0});
    } else {
      taps[o].push_back({i0, 1.0 - f});
      taps[o].push_back({i1, f});
    }
  }
  return taps;
}

Image separable_resample(const Image& image, std::size_t target,
                         std::vector<std::vector<Tap>> (*make_taps)(std::size_t, std::size_t)) {
  const auto tx = make_taps(image.width, target);
  const auto ty = make_taps(image.height, target);
  Image rows(target, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < target; ++x) {
      double acc = 0.0;
      for (const auto& t : tx[x]) acc += t.weight * image.at(t.index, y);
      rows.at(x, y) = acc;
    }
  }
  Image out(target, target);
  for (std::size_t y = 0; y < target; ++y) {
    for (std::size_t x = 0; x < target; ++x) {
      double acc = 0.0;
      for (const auto& t : ty[y]) acc += t.weight * rows.at(x, t.index);
      out.at(x, y) = std::clamp(acc, 0.0, 1.0);
    }
  }
  return out;
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is, std::size_t& line, const std::filesystem::path& path) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      ++line;
      continue;
    }
    if (ch == '\n') ++line;
    if (!std::isspace(ch)) break;
  }
  if (ch == EOF) throw ParseError(path.string() + ":" + std::to_string(line) + ": truncated PGM header");
  tok.push_back(static_cast<char>(ch));
  while ((ch = is.peek()) != EOF && !std::isspace(ch)) tok.push_back(static_cast<char>(is.get()));
  return tok;
}

std::size_t header_number(std::istream& is, std::size_t& line, const std::filesystem::path& path, const char* what) {
  const auto tok = header_token(is, line, path);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v == 0) {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": invalid PGM " + what + " '" + tok + "'");
  }
  return v;
}

}  // namespace

double Image::mean() const {
  double s = 0.0;
  for (double v : pixels) s += v;
  return pixels.empty() ? 0.0 : s / static_cast<double>(pixels.size());
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image " + path.string());
  std::size_t line = 1;
  if (header_token(is, line, path) != "P5") {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": not a binary PGM (expected P5)");
  }
  const auto w = header_number(is, line, path, "width");
  const auto h = header_number(is, line, path, "height");
  const auto maxval = header_number(is, line, path, "maxval");
  if (maxval != 255) {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": unsupported maxval " + std::to_string(maxval));
  }
  is.get();  // single whitespace before the raster
  std::vector<unsigned char> raw(w * h);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size()) {
    throw ParseError(path.string() + ": raster holds " + std::to_string(is.gcount()) + " bytes, expected " +
                     std::to_string(raw.size()));
  }
  Image img(w, h);
  for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
  return img;
}

void save_image(const Image& image, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write image " + path.string());
  os << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0));
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!os) throw IoError("failed writing image " + path.string());
}

Image box_downscale(const Image& image, std::size_t target) {
  if (target == 0 || image.width != image.height || image.width % target != 0) {
    throw ParameterError("box_downscale: " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                         " cannot be reduced evenly to " + std::to_string(target));
  }
  const std::size_t f = image.width / target;
  const double inv = 1.0 / static_cast<double>(f * f);
  Image out(target, target);
  for (std::size_t y = 0; y < target; ++y) {
    for (std::size_t x = 0; x < target; ++x) {
      double acc = 0.0;
      for (std::size_t dy = 0; dy < f; ++dy)
        for (std::size_t dx = 0; dx < f; ++dx) acc += image.at(x * f + dx, y * f + dy);
      out.at(x, y) = std::clamp(acc * inv, 0.0, 1.0);
    }
  }
  return out;
}

Image area_resize(const Image& image, std::size_t target) {
  if (target == 0) throw ParameterError("area_resize: target must be positive");
  return separable_resample(image, target, area_taps);
}

Image bilinear_resize(const Image& image, std::size_t target) {
  if (target == 0) throw ParameterError("bilinear_resize: target must be positive");
  return separable_resample(image, target, bilinear_taps);
}

void ResolutionSpec::validate() const {
  if (native == 0 || target == 0 || model_input == 0) throw ParameterError("resolution sizes must be positive");
  if (target > native) {
    throw ParameterError("resolution target " + std::to_string(target) + " exceeds native " + std::to_string(native));
  }
  if (model_input > native) {
    throw ParameterError("model input " + std::to_string(model_input) + " exceeds native " + std::to_string(native));
  }
  if (!allow_custom && native % target != 0) {
    throw ParameterError("native size " + std::to_string(native) + " is not divisible by target " +
                         std::to_string(target) + " (pass a custom resolution to allow this)");
  }
}

ResolutionSpec resolve_resolution(std::string_view level, std::size_t native, std::size_t model_input) {
  ResolutionSpec spec{native, native, model_input, false};
  std::size_t divisor = 0;
  if (level == "native" || level == "224") {
    divisor = 1;
  } else if (level == "112") {
    divisor = 2;
  } else if (level == "56") {
    divisor = 4;
  } else if (level == "28") {
    divisor = 8;
  }
  if (divisor) {
    if (native % divisor != 0) {
      throw ParameterError("resolution level " + std::string(level) + " needs native size divisible by " +
                           std::to_string(divisor) + ", got " + std::to_string(native));
    }
    spec.target = native / divisor;
  } else {
    std::size_t px = 0;
    const auto [ptr, ec] = std::from_chars(level.data(), level.data() + level.size(), px);
    if (ec != std::errc() || ptr != level.data() + level.size() || px == 0) {
      throw ParameterError("invalid resolution '" + std::string(level) + "' (expected native, 112, 56, 28 or a pixel count)");
    }
    spec.target = px;
    spec.allow_custom = true;
  }
  spec.validate();
  return spec;
}

Image degrade(const Image& image, const ResolutionSpec& spec) {
  spec.validate();
  if (image.width != spec.native || image.height != spec.native) {
    throw ParameterError("degrade: image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                         ", expected native " + std::to_string(spec.native));
  }
  Image low;
  if (spec.target == spec.native) {
    low = image;
  } else if (spec.native % spec.target == 0) {
    low = box_downscale(image, spec.target);
  } else {
    low = area_resize(image, spec.target);
  }
  if (spec.model_input == spec.target) return low;
  if (spec.model_input > spec.target) return bilinear_resize(low, spec.model_input);
  return area_resize(low, spec.model_input);
}

}  // namespace mlcak
