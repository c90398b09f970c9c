#include "mlcak/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "mlcak/distill.hpp"
#include "mlcak/error.hpp"

namespace mlcak {

namespace {

constexpr double kBackgroundLevel = 0.30;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int parse_bit(const std::string& cell, const std::filesystem::path& path, std::size_t line, const std::string& column) {
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  throw ParseError(path.string() + ":" + std::to_string(line) + ": column " + column + " must be 0 or 1, got '" + cell +
                   "'");
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(std::uint64_t{index} >> 32)};
  return std::mt19937_64(seq);
}

std::string sample_id(std::size_t index) {
  std::ostringstream os;
  os << 's';
  os.width(5);
  os.fill('0');
  os << index;
  return os.str();
}

std::vector<std::string> default_finding_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < n; ++k) names.push_back("class_" + std::to_string(k));
  return names;
}

}  // namespace

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write manifest " + path.string());
  os << "image_id,image_path,global_label";
  for (const auto& name : manifest.finding_names) os << ",f_" << name;
  os << '\n';
  for (const auto& r : manifest.records) {
    os << r.image_id << ',' << r.image_path << ',' << r.global_label;
    for (int f : r.findings) os << ',' << f;
    os << '\n';
  }
  if (!os) throw IoError("failed writing manifest " + path.string());
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open manifest " + path.string());
  const bool synthetic = std::filesystem::exists(path.parent_path() / "generation.json");

  Manifest m;
  m.split = path.stem().string();
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path.string() + ":1: empty manifest");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "image_id" || header[1] != "image_path" || header[2] != "global_label") {
    throw ParseError(path.string() + ":1: header must start with image_id,image_path,global_label and list findings");
  }
  for (std::size_t c = 3; c < header.size(); ++c) {
    if (header[c].rfind("f_", 0) != 0 || header[c].size() < 3) {
      throw ParseError(path.string() + ":1: finding column '" + header[c] + "' must be named f_<name>");
    }
    m.finding_names.push_back(header[c].substr(2));
  }
  m.num_findings = m.finding_names.size();

  std::set<std::string> seen_paths;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": row has " + std::to_string(cells.size()) +
                       " columns, header has " + std::to_string(header.size()));
    }
    SampleRecord r;
    r.image_id = cells[0];
    r.image_path = cells[1];
    r.global_label = parse_bit(cells[2], path, line_no, "global_label");
    for (std::size_t c = 3; c < cells.size(); ++c) r.findings.push_back(parse_bit(cells[c], path, line_no, header[c]));
    if (!seen_paths.insert(r.image_path).second) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": duplicate image path " + r.image_path);
    }
    const bool any = std::any_of(r.findings.begin(), r.findings.end(), [](int f) { return f == 1; });
    if (any != (r.global_label == 1)) {
      const std::string msg = path.string() + ":" + std::to_string(line_no) + ": global_label " +
                              std::to_string(r.global_label) + " inconsistent with findings of " + r.image_id;
      if (synthetic) throw ParseError(msg);
      std::cerr << "warning: " << msg << '\n';
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

std::array<double, 2> SyntheticConfig::radius_range() const {
  if (blob_radius_range[0] == 0.0 && blob_radius_range[1] == 0.0) {
    const double s = static_cast<double>(image_size);
    return {std::max(2.0, s * 3.0 / 64.0), std::max(2.0, s * 6.0 / 64.0)};
  }
  return blob_radius_range;
}

void SyntheticConfig::validate() const {
  std::string problems;
  const auto r = radius_range();
  if (num_samples == 0) problems += "\n  - num_samples must be positive";
  if (num_findings == 0) problems += "\n  - num_findings must be positive";
  if (image_size < 16) problems += "\n  - image_size must be at least 16";
  if (r[0] < 2.0 || r[1] < r[0]) problems += "\n  - blob radius range must satisfy 2 <= min <= max";
  if (r[1] * 4.0 > static_cast<double>(image_size)) problems += "\n  - blob radius too large for image_size";
  if (!(blob_amplitude > 0.0 && blob_amplitude <= 1.0)) problems += "\n  - blob_amplitude must lie in (0, 1]";
  if (!(noise_sigma >= 0.0)) problems += "\n  - noise_sigma must be non-negative";
  if (!(abnormal_fraction >= 0.0 && abnormal_fraction <= 1.0)) problems += "\n  - abnormal_fraction must lie in [0, 1]";
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) problems += "\n  - test_fraction must lie in [0, 1)";
  if (!problems.empty()) throw ConfigError("invalid synthetic data configuration:" + problems);
}

nlohmann::json to_json(const SyntheticConfig& c) {
  return {{"num_samples", c.num_samples},
          {"num_findings", c.num_findings},
          {"image_size", c.image_size},
          {"blob_radius_range", c.radius_range()},
          {"blob_amplitude", c.blob_amplitude},
          {"noise_sigma", c.noise_sigma},
          {"abnormal_fraction", c.abnormal_fraction},
          {"test_fraction", c.test_fraction},
          {"seed", c.seed}};
}

SyntheticSample render_synthetic_sample(const SyntheticConfig& config, std::size_t index) {
  const auto n = config.image_size;
  const double size = static_cast<double>(n);
  const auto [r_min, r_max] = config.radius_range();
  auto rng = sample_rng(config.seed, index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticSample s;
  s.image = Image(n, n, kBackgroundLevel);
  s.findings.assign(config.num_findings, 0);

  // Smooth low-frequency field.
  for (int c = 0; c < 3; ++c) {
    const double fx = uniform(-1.5, 1.5), fy = uniform(-1.5, 1.5);
    const double phase = uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = uniform(0.02, 0.05);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        s.image.at(x, y) += amp * std::cos(2.0 * std::numbers::pi * (fx * x + fy * y) / size + phase);
  }
  // Rib-like stripes a few blob radii apart.
  {
    const double period = uniform(size / 8.0, size / 5.0);
    const double phase = uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = uniform(0.02, 0.05);
    const double bend = uniform(-0.2, 0.2);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double warp = bend * std::sin(2.0 * std::numbers::pi * x / size) * period;
        s.image.at(x, y) += amp * std::sin(2.0 * std::numbers::pi * (y + warp) / period + phase);
      }
  }
  // Broad faint shadows present in every image; at low resolution they carry
  // about as much energy per cell as a finding blob.
  const int shadows = static_cast<int>(unit(rng) * 3.0);
  for (int d = 0; d < shadows; ++d) {
    const double cx = uniform(0.15, 0.85) * size, cy = uniform(0.15, 0.85) * size;
    const double sigma = uniform(1.2, 2.0) * r_max;
    const double amp = uniform(0.05, 0.09);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        s.image.at(x, y) += amp * std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
      }
  }

  const bool abnormal = unit(rng) < config.abnormal_fraction;
  if (abnormal) {
    const std::size_t max_blobs = std::min<std::size_t>(3, config.num_findings);
    const std::size_t count = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(max_blobs));
    std::vector<std::size_t> classes(config.num_findings);
    for (std::size_t k = 0; k < classes.size(); ++k) classes[k] = k;
    for (std::size_t i = 0; i < std::min(count, max_blobs); ++i) {
      const auto j = i + static_cast<std::size_t>(unit(rng) * static_cast<double>(classes.size() - i));
      std::swap(classes[i], classes[std::min(j, classes.size() - 1)]);
      const std::size_t k = classes[i];

      const double frac = config.num_findings > 1 ? static_cast<double>(k) / static_cast<double>(config.num_findings - 1) : 0.0;
      const double radius = (r_min + (r_max - r_min) * frac) * uniform(0.9, 1.1);
      // Class-specific location prior on a ring around the center.
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(config.num_findings);
      const double margin = radius + 1.0;
      const double cx = std::clamp(size / 2 + 0.28 * size * std::cos(angle) + gauss(rng) * size / 20, margin, size - margin);
      const double cy = std::clamp(size / 2 + 0.28 * size * std::sin(angle) + gauss(rng) * size / 20, margin, size - margin);
      const double aspect = uniform(0.75, 1.33);
      const double theta = uniform(0.0, std::numbers::pi);
      const double amp = config.blob_amplitude * uniform(0.9, 1.1);
      const double ct = std::cos(theta), st = std::sin(theta);
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          const double u = (ct * dx + st * dy) / aspect;
          const double v = (-st * dx + ct * dy) * aspect;
          const double dist = std::sqrt(u * u + v * v);
          s.image.at(x, y) += amp / (1.0 + std::exp((dist - radius) / 0.5));
        }
      s.findings[k] = 1;
      s.blobs.push_back({k, cx, cy, radius});
    }
    s.global_label = 1;
  }

  for (auto& v : s.image.pixels) v = std::clamp(v + config.noise_sigma * gauss(rng), 0.0, 1.0);
  return s;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  SyntheticDataset ds;
  const auto names = default_finding_names(config.num_findings);
  for (auto* m : {&ds.train, &ds.test}) {
    m->num_findings = config.num_findings;
    m->finding_names = names;
  }
  ds.train.split = "train";
  ds.test.split = "test";

  const auto num_train = static_cast<std::size_t>(
      std::ceil(static_cast<double>(config.num_samples) * (1.0 - config.test_fraction)));
  for (std::size_t i = 0; i < config.num_samples; ++i) {
    auto sample = render_synthetic_sample(config, i);
    SampleRecord r{sample_id(i), "images/" + sample_id(i) + ".pgm", sample.findings, sample.global_label};
    save_image(sample.image, out_dir / r.image_path);
    (i < num_train ? ds.train : ds.test).records.push_back(std::move(r));
  }
  save_manifest(ds.train, out_dir / "train.csv");
  save_manifest(ds.test, out_dir / "test.csv");

  nlohmann::json gen = to_json(config);
  gen["version"] = 1;
  gen["finding_names"] = names;
  std::ofstream os(out_dir / "generation.json", std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + (out_dir / "generation.json").string());
  os << gen.dump(2) << '\n';
  return ds;
}

std::size_t Dataset::native_size() const {
  if (images.empty()) throw ContractError("dataset is empty");
  return images.front().width;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  for (const auto& r : ds.manifest.records) {
    auto img = load_image(root / r.image_path);
    if (img.width != img.height) throw ParseError((root / r.image_path).string() + ": image must be square");
    if (!ds.images.empty() && img.width != ds.images.front().width) {
      throw ParseError((root / r.image_path).string() + ": image size differs from the rest of the set");
    }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

PreparedData prepare(const Dataset& dataset, const ResolutionSpec& spec) {
  if (dataset.size() == 0) throw ContractError("prepare: empty dataset");
  const std::size_t n = dataset.size();
  const std::size_t s = spec.model_input;
  const std::size_t f = dataset.manifest.num_findings;
  std::vector<double> pixels;
  pixels.reserve(n * s * s);
  std::vector<double> findings;
  findings.reserve(n * f);
  PreparedData out;
  out.resolution = spec;
  for (std::size_t i = 0; i < n; ++i) {
    const auto img = degrade(dataset.images[i], spec);
    pixels.insert(pixels.end(), img.pixels.begin(), img.pixels.end());
    const auto& r = dataset.manifest.records[i];
    for (int v : r.findings) findings.push_back(v);
    out.global_labels.push_back(r.global_label);
  }
  out.images = Tensor({n, s, s}, std::move(pixels));
  out.findings = Tensor({n, f}, std::move(findings));
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t num_samples, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed, std::uint64_t epoch) {
  if (num_samples == 0) throw ContractError("batches: empty dataset");
  if (batch_size == 0) throw ContractError("batches: batch_size must be at least 1");
  std::vector<std::size_t> order(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) order[i] = i;
  std::mt19937_64 rng(shuffle_seed ^ epoch);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < num_samples; start += batch_size) {
    const auto end = std::min(num_samples, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch gather_batch(const PreparedData& data, const std::vector<std::size_t>& indices, std::size_t num_global_classes) {
  if (indices.empty()) throw ContractError("gather_batch: no indices");
  const std::size_t s = data.images.dim(1);
  const std::size_t pix = s * s;
  const std::size_t f = data.findings.dim(1);
  std::vector<double> images, findings;
  std::vector<int> labels;
  images.reserve(indices.size() * pix);
  findings.reserve(indices.size() * f);
  auto id = data.images.data();
  auto fd = data.findings.data();
  for (auto i : indices) {
    if (i >= data.size()) throw ContractError("gather_batch: index " + std::to_string(i) + " out of range");
    images.insert(images.end(), id.begin() + static_cast<std::ptrdiff_t>(i * pix),
                  id.begin() + static_cast<std::ptrdiff_t>((i + 1) * pix));
    findings.insert(findings.end(), fd.begin() + static_cast<std::ptrdiff_t>(i * f),
                    fd.begin() + static_cast<std::ptrdiff_t>((i + 1) * f));
    labels.push_back(data.global_labels[i]);
  }
  Batch b;
  b.indices = indices;
  b.images = Tensor({indices.size(), s, s}, std::move(images));
  b.findings = Tensor({indices.size(), f}, std::move(findings));
  b.global_targets = one_hot(labels, num_global_classes);
  return b;
}

std::vector<Batch> batches(const PreparedData& data, std::size_t batch_size, std::uint64_t shuffle_seed,
                           std::uint64_t epoch, std::size_t num_global_classes) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(data.size(), batch_size, shuffle_seed, epoch)) {
    out.push_back(gather_batch(data, idx, num_global_classes));
  }
  return out;
}

}  // namespace mlcak
