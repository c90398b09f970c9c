#include "mlcak/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlcak/error.hpp"
#include "mlcak/ops.hpp"

namespace mlcak {

std::optional<double> auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("auroc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                        " labels");
  }
  if (scores.empty()) throw ContractError("auroc: no samples");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of mid-ranks of the positives (1-based ranks, ties share the mean).
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += mid;
        ++pos;
      } else if (labels[order[k]] != 0) {
        throw ContractError("auroc: labels must be 0 or 1");
      }
    }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

std::optional<double> macro_mean(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

nlohmann::json to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t k = 0; k < r.per_finding.size(); ++k) {
    const auto name = k < r.finding_names.size() ? r.finding_names[k] : "finding_" + std::to_string(k);
    per[name] = opt(r.per_finding[k]);
  }
  nlohmann::json res = {{"level", r.resolution_level},
                        {"native", r.resolution.native},
                        {"target", r.resolution.target},
                        {"model_input", r.resolution.model_input}};
  if (!r.resolution.allow_custom && r.resolution.native % r.resolution.target == 0) {
    res["equivalent_224"] = 224 / (r.resolution.native / r.resolution.target);
  }
  return {{"mlct_macro_auroc", opt(r.mlct_macro_auroc)},
          {"mcct_auroc", opt(r.mcct_auroc)},
          {"per_finding", per},
          {"resolution", res},
          {"scheme", r.scheme},
          {"num_samples", r.num_samples}};
}

Predictions predict(const ViTModel& model, const Tensor& images, std::size_t chunk) {
  if (images.rank() != 3 || images.dim(0) == 0) throw ContractError("predict: expected images [N, S, S]");
  const std::size_t n = images.dim(0);
  const std::size_t pix = images.dim(1) * images.dim(2);
  const std::size_t f = model.config().num_findings;
  const std::size_t g = model.config().num_global_classes;
  Predictions out;
  out.finding_scores.assign(f, std::vector<double>(n));
  out.global_scores.resize(n);
  NoGradGuard no_grad;
  auto all = images.data();
  auto sigmoid = [](double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); };
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t b = std::min(chunk, n - start);
    Tensor part({b, images.dim(1), images.dim(2)},
                std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(start * pix),
                                    all.begin() + static_cast<std::ptrdiff_t>((start + b) * pix)));
    const auto trace = model.forward(part);
    auto ml = trace.mlct_logits.data();
    auto mc = trace.mcct_logits.data();
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t k = 0; k < f; ++k) out.finding_scores[k][start + i] = sigmoid(ml[i * f + k]);
      out.global_scores[start + i] = sigmoid(mc[i * g + (g - 1)]);
    }
  }
  return out;
}

EvalReport score_report(const Predictions& p, const Tensor& finding_labels, const std::vector<int>& global_labels) {
  const std::size_t n = global_labels.size();
  const std::size_t f = p.finding_scores.size();
  if (finding_labels.rank() != 2 || finding_labels.dim(0) != n || finding_labels.dim(1) != f) {
    throw ContractError("score_report: labels " + shape_string(finding_labels.shape()) + " do not match " +
                        std::to_string(n) + " samples x " + std::to_string(f) + " findings");
  }
  EvalReport r;
  r.num_samples = n;
  auto fl = finding_labels.data();
  for (std::size_t k = 0; k < f; ++k) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = fl[i * f + k] > 0.5 ? 1 : 0;
    r.per_finding.push_back(auroc(p.finding_scores[k], labels));
  }
  r.mlct_macro_auroc = macro_mean(r.per_finding);
  r.mcct_auroc = auroc(p.global_scores, global_labels);
  return r;
}

EvalReport evaluate(const ViTModel& model, const PreparedData& data, const std::vector<std::string>& finding_names,
                    const std::string& scheme, const std::string& resolution_level) {
  if (data.size() == 0) throw ContractError("evaluate: empty test set");
  if (data.images.dim(1) != model.config().image_size) {
    throw ContractError("evaluate: images are " + std::to_string(data.images.dim(1)) + " px but the model expects " +
                        std::to_string(model.config().image_size));
  }
  if (data.findings.dim(1) != model.config().num_findings) {
    throw ContractError("evaluate: data has " + std::to_string(data.findings.dim(1)) + " findings, model has " +
                        std::to_string(model.config().num_findings));
  }
  auto r = score_report(predict(model, data.images), data.findings, data.global_labels);
  r.finding_names = finding_names;
  r.resolution = data.resolution;
  r.resolution_level = resolution_level;
  r.scheme = scheme;
  return r;
}

Image attention_heatmap(const Tensor& grid, std::size_t upscale_to) {
  if (grid.rank() != 2 || grid.dim(0) != grid.dim(1)) throw ShapeError("attention_heatmap: grid must be square");
  const std::size_t g = grid.dim(0);
  if (upscale_to < g) {
    throw ParameterError("attention_heatmap: upscale_to " + std::to_string(upscale_to) + " is smaller than grid " +
                         std::to_string(g));
  }
  auto d = grid.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double range = *hi - *lo;
  Image out(upscale_to, upscale_to);
  for (std::size_t y = 0; y < upscale_to; ++y) {
    for (std::size_t x = 0; x < upscale_to; ++x) {
      const std::size_t gx = x * g / upscale_to, gy = y * g / upscale_to;
      const double v = range > 0.0 ? (d[gy * g + gx] - *lo) / range : 128.0 / 255.0;
      out.at(x, y) = std::round(v * 255.0) / 255.0;
    }
  }
  return out;
}

Image export_attention(const ForwardTrace& trace, std::size_t block_index, const std::filesystem::path& out_path,
                       std::size_t upscale_to) {
  auto img = attention_heatmap(attention_grid(trace, block_index), upscale_to);
  save_image(img, out_path);
  return img;
}

std::pair<std::size_t, std::size_t> argmax_cell(const Tensor& grid) {
  if (grid.rank() != 2) throw ShapeError("argmax_cell: expected a 2-D grid");
  auto d = grid.data();
  const auto i = static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
  return {i % grid.dim(1), i / grid.dim(1)};
}

}  // namespace mlcak
