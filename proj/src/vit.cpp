#include "mlcak/vit.hpp"

#include <cmath>
#include <random>

#include "mlcak/error.hpp"
#include "mlcak/ops.hpp"

namespace mlcak {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-6;

void fill_trunc_normal(Tensor& t, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  for (auto& v : t.mutable_data()) {
    double x;
    do {
      x = dist(rng);
    } while (std::abs(x) > 2.0 * kInitStd);
    v = x;
  }
}

Tensor param(Shape shape, double value = 0.0) { return Tensor::full(std::move(shape), value, true); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_broadcast(matmul(x, w), b); }

}  // namespace

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(embed_dim) * mlp_ratio));
}

std::vector<std::string> ViTConfig::violations() const {
  std::vector<std::string> out;
  auto positive = [&](std::size_t v, const char* name) {
    if (v == 0) out.push_back(std::string(name) + " must be positive");
  };
  positive(image_size, "image_size");
  positive(patch_size, "patch_size");
  positive(embed_dim, "embed_dim");
  positive(depth, "depth");
  positive(num_heads, "num_heads");
  positive(num_findings, "num_findings");
  positive(num_global_classes, "num_global_classes");
  if (image_size && patch_size && image_size % patch_size != 0) {
    out.push_back("image_size " + std::to_string(image_size) + " not divisible by patch_size " + std::to_string(patch_size));
  }
  if (embed_dim && num_heads && embed_dim % num_heads != 0) {
    out.push_back("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (!(mlp_ratio > 0.0) || (embed_dim && mlp_hidden() == 0)) out.push_back("mlp_ratio must give a positive hidden size");
  if (variant_name != "tiny" && variant_name != "small" && variant_name != "base" && variant_name != "custom") {
    out.push_back("variant_name must be one of tiny, small, base, custom");
  }
  return out;
}

void ViTConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid ViT configuration:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

ViTConfig desk_variant(std::string_view name, std::size_t num_findings) {
  ViTConfig c;
  c.image_size = 64;
  c.patch_size = 8;
  c.depth = 4;
  c.mlp_ratio = 4.0;
  c.num_findings = num_findings;
  c.variant_name = std::string(name);
  if (name == "tiny") {
    c.embed_dim = 32;
    c.num_heads = 2;
  } else if (name == "small") {
    c.embed_dim = 64;
    c.num_heads = 4;
  } else if (name == "base") {
    c.embed_dim = 128;
    c.num_heads = 8;
  } else {
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected tiny, small or base)");
  }
  return c;
}

nlohmann::json to_json(const ViTConfig& c) {
  return {{"image_size", c.image_size},     {"patch_size", c.patch_size},
          {"embed_dim", c.embed_dim},       {"depth", c.depth},
          {"num_heads", c.num_heads},       {"mlp_ratio", c.mlp_ratio},
          {"num_findings", c.num_findings}, {"num_global_classes", c.num_global_classes},
          {"variant_name", c.variant_name}};
}

ViTConfig vit_config_from_json(const nlohmann::json& j) {
  ViTConfig c;
  try {
    c.image_size = j.at("image_size").get<std::size_t>();
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<double>();
    c.num_findings = j.at("num_findings").get<std::size_t>();
    c.num_global_classes = j.at("num_global_classes").get<std::size_t>();
    c.variant_name = j.at("variant_name").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed ViT configuration: ") + e.what());
  }
  return c;
}

ForwardTrace ForwardTrace::sample(std::size_t index) const {
  auto slice = [index](const Tensor& t) {
    Shape s = t.shape();
    if (index >= s[0]) throw ParameterError("sample index " + std::to_string(index) + " out of range");
    const std::size_t inner = t.numel() / s[0];
    s[0] = 1;
    auto d = t.data().subspan(index * inner, inner);
    return Tensor(std::move(s), std::vector<double>(d.begin(), d.end()));
  };
  ForwardTrace out;
  for (const auto& h : hidden_states) out.hidden_states.push_back(slice(h));
  for (const auto& a : attentions) out.attentions.push_back(slice(a));
  out.mlct_logits = slice(mlct_logits);
  out.mcct_logits = slice(mcct_logits);
  return out;
}

ViTModel::ViTModel(ViTConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto d = config_.embed_dim;
  const auto pp = config_.patch_size * config_.patch_size;
  const auto hidden = config_.mlp_hidden();
  patch_weight_ = param({pp, d});
  patch_bias_ = param({d});
  cls_token_ = param({1, d});
  pos_embed_ = param({config_.num_tokens(), d});
  for (std::size_t i = 0; i < config_.depth; ++i) {
    blocks_.push_back(EncoderBlock{
        param({d}, 1.0), param({d}), param({d, d}), param({d}), param({d, d}), param({d}), param({d, d}), param({d}),
        param({d, d}), param({d}), param({d}, 1.0), param({d}), param({d, hidden}), param({hidden}),
        param({hidden, d}), param({d})});
  }
  final_gamma_ = param({d}, 1.0);
  final_beta_ = param({d});
  mlct_weight_ = param({d, config_.num_findings});
  mlct_bias_ = param({config_.num_findings});
  mcct_weight_ = param({d, config_.num_global_classes});
  mcct_bias_ = param({config_.num_global_classes});
}

NamedParameters ViTModel::named_parameters() const {
  NamedParameters p{{"patch_embed.weight", patch_weight_},
                    {"patch_embed.bias", patch_bias_},
                    {"cls_token", cls_token_},
                    {"pos_embed", pos_embed_}};
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    p.insert(p.end(), {{pre + "norm1.gamma", b.norm1_gamma},
                       {pre + "norm1.beta", b.norm1_beta},
                       {pre + "attn.q.weight", b.q_weight},
                       {pre + "attn.q.bias", b.q_bias},
                       {pre + "attn.k.weight", b.k_weight},
                       {pre + "attn.k.bias", b.k_bias},
                       {pre + "attn.v.weight", b.v_weight},
                       {pre + "attn.v.bias", b.v_bias},
                       {pre + "attn.out.weight", b.out_weight},
                       {pre + "attn.out.bias", b.out_bias},
                       {pre + "norm2.gamma", b.norm2_gamma},
                       {pre + "norm2.beta", b.norm2_beta},
                       {pre + "mlp.fc1.weight", b.fc1_weight},
                       {pre + "mlp.fc1.bias", b.fc1_bias},
                       {pre + "mlp.fc2.weight", b.fc2_weight},
                       {pre + "mlp.fc2.bias", b.fc2_bias}});
  }
  p.insert(p.end(), {{"norm.gamma", final_gamma_},
                     {"norm.beta", final_beta_},
                     {"mlct_head.weight", mlct_weight_},
                     {"mlct_head.bias", mlct_bias_},
                     {"mcct_head.weight", mcct_weight_},
                     {"mcct_head.bias", mcct_bias_}});
  return p;
}

std::size_t ViTModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

void ViTModel::set_requires_grad(bool value) {
  for (auto& [name, t] : named_parameters()) t.set_requires_grad(value);
}

void ViTModel::zero_grad() {
  for (auto& [name, t] : named_parameters()) t.zero_grad();
}

ViTModel ViTModel::clone() const {
  ViTModel copy(config_);
  auto src = named_parameters();
  auto dst = copy.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i].second.data();
    std::copy(s.begin(), s.end(), dst[i].second.mutable_data().begin());
    dst[i].second.set_requires_grad(src[i].second.requires_grad());
  }
  return copy;
}

ForwardTrace ViTModel::forward(const Tensor& images) const {
  const auto& c = config_;
  if (images.rank() != 3 || images.dim(1) != c.image_size || images.dim(2) != c.image_size) {
    throw ShapeError("forward: expected images [B, " + std::to_string(c.image_size) + ", " +
                     std::to_string(c.image_size) + "], got " + shape_string(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  const std::size_t tokens = c.num_tokens();
  const std::size_t heads = c.num_heads;
  const std::size_t hd = c.head_dim();
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  auto patches = linear(patchify(images, c.patch_size), patch_weight_, patch_bias_);
  auto x = concat({expand_leading(cls_token_, batch), patches}, 1);
  x = add_broadcast(x, pos_embed_);

  auto split_heads = [&](const Tensor& t) {
    return permute(reshape(t, {batch, tokens, heads, hd}), {0, 2, 1, 3});
  };

  ForwardTrace trace;
  for (const auto& b : blocks_) {
    auto n1 = layer_norm(x, b.norm1_gamma, b.norm1_beta, kNormEps);
    auto q = split_heads(linear(n1, b.q_weight, b.q_bias));
    auto k = split_heads(linear(n1, b.k_weight, b.k_bias));
    auto v = split_heads(linear(n1, b.v_weight, b.v_bias));
    auto attn = softmax(scale(matmul_transposed(q, k), attn_scale), -1);
    auto ctx = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {batch, tokens, c.embed_dim});
    x = add(x, linear(ctx, b.out_weight, b.out_bias));
    auto n2 = layer_norm(x, b.norm2_gamma, b.norm2_beta, kNormEps);
    x = add(x, linear(gelu(linear(n2, b.fc1_weight, b.fc1_bias)), b.fc2_weight, b.fc2_bias));
    trace.hidden_states.push_back(x);
    trace.attentions.push_back(attn);
  }
  auto cls = select(layer_norm(x, final_gamma_, final_beta_, kNormEps), 1, 0);
  trace.mlct_logits = linear(cls, mlct_weight_, mlct_bias_);
  trace.mcct_logits = linear(cls, mcct_weight_, mcct_bias_);
  return trace;
}

ViTModel init_model(const ViTConfig& config, std::uint64_t seed) {
  ViTModel model(config);
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : model.named_parameters()) {
    const bool is_weight = name.ends_with(".weight") && name.find("norm") == std::string::npos;
    if (is_weight || name == "pos_embed") fill_trunc_normal(t, rng);
  }
  return model;
}

Tensor patchify(const Tensor& images, std::size_t patch_size) {
  const bool batched = images.rank() == 3;
  if (images.rank() != 2 && !batched) {
    throw ShapeError("patchify: expected [H, W] or [B, H, W], got " + shape_string(images.shape()));
  }
  const std::size_t h = images.dim(images.rank() - 2);
  const std::size_t w = images.dim(images.rank() - 1);
  if (h != w) throw ShapeError("patchify: image must be square, got " + shape_string(images.shape()));
  if (patch_size == 0 || h % patch_size != 0) {
    throw ShapeError("patchify: image side " + std::to_string(h) + " not divisible by patch size " +
                     std::to_string(patch_size));
  }
  const std::size_t g = h / patch_size;
  const std::size_t batch = batched ? images.dim(0) : 1;
  auto grid = reshape(images, {batch, g, patch_size, g, patch_size});
  auto out = reshape(permute(grid, {0, 1, 3, 2, 4}), {batch, g * g, patch_size * patch_size});
  return batched ? out : reshape(out, {g * g, patch_size * patch_size});
}

std::vector<ForwardTrace> forward(const ViTModel& model, const Tensor& images) {
  auto trace = model.forward(images);
  std::vector<ForwardTrace> out;
  for (std::size_t i = 0; i < trace.batch_size(); ++i) out.push_back(trace.sample(i));
  return out;
}

Tensor attention_grid(const ForwardTrace& trace, std::size_t block_index, std::size_t sample) {
  if (block_index >= trace.attentions.size()) {
    throw ParameterError("attention_grid: block " + std::to_string(block_index) + " out of range for depth " +
                         std::to_string(trace.attentions.size()));
  }
  const auto& attn = trace.attentions[block_index];
  const std::size_t heads = attn.dim(1);
  const std::size_t tokens = attn.dim(2);
  if (sample >= attn.dim(0)) throw ParameterError("attention_grid: sample index out of range");
  const std::size_t patches = tokens - 1;
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(patches))));
  if (g * g != patches) throw ShapeError("attention_grid: patch count " + std::to_string(patches) + " is not square");

  auto a = attn.data();
  std::vector<double> grid(patches, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    // Row 0 is the class token's query.
    const std::size_t row = ((sample * heads + h) * tokens) * tokens;
    for (std::size_t p = 0; p < patches; ++p) grid[p] += a[row + 1 + p];
  }
  double total = 0.0;
  for (double v : grid) total += v;
  if (total > 0.0) {
    for (auto& v : grid) v /= total;
  } else {
    for (auto& v : grid) v = 1.0 / static_cast<double>(patches);
  }
  return Tensor({g, g}, std::move(grid));
}

}  // namespace mlcak
