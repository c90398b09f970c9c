#include "doctest.h"

#include <cmath>
#include <fstream>
#include <map>

#include "grad_cases.hpp"
#include "mlcak/checkpoint.hpp"
#include "mlcak/error.hpp"
#include "mlcak/vit.hpp"

using namespace mlcak;
using namespace mlcak::testing;

namespace {

using Mat = std::vector<std::vector<double>>;

// Loop-based forward pass of one image written straight from the
// architecture description, used as an oracle for ViTModel::forward.
struct Reference {
  std::vector<Mat> hidden;
  std::vector<double> mlct, mcct;
};

Reference reference_forward(const ViTModel& model, const std::vector<double>& image) {
  const auto& c = model.config();
  std::map<std::string, std::vector<double>> w;
  for (const auto& [name, t] : model.named_parameters()) w[name] = values(t);
  const std::size_t d = c.embed_dim, s = c.image_size, p = c.patch_size, g = s / p, n = g * g + 1;

  auto affine = [](const Mat& x, const std::vector<double>& W, const std::vector<double>& b) {
    const std::size_t out = b.size(), in = x[0].size();
    Mat y(x.size(), std::vector<double>(out));
    for (std::size_t r = 0; r < x.size(); ++r)
      for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < in; ++i) acc += x[r][i] * W[i * out + o];
        y[r][o] = acc;
      }
    return y;
  };
  auto norm = [](const Mat& x, const std::vector<double>& gamma, const std::vector<double>& beta) {
    Mat y = x;
    for (auto& row : y) {
      double mu = 0, var = 0;
      for (double v : row) mu += v;
      mu /= row.size();
      for (double v : row) var += (v - mu) * (v - mu);
      var /= row.size();
      for (std::size_t i = 0; i < row.size(); ++i) row[i] = (row[i] - mu) / std::sqrt(var + 1e-6) * gamma[i] + beta[i];
    }
    return y;
  };

  Mat patches(g * g, std::vector<double>(p * p));
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx)
      for (std::size_t py = 0; py < p; ++py)
        for (std::size_t px = 0; px < p; ++px)
          patches[gy * g + gx][py * p + px] = image[(gy * p + py) * s + gx * p + px];
  const auto emb = affine(patches, w["patch_embed.weight"], w["patch_embed.bias"]);
  Mat x(n, std::vector<double>(d));
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < d; ++i)
      x[t][i] = (t == 0 ? w["cls_token"][i] : emb[t - 1][i]) + w["pos_embed"][t * d + i];

  Reference ref;
  const std::size_t heads = c.num_heads, hd = d / heads;
  for (std::size_t blk = 0; blk < c.depth; ++blk) {
    const std::string pre = "blocks." + std::to_string(blk) + ".";
    const auto h = norm(x, w[pre + "norm1.gamma"], w[pre + "norm1.beta"]);
    const auto q = affine(h, w[pre + "attn.q.weight"], w[pre + "attn.q.bias"]);
    const auto k = affine(h, w[pre + "attn.k.weight"], w[pre + "attn.k.bias"]);
    const auto v = affine(h, w[pre + "attn.v.weight"], w[pre + "attn.v.bias"]);
    Mat ctx(n, std::vector<double>(d, 0.0));
    for (std::size_t hh = 0; hh < heads; ++hh) {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sc(n);
        double mx = -INFINITY;
        for (std::size_t j = 0; j < n; ++j) {
          double dot = 0;
          for (std::size_t e = 0; e < hd; ++e) dot += q[i][hh * hd + e] * k[j][hh * hd + e];
          sc[j] = dot / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, sc[j]);
        }
        double z = 0;
        for (auto& e : sc) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t e = 0; e < hd; ++e) ctx[i][hh * hd + e] += sc[j] / z * v[j][hh * hd + e];
      }
    }
    const auto o = affine(ctx, w[pre + "attn.out.weight"], w[pre + "attn.out.bias"]);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t i = 0; i < d; ++i) x[t][i] += o[t][i];
    auto m = affine(norm(x, w[pre + "norm2.gamma"], w[pre + "norm2.beta"]), w[pre + "mlp.fc1.weight"],
                    w[pre + "mlp.fc1.bias"]);
    for (auto& row : m)
      for (auto& e : row) e = 0.5 * e * (1.0 + std::erf(e / std::sqrt(2.0)));
    const auto m2 = affine(m, w[pre + "mlp.fc2.weight"], w[pre + "mlp.fc2.bias"]);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t i = 0; i < d; ++i) x[t][i] += m2[t][i];
    ref.hidden.push_back(x);
  }
  const auto cls = Mat{norm(x, w["norm.gamma"], w["norm.beta"])[0]};
  ref.mlct = affine(cls, w["mlct_head.weight"], w["mlct_head.bias"])[0];
  ref.mcct = affine(cls, w["mcct_head.weight"], w["mcct_head.bias"])[0];
  return ref;
}

}  // namespace

TEST_CASE("config validation lists every violation") {
  ViTConfig c;
  c.image_size = 30;
  c.patch_size = 16;
  c.embed_dim = 10;
  c.num_heads = 3;
  const auto v = c.violations();
  CHECK(v.size() >= 2);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ViTConfig{}.violations().empty());
  CHECK_THROWS_AS(desk_variant("huge"), ConfigError);
}

TEST_CASE("desk variants") {
  const auto t = desk_variant("tiny");
  CHECK(t.embed_dim == 32);
  CHECK(t.num_heads == 2);
  CHECK(t.depth == 4);
  CHECK(t.num_tokens() == 65);
  CHECK(desk_variant("small").embed_dim == 64);
  CHECK(desk_variant("base").num_heads == 8);
  CHECK(vit_config_from_json(to_json(t)) == t);
}

TEST_CASE("patchify layout") {
  std::vector<double> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = static_cast<double>(i);
  const auto p = patchify(Tensor({4, 4}, v), 2);
  CHECK(p.shape() == Shape{4, 4});
  CHECK(values(select(p, 0, 0)) == std::vector<double>{0, 1, 4, 5});
  CHECK(values(select(p, 0, 3)) == std::vector<double>{10, 11, 14, 15});
  CHECK_THROWS_AS(patchify(Tensor::zeros({5, 5}), 2), ShapeError);
}

TEST_CASE("forward matches the loop reference") {
  auto model = micro_model(21);
  std::mt19937_64 rng(3);
  const auto images = random_tensor(rng, {2, 8, 8}, 0, 1);
  const auto trace = model.forward(images);
  CHECK(trace.depth() == 2);
  CHECK(trace.hidden_states[0].shape() == Shape{2, 5, 4});
  CHECK(trace.attentions[0].shape() == Shape{2, 2, 5, 5});
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<double> img(images.data().begin() + b * 64, images.data().begin() + (b + 1) * 64);
    const auto ref = reference_forward(model, img);
    const auto one = trace.sample(b);
    CHECK(max_abs_diff(values(one.mlct_logits), ref.mlct) < 1e-10);
    CHECK(max_abs_diff(values(one.mcct_logits), ref.mcct) < 1e-10);
    for (std::size_t blk = 0; blk < 2; ++blk) {
      std::vector<double> flat;
      for (const auto& row : ref.hidden[blk]) flat.insert(flat.end(), row.begin(), row.end());
      CHECK(max_abs_diff(values(one.hidden_states[blk]), flat) < 1e-10);
    }
  }
}

TEST_CASE("batch rows are independent") {
  const auto model = init_model(desk_variant("tiny", 3), 4);
  std::mt19937_64 rng(6);
  const auto images = random_tensor(rng, {3, 64, 64}, 0, 1);
  NoGradGuard ng;
  const auto all = forward(model, images);
  const auto single = model.forward(Tensor({1, 64, 64}, std::vector<double>(images.data().begin() + 64 * 64,
                                                                           images.data().begin() + 2 * 64 * 64)));
  CHECK(max_abs_diff(values(all[1].mlct_logits), values(single.mlct_logits)) < 1e-12);
}

TEST_CASE("attention rows are distributions") {
  const auto model = micro_model(8);
  std::mt19937_64 rng(1);
  const auto trace = model.forward(random_tensor(rng, {1, 8, 8}, 0, 1));
  const auto a = trace.attentions[1].data();
  for (std::size_t r = 0; r < a.size() / 5; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += a[r * 5 + j];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  const auto grid = attention_grid(trace, 1);
  CHECK(grid.shape() == Shape{2, 2});
  double total = 0;
  for (double v : grid.data()) total += v;
  CHECK(std::abs(total - 1.0) < 1e-12);
  CHECK_THROWS_AS(attention_grid(trace, 2), ParameterError);
}

TEST_CASE("parameter layout and init") {
  const auto cfg = desk_variant("tiny");
  const auto m = init_model(cfg, 1);
  const auto params = m.named_parameters();
  CHECK(params.front().first == "patch_embed.weight");
  CHECK(params[4].first == "blocks.0.norm1.gamma");
  CHECK(params.back().first == "mcct_head.bias");
  CHECK(params.size() == 4 + 16 * cfg.depth + 6);
  const std::size_t d = 32, h = 128;
  const std::size_t per_block = 4 * d + 4 * (d * d + d) + d * h + h + h * d + d;
  CHECK(m.parameter_count() == 64 * d + d + d + 65 * d + 4 * per_block + 2 * d + d * 8 + 8 + d * 2 + 2);

  for (const auto& [name, t] : params) {
    if (name.find("gamma") != std::string::npos) {
      CHECK(values(t) == std::vector<double>(t.numel(), 1.0));
      continue;
    }
    for (double v : t.data()) CHECK(std::abs(v) <= 0.04 + 1e-15);
    if (name.ends_with(".bias") || name == "cls_token") CHECK(values(t) == std::vector<double>(t.numel(), 0.0));
  }
  const auto again = init_model(cfg, 1);
  const auto other = init_model(cfg, 2);
  CHECK(values(again.named_parameters()[0].second) == values(params[0].second));
  CHECK(values(other.named_parameters()[0].second) != values(params[0].second));
}

TEST_CASE("checkpoint round trip") {
  const auto dir = scratch_dir("ckpt");
  const auto model = micro_model(5);
  save_checkpoint(model, dir / "m.ckpt");
  const auto loaded = load_checkpoint(dir / "m.ckpt", model.config());
  const auto a = model.named_parameters();
  const auto b = loaded.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(values(a[i].second) == values(b[i].second));
  CHECK(read_checkpoint_config(dir / "m.ckpt") == model.config());

  auto other = model.config();
  other.depth = 3;
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt", other), ConfigError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);

  std::filesystem::resize_file(dir / "m.ckpt", std::filesystem::file_size(dir / "m.ckpt") - 8);
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt"), ParseError);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), ParseError);
}

TEST_CASE("clone is deep") {
  auto model = micro_model(5);
  auto copy = model.clone();
  copy.named_parameters()[0].second.mutable_data()[0] += 1.0;
  CHECK(model.named_parameters()[0].second.data()[0] != copy.named_parameters()[0].second.data()[0]);
}
