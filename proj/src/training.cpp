#include "mlcak/training.hpp"

#include <cmath>
#include <fstream>

#include "mlcak/checkpoint.hpp"
#include "mlcak/error.hpp"
#include "mlcak/metrics.hpp"
#include "mlcak/optim.hpp"

namespace mlcak {

namespace {

constexpr std::uint64_t kShuffleSalt = 0x9E3779B97F4A7C15ULL;

std::vector<double> rows_of(const Tensor& t, const std::vector<std::size_t>& rows) {
  const std::size_t inner = t.numel() / t.dim(0);
  auto d = t.data();
  std::vector<double> out;
  out.reserve(rows.size() * inner);
  for (auto r : rows) {
    out.insert(out.end(), d.begin() + static_cast<std::ptrdiff_t>(r * inner),
               d.begin() + static_cast<std::ptrdiff_t>((r + 1) * inner));
  }
  return out;
}

Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  Shape s = t.shape();
  s[0] = rows.size();
  return Tensor(std::move(s), rows_of(t, rows));
}

// Concatenates chunk tensors along the leading axis.
Tensor stack_rows(const std::vector<Tensor>& parts) {
  Shape s = parts.front().shape();
  std::size_t n = 0;
  std::vector<double> values;
  for (const auto& p : parts) {
    n += p.dim(0);
    values.insert(values.end(), p.data().begin(), p.data().end());
  }
  s[0] = n;
  return Tensor(std::move(s), std::move(values));
}

// Hidden states and logits of the frozen teacher over a whole split.
ForwardTrace teacher_outputs(const ViTModel& teacher, const Tensor& images, std::size_t chunk) {
  NoGradGuard no_grad;
  const std::size_t n = images.dim(0);
  std::vector<std::size_t> idx;
  std::vector<std::vector<Tensor>> hidden(teacher.config().depth);
  std::vector<Tensor> mlct, mcct;
  for (std::size_t start = 0; start < n; start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
    auto trace = teacher.forward(gather_rows(images, idx));
    for (std::size_t b = 0; b < trace.depth(); ++b) hidden[b].push_back(trace.hidden_states[b]);
    mlct.push_back(trace.mlct_logits);
    mcct.push_back(trace.mcct_logits);
  }
  ForwardTrace out;
  for (const auto& h : hidden) out.hidden_states.push_back(stack_rows(h));
  out.mlct_logits = stack_rows(mlct);
  out.mcct_logits = stack_rows(mcct);
  return out;
}

ForwardTrace gather_trace(const ForwardTrace& all, const std::vector<std::size_t>& rows) {
  ForwardTrace out;
  for (const auto& h : all.hidden_states) out.hidden_states.push_back(gather_rows(h, rows));
  out.mlct_logits = gather_rows(all.mlct_logits, rows);
  out.mcct_logits = gather_rows(all.mcct_logits, rows);
  return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

void prepare_out_dir(const std::filesystem::path& out) {
  if (out.empty()) throw ConfigError("an output directory (--out) is required");
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
}

ViTModel run_training(const RunConfig& config, const ViTModel* teacher) {
  const auto train = load_split(config.data_dir, "train");
  const auto model_cfg = config.model_config(train.manifest.num_findings);
  model_cfg.validate();
  const auto spec = resolve_resolution(config.resolution, train.native_size(), model_cfg.image_size);

  prepare_out_dir(config.out_dir);
  auto echo = to_json(config);
  echo["model"] = to_json(model_cfg);
  echo["resolution_spec"] = {{"native", spec.native}, {"target", spec.target}, {"model_input", spec.model_input}};
  echo["num_train_samples"] = train.size();
  write_json(config.out_dir / "run_config.json", echo);

  const auto student_data = prepare(train, spec);
  std::optional<PreparedData> teacher_data;
  if (teacher) teacher_data = prepare(train, resolve_resolution("native", train.native_size(), model_cfg.image_size));

  std::ofstream log(config.out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write " + (config.out_dir / "metrics.jsonl").string());
  auto result = train_model(config, model_cfg, student_data, teacher, teacher_data ? &*teacher_data : nullptr,
                            [&log](const nlohmann::json& e) { log << e.dump() << '\n' << std::flush; });
  save_checkpoint(result.model, config.out_dir / "model.ckpt");
  return std::move(result.model);
}

}  // namespace

ViTConfig RunConfig::model_config(std::size_t num_findings) const {
  auto c = desk_variant(variant, num_findings);
  const auto base = c;
  if (depth) c.depth = *depth;
  if (embed_dim) c.embed_dim = *embed_dim;
  if (heads) c.num_heads = *heads;
  if (image_size) c.image_size = *image_size;
  if (patch_size) c.patch_size = *patch_size;
  if (!(c == base)) c.variant_name = "custom";
  return c;
}

void RunConfig::validate() const {
  std::string problems;
  if (epochs == 0) problems += "\n  - epochs must be positive";
  if (batch_size == 0) problems += "\n  - batch_size must be positive";
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) problems += "\n  - lr must be positive";
  if (!(min_lr >= 0.0) || min_lr > base_lr) problems += "\n  - min_lr must lie in [0, lr]";
  if (!(weight_decay >= 0.0)) problems += "\n  - weight_decay must be non-negative";
  for (const auto& [name, v] : {std::pair{"depth", depth}, std::pair{"embed_dim", embed_dim},
                                std::pair{"heads", heads}, std::pair{"image_size", image_size},
                                std::pair{"patch_size", patch_size}}) {
    if (v && *v == 0) problems += std::string("\n  - ") + name + " must be positive";
  }
  if (!problems.empty()) throw ConfigError("invalid run configuration:" + problems);
  kd.validate();
  model_config(1).validate();
}

nlohmann::json to_json(const RunConfig& c) {
  auto opt = [](const std::optional<std::size_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  auto kd = to_json(c.kd);
  return {{"variant", c.variant},
          {"depth", opt(c.depth)},
          {"embed_dim", opt(c.embed_dim)},
          {"heads", opt(c.heads)},
          {"image_size", opt(c.image_size)},
          {"patch_size", opt(c.patch_size)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.base_lr},
          {"min_lr", c.min_lr},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed},
          {"scheme", kd["scheme"]},
          {"alpha", c.kd.alpha},
          {"beta", c.kd.beta},
          {"gamma", c.kd.gamma},
          {"temperature", c.kd.temperature},
          {"resolution", c.resolution},
          {"data", c.data_dir.string()},
          {"teacher", c.teacher.string()},
          {"out", c.out_dir.string()}};
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      auto size_opt = [&v]() -> std::optional<std::size_t> {
        if (v.is_null()) return std::nullopt;
        return v.get<std::size_t>();
      };
      if (key == "variant") c.variant = v.get<std::string>();
      else if (key == "depth") c.depth = size_opt();
      else if (key == "embed_dim") c.embed_dim = size_opt();
      else if (key == "heads") c.heads = size_opt();
      else if (key == "image_size") c.image_size = size_opt();
      else if (key == "patch_size") c.patch_size = size_opt();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "lr") c.base_lr = v.get<double>();
      else if (key == "min_lr") c.min_lr = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "scheme") c.kd.scheme = parse_scheme(v.get<std::string>());
      else if (key == "alpha") c.kd.alpha = v.get<double>();
      else if (key == "beta") c.kd.beta = v.get<double>();
      else if (key == "gamma") c.kd.gamma = v.get<double>();
      else if (key == "temperature") c.kd.temperature = v.get<double>();
      else if (key == "resolution") c.resolution = v.is_string() ? v.get<std::string>() : std::to_string(v.get<std::size_t>());
      else if (key == "data") c.data_dir = v.get<std::string>();
      else if (key == "teacher") c.teacher = v.get<std::string>();
      else if (key == "out") c.out_dir = v.get<std::string>();
      else throw ConfigError("unknown run configuration key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value in run configuration: ") + e.what());
  }
  return c;
}

TrainResult train_model(const RunConfig& config, const ViTConfig& model_config, const PreparedData& student_data,
                        const ViTModel* teacher, const PreparedData* teacher_data, const EpochCallback& on_epoch) {
  config.validate();
  const bool distill = config.kd.scheme != KDScheme::none;
  if (distill && (!teacher || !teacher_data)) throw ContractError("train_model: distillation needs a teacher");
  if (teacher && !(teacher->config() == model_config)) {
    throw ConfigError("teacher and student configurations differ");
  }
  if (teacher_data && teacher_data->size() != student_data.size()) {
    throw ContractError("train_model: teacher and student data differ in size");
  }
  if (student_data.size() == 0) throw ContractError("train_model: empty training set");

  TrainResult result{init_model(model_config, config.seed), {}};
  ViTModel& model = result.model;
  ForwardTrace cached;
  if (distill) cached = teacher_outputs(*teacher, teacher_data->images, config.batch_size);

  AdamW opt(model.named_parameters(), AdamWOptions{.weight_decay = config.weight_decay});
  const std::size_t n = student_data.size();
  const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const CosineSchedule schedule{config.base_lr, config.min_lr, per_epoch * config.epochs};
  const std::uint64_t shuffle_seed = config.seed ^ kShuffleSalt;
  const std::size_t f = model_config.num_findings;
  const std::size_t g = model_config.num_global_classes;

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double sums[6] = {0, 0, 0, 0, 0, 0};
    Predictions seen;
    seen.finding_scores.assign(f, std::vector<double>(n));
    seen.global_scores.assign(n, 0.0);
    const double first_lr = cosine_lr(schedule, step);

    for (const auto& idx : batch_indices(n, config.batch_size, shuffle_seed, epoch)) {
      const auto batch = gather_batch(student_data, idx, g);
      const double lr = cosine_lr(schedule, step);
      Tape tape;
      const auto strace = model.forward(batch.images);
      const auto ttrace = distill ? gather_trace(cached, idx) : ForwardTrace{};
      const auto loss = joint_loss(config.kd, ttrace, strace, batch.findings, batch.global_targets);
      if (!std::isfinite(loss.total)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      tape.backward(loss.total_tensor);
      opt.step(lr);
      opt.zero_grad();
      ++step;

      const double parts[6] = {loss.bce_mlct, loss.bce_mcct, loss.kd_mlct, loss.kd_mcct, loss.kd_feature, loss.total};
      for (int i = 0; i < 6; ++i) sums[i] += parts[i];
      auto ml = strace.mlct_logits.data();
      auto mc = strace.mcct_logits.data();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t k = 0; k < f; ++k) seen.finding_scores[k][idx[i]] = ml[i * f + k];
        seen.global_scores[idx[i]] = mc[i * g + (g - 1)];
      }
    }

    const auto report = score_report(seen, student_data.findings, student_data.global_labels);
    auto opt_json = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    const double inv = 1.0 / static_cast<double>(per_epoch);
    nlohmann::json entry = {{"epoch", epoch},
                            {"lr", first_lr},
                            {"loss",
                             {{"bce_mlct", sums[0] * inv},
                              {"bce_mcct", sums[1] * inv},
                              {"kd_mlct", sums[2] * inv},
                              {"kd_mcct", sums[3] * inv},
                              {"kd_feature", sums[4] * inv},
                              {"total", sums[5] * inv}}},
                            {"train_mlct_macro_auroc", opt_json(report.mlct_macro_auroc)},
                            {"train_mcct_auroc", opt_json(report.mcct_auroc)}};
    if (on_epoch) on_epoch(entry);
    result.epochs.push_back(std::move(entry));
  }
  return result;
}

Dataset load_split(const std::filesystem::path& data_dir, const std::string& split) {
  if (data_dir.empty()) throw ConfigError("a dataset directory (--data) is required");
  return load_dataset(data_dir / (split + ".csv"));
}

ViTModel run_train_teacher(RunConfig config) {
  if (config.resolution != "native" && config.resolution != "224") {
    throw ConfigError("the teacher trains at native resolution; got --resolution " + config.resolution);
  }
  config.resolution = "native";
  config.kd = KDConfig{.scheme = KDScheme::none};
  config.teacher.clear();
  config.validate();
  return run_training(config, nullptr);
}

ViTModel run_train_student(RunConfig config) {
  config.validate();
  const bool distill = config.kd.scheme != KDScheme::none;
  if (!distill) return run_training(config, nullptr);
  if (config.teacher.empty()) {
    throw ConfigError("scheme " + std::string(to_string(config.kd.scheme)) + " needs a teacher checkpoint (--teacher)");
  }
  // Fail on an incompatible teacher before any data is touched.
  const auto teacher_cfg = read_checkpoint_config(config.teacher);
  const auto expected = config.model_config(teacher_cfg.num_findings);
  if (!(teacher_cfg == expected)) {
    throw ConfigError("teacher checkpoint " + config.teacher.string() + " has config " + to_json(teacher_cfg).dump() +
                      " but the student is " + to_json(expected).dump());
  }
  const auto teacher = load_checkpoint(config.teacher, expected);
  return run_training(config, &teacher);
}

}  // namespace mlcak
