#include <charconv>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "mlcak/checkpoint.hpp"
#include "mlcak/dataset.hpp"
#include "mlcak/error.hpp"
#include "mlcak/metrics.hpp"
#include "mlcak/training.hpp"

using namespace mlcak;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

// Flags shared by both training commands; unset flags leave the config file
// (or the built-in default) alone.
struct TrainFlags {
  std::string config_path;
  std::string variant;
  std::size_t depth = 0, embed_dim = 0, heads = 0, image_size = 0, patch_size = 0;
  std::size_t epochs = 0, batch_size = 0;
  double lr = 0, alpha = 0, beta = 0, gamma = 0, temperature = 0;
  std::uint64_t seed = 0;
  std::string scheme, resolution, data, teacher, out;
  bool resume = false;
  CLI::App* app = nullptr;

  void add_to(CLI::App* sub, bool student) {
    app = sub;
    sub->add_option("--config", config_path, "JSON run configuration; flags override it");
    sub->add_option("--variant", variant, "tiny, small or base");
    sub->add_option("--depth", depth, "encoder blocks");
    sub->add_option("--embed-dim", embed_dim, "token width");
    sub->add_option("--heads", heads, "attention heads");
    sub->add_option("--image-size", image_size, "model input size in pixels");
    sub->add_option("--patch-size", patch_size, "patch size in pixels");
    sub->add_option("--epochs", epochs, "training epochs (default 100)");
    sub->add_option("--batch-size", batch_size, "batch size (default 64)");
    sub->add_option("--lr", lr, "initial learning rate (default 5e-4)");
    sub->add_option("--seed", seed, "initialization and shuffling seed");
    sub->add_option("--data", data, "dataset directory holding train.csv");
    sub->add_option("--out", out, "run output directory");
    sub->add_flag("--resume", resume, "not supported");
    sub->add_option("--resolution", resolution, "native, 112, 56, 28 or a pixel count");
    if (student) {
      sub->add_option("--scheme", scheme, "none, vanilla, last_block, one_to_one or mlcak");
      sub->add_option("--alpha", alpha, "weight of the multi-label logit transfer");
      sub->add_option("--beta", beta, "weight of the global logit transfer");
      sub->add_option("--gamma", gamma, "weight of the feature transfer");
      sub->add_option("--temperature", temperature, "softening temperature (vanilla)");
      sub->add_option("--teacher", teacher, "teacher checkpoint");
    }
  }

  bool given(const std::string& flag) const {
    auto* opt = app->get_option_no_throw(flag);
    return opt && opt->count() > 0;
  }

  RunConfig resolve() const {
    if (resume) throw ConfigError("resuming a run is not supported; start a new run instead");
    RunConfig c;
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw IoError("cannot open config file " + config_path);
      nlohmann::json j;
      try {
        is >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(config_path + ": " + e.what());
      }
      c = run_config_from_json(j);
    }
    if (given("--variant")) c.variant = variant;
    if (given("--depth")) c.depth = depth;
    if (given("--embed-dim")) c.embed_dim = embed_dim;
    if (given("--heads")) c.heads = heads;
    if (given("--image-size")) c.image_size = image_size;
    if (given("--patch-size")) c.patch_size = patch_size;
    if (given("--epochs")) c.epochs = epochs;
    if (given("--batch-size")) c.batch_size = batch_size;
    if (given("--lr")) c.base_lr = lr;
    if (given("--seed")) c.seed = seed;
    if (given("--data")) c.data_dir = data;
    if (given("--out")) c.out_dir = out;
    if (given("--resolution")) c.resolution = resolution;
    if (given("--scheme")) c.kd.scheme = parse_scheme(scheme);
    if (given("--alpha")) c.kd.alpha = alpha;
    if (given("--beta")) c.kd.beta = beta;
    if (given("--gamma")) c.kd.gamma = gamma;
    if (given("--temperature")) c.kd.temperature = temperature;
    if (given("--teacher")) c.teacher = teacher;
    return c;
  }
};

std::size_t parse_block(const std::string& text, std::size_t depth) {
  if (text == "last") return depth - 1;
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParameterError("--block must be an index or 'last', got '" + text + "'");
  }
  if (v >= depth) {
    throw ParameterError("--block " + text + " out of range for depth " + std::to_string(depth));
  }
  return v;
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-level encoder distillation from high- to low-resolution vision transformers"};
  app.require_subcommand(1);

  SyntheticConfig synth;
  synth.image_size = 64;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth-data", "generate a synthetic finding dataset");
  synth_cmd->add_option("--samples", synth.num_samples, "number of images")->capture_default_str();
  synth_cmd->add_option("--findings", synth.num_findings, "finding classes")->capture_default_str();
  synth_cmd->add_option("--image-size", synth.image_size, "native image size")->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  synth_cmd->add_option("--abnormal-fraction", synth.abnormal_fraction, "share of abnormal images")
      ->capture_default_str();
  synth_cmd->add_option("--test-fraction", synth.test_fraction, "share held out as test")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "generation seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  TrainFlags teacher_flags, student_flags;
  auto* teacher_cmd = app.add_subcommand("train-teacher", "train the high-resolution teacher");
  teacher_flags.add_to(teacher_cmd, false);
  auto* student_cmd = app.add_subcommand("train-student", "train a low-resolution student");
  student_flags.add_to(student_cmd, true);

  std::string eval_ckpt, eval_data, eval_split = "test", eval_resolution = "native", eval_scheme, eval_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "AUROC report of a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--split", eval_split, "manifest name without .csv")->capture_default_str();
  eval_cmd->add_option("--resolution", eval_resolution, "native, 112, 56, 28 or a pixel count")
      ->capture_default_str();
  eval_cmd->add_option("--scheme", eval_scheme, "scheme label for the report (default: from run_config.json)");
  eval_cmd->add_option("--out", eval_out, "also write the report to this file");

  std::string att_ckpt, att_image, att_resolution = "native", att_block = "last", att_out;
  std::size_t att_upscale = 0;
  auto* att_cmd = app.add_subcommand("export-attention", "write a class-token attention heatmap as PGM");
  att_cmd->add_option("--checkpoint", att_ckpt, "model checkpoint")->required();
  att_cmd->add_option("--image", att_image, "native-resolution PGM")->required();
  att_cmd->add_option("--resolution", att_resolution, "native, 112, 56, 28 or a pixel count")->capture_default_str();
  att_cmd->add_option("--block", att_block, "block index or 'last'")->capture_default_str();
  att_cmd->add_option("--upscale", att_upscale, "output size (default: native image size)");
  att_cmd->add_option("--out", att_out, "output PGM")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*synth_cmd) {
    const auto ds = generate_synthetic(synth, synth_out);
    std::cout << "wrote " << ds.train.records.size() << " train and " << ds.test.records.size() << " test images to "
              << synth_out << '\n';
  } else if (*teacher_cmd) {
    run_train_teacher(teacher_flags.resolve());
  } else if (*student_cmd) {
    run_train_student(student_flags.resolve());
  } else if (*eval_cmd) {
    const auto model = load_checkpoint(eval_ckpt);
    const auto dataset = load_split(eval_data, eval_split);
    const auto spec = resolve_resolution(eval_resolution, dataset.native_size(), model.config().image_size);
    if (eval_scheme.empty()) {
      eval_scheme = "none";
      const auto rc = std::filesystem::path(eval_ckpt).parent_path() / "run_config.json";
      if (std::ifstream is{rc}) {
        const auto j = nlohmann::json::parse(is, nullptr, false);
        if (j.is_object() && j.contains("scheme") && j["scheme"].is_string()) eval_scheme = j["scheme"];
      }
    } else {
      parse_scheme(eval_scheme);
    }
    const auto report =
        evaluate(model, prepare(dataset, spec), dataset.manifest.finding_names, eval_scheme, eval_resolution);
    const auto text = to_json(report).dump(2);
    std::cout << text << '\n';
    if (!eval_out.empty()) {
      std::ofstream os(eval_out, std::ios::binary | std::ios::trunc);
      if (!os) throw IoError("cannot write " + eval_out);
      os << text << '\n';
    }
  } else if (*att_cmd) {
    const auto model = load_checkpoint(att_ckpt);
    const auto image = load_image(att_image);
    if (image.width != image.height) throw ParseError(att_image + ": image must be square");
    const auto spec = resolve_resolution(att_resolution, image.width, model.config().image_size);
    const auto low = degrade(image, spec);
    const auto block = parse_block(att_block, model.config().depth);
    NoGradGuard no_grad;
    const auto trace = model.forward(Tensor({1, low.height, low.width}, low.pixels));
    export_attention(trace, block, att_out, att_upscale ? att_upscale : image.width);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees many large buffers; keep them in the heap
  // instead of mapping and unmapping pages on every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kData;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
