#include "doctest.h"

#include <fstream>
#include <iterator>

#include "mlcak/checkpoint.hpp"
#include "mlcak/error.hpp"
#include "mlcak/training.hpp"
#include "support.hpp"

using namespace mlcak;
using namespace mlcak::testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

std::filesystem::path small_dataset(const std::string& name, std::size_t samples = 48) {
  const auto dir = scratch_dir(name);
  SyntheticConfig sc;
  sc.num_samples = samples;
  sc.image_size = 32;
  sc.seed = 21;
  generate_synthetic(sc, dir);
  return dir;
}

RunConfig small_run(const std::filesystem::path& data, const std::filesystem::path& out) {
  RunConfig c;
  c.image_size = 32;
  c.depth = 2;
  c.epochs = 2;
  c.batch_size = 16;
  c.data_dir = data;
  c.out_dir = out;
  return c;
}

}  // namespace

TEST_CASE("run config json") {
  RunConfig c;
  c.depth = 3;
  c.kd.scheme = KDScheme::vanilla;
  c.resolution = "28";
  const auto j = to_json(c);
  CHECK(j["epochs"] == 100);
  CHECK(j["batch_size"] == 64);
  CHECK(j["lr"] == 5e-4);
  const auto back = run_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK_THROWS_AS(run_config_from_json({{"epoch", 3}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"epochs", "many"}}), ConfigError);
  CHECK(c.model_config(8).variant_name == "custom");
  CHECK(RunConfig{}.model_config(8) == desk_variant("tiny"));
  RunConfig bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("teacher run writes its outputs and is deterministic") {
  const auto data = small_dataset("train_teacher");
  const auto out = scratch_dir("train_teacher_out");
  auto cfg = small_run(data, out / "a");
  run_train_teacher(cfg);
  for (auto f : {"run_config.json", "metrics.jsonl", "model.ckpt"}) CHECK(std::filesystem::exists(out / "a" / f));
  const auto echo = nlohmann::json::parse(slurp(out / "a" / "run_config.json"));
  CHECK(echo["scheme"] == "none");
  CHECK(echo["epochs"] == 2);
  CHECK(echo["model"]["depth"] == 2);

  const auto first = nlohmann::json::parse(slurp(out / "a" / "metrics.jsonl").substr(0, slurp(out / "a" / "metrics.jsonl").find('\n')));
  CHECK(first["epoch"] == 1);
  CHECK(first["lr"] == 5e-4);
  for (auto key : {"bce_mlct", "bce_mcct", "kd_mlct", "kd_mcct", "kd_feature", "total"}) CHECK(first["loss"].contains(key));
  CHECK(first.contains("train_mcct_auroc"));

  cfg.out_dir = out / "b";
  run_train_teacher(cfg);
  CHECK(slurp(out / "a" / "metrics.jsonl") == slurp(out / "b" / "metrics.jsonl"));
  CHECK(slurp(out / "a" / "model.ckpt") == slurp(out / "b" / "model.ckpt"));

  auto low = cfg;
  low.resolution = "28";
  CHECK_THROWS_AS(run_train_teacher(low), ConfigError);
}

TEST_CASE("student runs") {
  const auto data = small_dataset("train_student");
  const auto out = scratch_dir("train_student_out");
  auto tcfg = small_run(data, out / "teacher");
  run_train_teacher(tcfg);
  const auto teacher_bytes = slurp(out / "teacher" / "model.ckpt");

  auto scfg = small_run(data, out / "mlcak");
  scfg.resolution = "28";
  scfg.teacher = out / "teacher" / "model.ckpt";
  run_train_student(scfg);
  CHECK(slurp(out / "teacher" / "model.ckpt") == teacher_bytes);
  const auto log = slurp(out / "mlcak" / "metrics.jsonl");
  const auto e1 = nlohmann::json::parse(log.substr(0, log.find('\n')));
  CHECK(e1["loss"]["kd_feature"].get<double>() > 0.0);

  SUBCASE("scheme none ignores the teacher") {
    auto with = scfg;
    with.kd.scheme = KDScheme::none;
    with.out_dir = out / "none_with";
    run_train_student(with);
    auto without = with;
    without.teacher.clear();
    without.out_dir = out / "none_without";
    run_train_student(without);
    CHECK(slurp(out / "none_with" / "model.ckpt") == slurp(out / "none_without" / "model.ckpt"));
    CHECK(slurp(out / "none_with" / "metrics.jsonl") == slurp(out / "none_without" / "metrics.jsonl"));
  }

  SUBCASE("zero weights leave the classification loss") {
    auto zero = scfg;
    zero.kd.alpha = zero.kd.beta = zero.kd.gamma = 0.0;
    zero.out_dir = out / "zero";
    ViTConfig mc = zero.model_config(8);
    const auto ds = load_split(data, "train");
    const auto teacher = load_checkpoint(scfg.teacher);
    const auto hi = prepare(ds, resolve_resolution("native", 32, 32));
    const auto lo = prepare(ds, resolve_resolution("28", 32, 32));
    const auto result = train_model(zero, mc, lo, &teacher, &hi);
    for (const auto& e : result.epochs) {
      const auto& l = e["loss"];
      CHECK(l["total"].get<double>() ==
            doctest::Approx(l["bce_mlct"].get<double>() + l["bce_mcct"].get<double>()).epsilon(1e-12));
      CHECK(l["kd_feature"].get<double>() > 0.0);
    }
  }

  SUBCASE("mismatched teacher is rejected before training") {
    auto wide = scfg;
    wide.embed_dim = 64;
    wide.heads = 4;
    wide.out_dir = out / "wide";
    CHECK_THROWS_AS(run_train_student(wide), ConfigError);
    CHECK_FALSE(std::filesystem::exists(out / "wide" / "metrics.jsonl"));
  }

  SUBCASE("distillation needs a teacher") {
    auto none = scfg;
    none.teacher.clear();
    none.out_dir = out / "missing";
    CHECK_THROWS_AS(run_train_student(none), ConfigError);
  }
}

TEST_CASE("training reduces the loss") {
  const auto data = small_dataset("learn", 128);
  RunConfig cfg = small_run(data, {});
  cfg.epochs = 20;
  cfg.kd.scheme = KDScheme::none;
  cfg.base_lr = 2e-3;
  const auto ds = load_split(data, "train");
  const auto result =
      train_model(cfg, cfg.model_config(8), prepare(ds, resolve_resolution("native", 32, 32)));
  REQUIRE(result.epochs.size() == 20);
  CHECK(result.epochs[19]["loss"]["total"].get<double>() < result.epochs[0]["loss"]["total"].get<double>());
}
