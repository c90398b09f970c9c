import json

import numpy as np
import pytest

import mlcak


def test_degrade_keeps_shape_and_constants():
    img = np.full((64, 64), 0.4)
    for level in mlcak.RESOLUTION_LEVELS:
        out = mlcak.degrade(img, level)
        assert out.shape == (64, 64)
        assert np.allclose(out, 0.4)


def test_degrade_native_is_identity():
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(32, 32))
    assert np.array_equal(mlcak.degrade(img, "native"), img)


def test_degrade_rejects_bad_level():
    with pytest.raises(mlcak.ParameterError):
        mlcak.degrade(np.zeros((64, 64)), "bogus")
    assert issubclass(mlcak.ParameterError, mlcak.MlcakError)


def test_losses_match_numpy():
    rng = np.random.default_rng(1)
    blocks = [rng.normal(size=(3, 5)) for _ in range(4)]
    assert np.allclose(mlcak.mlcak_summary(blocks), np.mean(blocks, axis=0), atol=1e-15)

    a, b = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    assert mlcak.mse_loss(a, b) == pytest.approx(np.mean((a - b) ** 2), abs=1e-12)

    z, y = rng.uniform(-8, 8, size=(5, 3)), rng.integers(0, 2, size=(5, 3)).astype(float)
    p = 1 / (1 + np.exp(-z))
    ref = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert mlcak.bce_with_logits(z, y) == pytest.approx(ref, abs=1e-9)

    assert mlcak.vanilla_kd_loss(a, a, 2.0) == pytest.approx(0.0, abs=1e-12)
    assert mlcak.vanilla_kd_loss(a, b, 2.0) > 0


def test_auroc():
    assert mlcak.auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert mlcak.auroc([0.5, 0.5], [0, 1]) == 0.5
    assert mlcak.auroc([0.1, 0.2], [1, 1]) is None


def test_cosine_endpoints():
    assert mlcak.cosine_lr(5e-4, 1e-5, 100, 0) == pytest.approx(5e-4, abs=1e-15)
    assert mlcak.cosine_lr(5e-4, 1e-5, 100, 100) == pytest.approx(1e-5, abs=1e-15)


def test_model_forward_and_checkpoint(tmp_path):
    model = mlcak.Model.create("tiny", num_findings=5, seed=3)
    assert model.config["embed_dim"] == 32
    images = np.random.default_rng(2).uniform(size=(2, 64, 64))
    out = model.forward(images)
    assert out["mlct_logits"].shape == (2, 5)
    assert out["mcct_logits"].shape == (2, 2)
    assert len(out["hidden_states"]) == model.config["depth"]
    assert out["hidden_states"][0].shape == (2, 65, 32)

    path = tmp_path / "m.ckpt"
    model.save(path)
    again = mlcak.Model.load(path).forward(images)
    assert np.array_equal(again["mlct_logits"], out["mlct_logits"])

    grid = model.attention_grid(images[0])
    assert grid.shape == (8, 8)
    assert grid.sum() == pytest.approx(1.0)


def test_small_pipeline(tmp_path):
    data = tmp_path / "data"
    n_train, n_test = mlcak.generate_synthetic(data, num_samples=40, image_size=64, seed=4)
    assert (n_train, n_test) == (32, 8)

    common = {"epochs": 1, "batch_size": 16, "data": str(data), "seed": 1}
    mlcak.train_teacher({**common, "out": str(tmp_path / "teacher")})
    student = mlcak.train_student(
        {**common, "out": str(tmp_path / "student"), "resolution": "28", "scheme": "mlcak",
         "teacher": str(tmp_path / "teacher" / "model.ckpt")})
    lines = (tmp_path / "student" / "metrics.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["epoch"] == 1

    report = mlcak.evaluate(student, data, split="test", resolution="28", scheme="mlcak")
    assert report["num_samples"] == 8
    assert report["resolution"]["model_input"] == 64
    assert set(report["per_finding"]) == set(json.loads((data / "generation.json").read_text())["finding_names"])

    heat = mlcak.export_attention(tmp_path / "student" / "model.ckpt", mlcak.load_image(data / "images" / "s00000.pgm"),
                                  tmp_path / "att.pgm")
    assert heat.shape == (64, 64)
    assert (tmp_path / "att.pgm").exists()


def test_config_errors():
    with pytest.raises(mlcak.ConfigError):
        mlcak.train_teacher({"epochs": 1, "no_such_key": 1})
