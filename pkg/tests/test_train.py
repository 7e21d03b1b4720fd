import csv

import numpy as np
import pytest

from camocount import train as tr
from camocount.config import (TrainConfig, apply_overrides, desk_preset,
                              load_config_file, paper_preset)
from camocount.matching import MatchWeights
from camocount.model import ConfigError, CountingModel
from camocount.tensor import Tensor
from camocount.train import Adam, evaluate_split, image_losses, train


def tiny_train_cfg(dataset_dir, out_dir, **kw):
    cfg = apply_overrides(desk_preset(), {
        "dataset_dir": str(dataset_dir), "out_dir": str(out_dir),
        "steps": 4, "queries": 32, "c1": 16, "c2": 16, "c": 16,
        "eval_interval": 0, **kw})
    return cfg


class TestAdam:
    def test_quadratic_descent(self):
        x = Tensor(np.array([5.0, -3.0]), requires_grad=True)
        opt = Adam([x], lr=0.1)
        for _ in range(200):
            opt.zero_grad()
            loss = (x * x).sum()
            loss.backward()
            opt.step()
        assert np.abs(x.data).max() < 1e-2

    def test_decoupled_weight_decay_shrinks_params(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        opt = Adam([x], lr=0.01, weight_decay=0.5)
        for _ in range(50):
            opt.zero_grad()
            (x * 0.0).sum().backward()  # zero gradient; only decay acts
            opt.step()
        assert x.data[0] < 2.0


class TestImageLosses:
    def test_too_many_points_for_queries(self, rng):
        cfg = tiny_train_cfg(".", ".")
        cfg.model.queries = 4
        model = CountingModel(cfg.model, seed=0)
        pts = rng.random((5, 2)) * 64
        with pytest.raises(ConfigError, match="queries"):
            image_losses(model, rng.random((64, 64, 3)), pts, cfg)

    def test_lambda_zero_excluded_but_logged(self, rng):
        cfg = tiny_train_cfg(".", ".")
        cfg.match = MatchWeights(lam=0.0)
        model = CountingModel(cfg.model, seed=0)
        pts = rng.random((3, 2)) * 64
        l_d, l_c, l_l, total = image_losses(model, rng.random((64, 64, 3)),
                                            pts, cfg)
        assert l_d.item() > 0.0
        assert total.item() == l_c.item() + l_l.item()

    def test_density_only_uses_density_term(self, rng):
        cfg = tiny_train_cfg(".", ".", variant="density-only")
        model = CountingModel(cfg.model, seed=0)
        l_d, l_c, l_l, total = image_losses(model, rng.random((64, 64, 3)),
                                            np.zeros((0, 2)), cfg)
        assert total.item() == l_d.item()
        assert l_c.item() == l_l.item() == 0.0

    def test_zero_count_crop(self, rng):
        cfg = tiny_train_cfg(".", ".")
        model = CountingModel(cfg.model, seed=0)
        l_d, l_c, l_l, total = image_losses(model, rng.random((64, 64, 3)),
                                            np.zeros((0, 2)), cfg)
        assert l_l.item() == 0.0
        assert np.isfinite(total.item())


class TestTrainLoop:
    def test_runs_and_logs(self, tiny_dataset, tmp_path):
        cfg = tiny_train_cfg(tiny_dataset, tmp_path / "run")
        result = train(cfg)
        rows = list(csv.DictReader(open(result.log_path)))
        assert len(rows) == 4
        assert set(rows[0]) == {"step", "l_d", "l_c", "l_l", "total"}
        assert (tmp_path / "run" / "last.ckpt").exists()

    def test_deterministic_given_seed(self, tiny_dataset, tmp_path):
        a = train(tiny_train_cfg(tiny_dataset, tmp_path / "a", seed=5))
        b = train(tiny_train_cfg(tiny_dataset, tmp_path / "b", seed=5))
        assert a.first_total == b.first_total
        assert a.final_total == b.final_total

    def test_best_checkpoint_requires_val(self, tiny_dataset, tmp_path):
        cfg = tiny_train_cfg(tiny_dataset, tmp_path / "run",
                             eval_interval=2, steps=2)
        result = train(cfg)
        assert result.best_checkpoint is not None
        assert result.best_val_mae is not None

    def test_missing_dataset_dir(self):
        cfg = tiny_train_cfg(".", ".")
        cfg.dataset_dir = None
        with pytest.raises(ConfigError, match="dataset_dir"):
            train(cfg)

    def test_crowded_crop_error_names_image(self, tiny_dataset, tmp_path):
        cfg = tiny_train_cfg(tiny_dataset, tmp_path / "run", queries=2,
                             steps=50)
        with pytest.raises(ConfigError, match=r"train_\d+"):
            train(cfg)


class TestEvaluation:
    def test_counts_against_manifest(self, tiny_dataset):
        cfg = tiny_train_cfg(tiny_dataset, ".")
        model = CountingModel(cfg.model, seed=0)
        report = evaluate_split(model, tiny_dataset, "test", 0.35)
        assert report.images_evaluated == 4
        assert sum(report.histogram) == 4

    def test_eval_is_bit_reproducible(self, tiny_dataset):
        cfg = tiny_train_cfg(tiny_dataset, ".")
        model = CountingModel(cfg.model, seed=0)
        a = evaluate_split(model, tiny_dataset, "test", 0.35)
        b = evaluate_split(model, tiny_dataset, "test", 0.35)
        assert a == b

    def test_perfect_predictor_stub(self, tiny_dataset, monkeypatch):
        from camocount import data as dio
        manifest, docs = dio.load_dataset(tiny_dataset)
        counts = iter([docs[n].count for n in manifest.split("test")])
        monkeypatch.setattr(
            tr, "predict_image",
            lambda model, image, threshold: (None, float(next(counts))))
        report = evaluate_split(object(), tiny_dataset, "test", 0.35)
        assert report.mae == report.mse == report.nae == 0.0

    def test_density_only_routes_through_density_count(self, tiny_dataset):
        from camocount import data as dio
        from camocount.imageio import read_image
        cfg = tiny_train_cfg(tiny_dataset, ".", variant="density-only")
        model = CountingModel(cfg.model, seed=0)
        _, docs = dio.load_dataset(tiny_dataset)
        name = next(iter(docs))
        image = read_image(dio.images_dir(tiny_dataset) / name)
        merged, count = tr.predict_image(model, image, 0.35)
        assert merged is None
        assert isinstance(count, float) and count >= 0.0

    def test_empty_split_rejected(self, tiny_dataset):
        from camocount import data as dio
        cfg = tiny_train_cfg(tiny_dataset, ".")
        model = CountingModel(cfg.model, seed=0)
        manifest = dio.read_manifest(dio.manifest_path(tiny_dataset))
        manifest.val = []
        dio.write_manifest(manifest, dio.manifest_path(tiny_dataset))
        try:
            with pytest.raises(ValueError, match="empty"):
                evaluate_split(model, tiny_dataset, "val", 0.35)
        finally:
            manifest.val = ["val_0000.ppm", "val_0001.ppm"]
            dio.write_manifest(manifest, dio.manifest_path(tiny_dataset))


class TestPresets:
    def test_paper_constants(self):
        cfg = paper_preset()
        assert cfg.match.lam == 0.5
        assert cfg.model.crop == 256
        assert cfg.threshold == 0.35
        assert cfg.model.queries == 700
        assert cfg.model.layers == 6
        assert cfg.lr == 1e-5
        assert cfg.weight_decay == 5e-4
        assert cfg.batch_size == 8

    def test_desk_constants(self):
        cfg = desk_preset()
        assert cfg.lr == 1e-4
        assert cfg.batch_size == 4
        assert cfg.model.queries == 128
        assert cfg.model.layers == 2
        assert cfg.steps == 2000

    def test_config_file_overrides(self, tmp_path):
        path = tmp_path / "train.toml"
        path.write_text('preset = "paper"\nlr = 0.002\nqueries = 40\n'
                        'lam = 0.25\n')
        cfg = load_config_file(path)
        assert cfg.lr == 0.002
        assert cfg.model.queries == 40
        assert cfg.match.lam == 0.25
        assert cfg.model.layers == 6  # untouched paper value

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("nonsense = 1\n")
        with pytest.raises(ConfigError, match="nonsense"):
            load_config_file(path)

    def test_validation(self):
        with pytest.raises(ConfigError, match="learning rate"):
            TrainConfig(lr=0.0).validate()
        with pytest.raises(ConfigError, match="batch"):
            TrainConfig(batch_size=0).validate()
