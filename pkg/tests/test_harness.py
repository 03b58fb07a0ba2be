import math
import os

import numpy as np
import pytest

from conftest import image_blob_dataset
from robustproj import cli
from robustproj.attacks import AttackConfig, robust_accuracy
from robustproj.certificates import LINF, ThreatModel
from robustproj.datasets import center
from robustproj.errors import ModelIOError, ParameterError
from robustproj.harness import (ExperimentConfig, dump_adversarial_grid,
                                parse_config, run_sweep)
from robustproj.heads import (LinearHead, MlpHead, TrainConfig,
                              fit_linear_head, train_mlp)
from robustproj.modelio import load_model, save_model
from robustproj.projection import fit_pca, fit_spca, project
from robustproj.report import (ResultRow, read_csv, render_curves, scale_point,
                               write_csv, write_pgm)


def small_config(**kwargs):
    defaults = dict(
        dataset="mnist", projections=("pca",), r_values=(3,), head="linear",
        train=TrainConfig(epochs=30, seed=0), attacks=("fgsm",), norms=(LINF,),
        epsilons=(0.05, 0.1, 0.15), seed=0,
    )
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(777)
    train = image_blob_dataset(rng, 60, side=6, name="synthetic")
    test = image_blob_dataset(rng, 25, side=6, name="synthetic")
    return train, test


class TestParseConfig:
    def test_repeated_keys_and_scalars(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(
            "# comment\n"
            "dataset = cifar-binary\n"
            "projection = pca\nprojection = spca\n"
            "r = 100\nr = 150\n"
            "attack = pgd\n"
            "norm = 2\n"
            "epsilon = 0.05\nepsilon = 0.1\n"
            "head = linear\ndensity = 0.1\nseed = 7\n"
            "epochs = 3\nlearning_rate = 0.01\nbatch_size = 32\n"
            "limit = 40\nclip = false\n"
        )
        config = parse_config(path)
        assert config.dataset == "cifar-binary"
        assert config.projections == ("pca", "spca")
        assert config.r_values == (100, 150)
        assert config.attacks == ("pgd",)
        assert config.norms == ("2",)
        assert config.epsilons == (0.05, 0.1)
        assert config.head == "linear" and config.density == 0.1
        assert config.seed == 7 and config.train.seed == 7
        assert config.train.epochs == 3
        assert config.train.learning_rate == 0.01
        assert config.train.batch_size == 32
        assert config.limit == 40 and config.clip_to_unit_box is False

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("seed = 7\nr = 10\n")
        config = parse_config(path, seed=99)
        assert config.seed == 99 and config.train.seed == 99
        assert config.r_values == (10,)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("this is not a key value pair\n")
        with pytest.raises(ParameterError):
            parse_config(path)

    def test_empty_grid_rejected(self):
        with pytest.raises(ParameterError):
            ExperimentConfig(r_values=())


class TestRunSweep:
    def test_row_cardinality_linear(self, data):
        train, test = data
        rows, fitted = run_sweep(small_config(), train=train, test=test)
        # 1 clean + 1 attack x 1 norm x 3 eps + 1 norm x 3 certified eps
        assert len(rows) == 1 + 3 + 3
        assert set(fitted) == {("pca", 3)}
        by_attack = {}
        for row in rows:
            by_attack.setdefault(row.attack, []).append(row)
        assert len(by_attack["clean"]) == 1
        assert len(by_attack["fgsm"]) == 3
        assert len(by_attack["certified"]) == 3

    def test_mlp_head_has_no_certified_rows(self, data):
        train, test = data
        config = small_config(head="mlp", train=TrainConfig(epochs=3, seed=0),
                              epsilons=(0.05,))
        rows, _ = run_sweep(config, train=train, test=test)
        assert all(row.attack != "certified" for row in rows)
        assert len(rows) == 2

    def test_matches_cell_by_cell_recomputation(self, data):
        train, test = data
        config = small_config()
        rows, fitted = run_sweep(config, train=train, test=test)
        model, head = fitted[("pca", 3)]

        # independent recomputation of every attack cell from the fitted pair
        _, info = center(train.X)
        model2 = fit_pca(train.X - info.mean, 3, mean=info.mean)
        np.testing.assert_array_equal(model.W, model2.W)
        for row in rows:
            if row.attack != "fgsm":
                continue
            acc = robust_accuracy(
                model, head, test,
                AttackConfig(kind="fgsm",
                             threat=ThreatModel(p=row.norm, epsilon=row.epsilon),
                             seed=config.seed),
            )
            assert row.accuracy == acc

    def test_failed_cell_marks_nan_and_continues(self, data):
        train, test = data
        # r larger than the data dimension: the pca cell fails, spca at a
        # valid r still runs
        config = small_config(projections=("pca", "spca"), r_values=(500,),
                              density=0.3, epsilons=(0.05,))
        messages = []
        rows, fitted = run_sweep(config, train=train, test=test,
                                 progress=messages.append)
        assert fitted == {}
        assert all(math.isnan(row.accuracy) for row in rows)
        assert any("failed" in m for m in messages)

    def test_square_skipped_for_l2(self, data):
        train, test = data
        config = small_config(attacks=("square",), norms=("2",), epsilons=(0.05,))
        rows, _ = run_sweep(config, train=train, test=test)
        assert all(row.attack != "square" for row in rows)

    def test_rerun_is_byte_identical(self, data, tmp_path):
        train, test = data
        paths = []
        for i in range(2):
            rows, _ = run_sweep(small_config(), train=train, test=test)
            p = tmp_path / f"results{i}.csv"
            write_csv(rows, p)
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_train_and_test_limits(self, data):
        train, test = data
        config = small_config(limit=10, train_limit=20, epsilons=(0.05,))
        rows, _ = run_sweep(config, train=train, test=test)
        assert all(row.n == 10 for row in rows)


class TestModelIO:
    def test_round_trip_projection_only(self, data, tmp_path):
        train, _ = data
        Xc, info = center(train.X)
        model = fit_spca(Xc, 3, target_density=0.3, mean=info.mean)
        path = tmp_path / "m.model"
        save_model(path, model, None)
        loaded, head = load_model(path)
        assert head is None
        assert loaded.kind == model.kind and loaded.converged == model.converged
        for a, b in ((loaded.W, model.W), (loaded.b, model.b),
                     (loaded.mean, model.mean),
                     (loaded.explained_variance, model.explained_variance)):
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("head_kind", ["linear", "mlp"])
    def test_round_trip_with_head(self, data, tmp_path, head_kind):
        train, _ = data
        Xc, info = center(train.X)
        model = fit_pca(Xc, 4, mean=info.mean)
        Z = project(model, train.X)
        if head_kind == "linear":
            head = fit_linear_head(Z, train.y, TrainConfig(epochs=2, seed=0))
        else:
            head, _ = train_mlp(Z, train.y, TrainConfig(epochs=2, seed=0),
                                hidden=(8, 6))
        path = tmp_path / "m.model"
        save_model(path, model, head)
        _, loaded = load_model(path)
        if head_kind == "linear":
            assert isinstance(loaded, LinearHead)
            np.testing.assert_array_equal(loaded.U, head.U)
            np.testing.assert_array_equal(loaded.biases, head.biases)
        else:
            assert isinstance(loaded, MlpHead)
            for a, b in zip(loaded.weights, head.weights):
                np.testing.assert_array_equal(a, b)
            for a, b in zip(loaded.biases, head.biases):
                np.testing.assert_array_equal(a, b)

    def test_bad_magic(self, data, tmp_path):
        train, _ = data
        Xc, info = center(train.X)
        model = fit_pca(Xc, 2, mean=info.mean)
        path = tmp_path / "m.model"
        save_model(path, model)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelIOError):
            load_model(path)

    def test_truncated(self, data, tmp_path):
        train, _ = data
        Xc, info = center(train.X)
        model = fit_pca(Xc, 2, mean=info.mean)
        path = tmp_path / "m.model"
        save_model(path, model)
        blob = path.read_bytes()
        cut = tmp_path / "cut.model"
        cut.write_bytes(blob[: len(blob) - 17])
        with pytest.raises(ModelIOError):
            load_model(cut)

    def test_unsupported_version(self, data, tmp_path):
        train, _ = data
        Xc, info = center(train.X)
        model = fit_pca(Xc, 2, mean=info.mean)
        path = tmp_path / "m.model"
        save_model(path, model)
        blob = bytearray(path.read_bytes())
        blob[4:6] = (99).to_bytes(2, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelIOError):
            load_model(path)


def sample_rows():
    rows = []
    for projection in ("pca", "spca"):
        for eps, acc in ((0.0, 0.9), (0.1, 0.6), (0.2, 0.3)):
            rows.append(ResultRow(
                dataset="synthetic", projection=projection, r=3, head="linear",
                attack="fgsm", norm="inf", epsilon=eps, accuracy=acc, n=50,
                seed=0,
            ))
    return rows


class TestReport:
    def test_csv_round_trip(self, tmp_path):
        rows = sample_rows()
        path = tmp_path / "r.csv"
        write_csv(rows, path)
        header = path.read_text().splitlines()[0]
        assert header == "dataset,projection,r,head,attack,norm,epsilon,accuracy,n,seed"
        back = read_csv(path)
        assert sorted(back, key=lambda r: (r.projection, r.epsilon)) == \
            sorted(rows, key=lambda r: (r.projection, r.epsilon))

    def test_empty_table_rejected(self, tmp_path):
        with pytest.raises(ParameterError):
            write_csv([], tmp_path / "r.csv")

    def test_svg_polyline_coordinates(self, tmp_path):
        rows = sample_rows()
        path = tmp_path / "curves.svg"
        render_curves(rows, path)
        text = path.read_text()
        assert text.startswith('<?xml version="1.0"')
        assert 'version="1.1"' in text
        expected = " ".join(
            "{:.2f},{:.2f}".format(*scale_point(eps, acc, 0.0, 0.2))
            for eps, acc in ((0.0, 0.9), (0.1, 0.6), (0.2, 0.3))
        )
        assert f'points="{expected}"' in text
        # PCA dashed, SPCA solid; exactly two polylines
        assert text.count("<polyline") == 2
        assert text.count('stroke-dasharray="6 4"') == 1

    def test_svg_deterministic(self, tmp_path):
        rows = sample_rows()
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        render_curves(rows, a)
        render_curves(rows, b)
        assert a.read_bytes() == b.read_bytes()

    def test_pgm_quantization(self, tmp_path):
        img = np.array([[0.0, 1.0], [0.5, 0.25]])
        path = tmp_path / "img.pgm"
        write_pgm(path, img)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n2 2\n255\n")
        pixels = blob[len(b"P5\n2 2\n255\n"):]
        assert list(pixels) == [0, 255, 128, 64]


class TestDumpAdversarialGrid:
    def test_zero_epsilon_pairs_identical(self, data, tmp_path):
        train, test = data
        _, fitted = run_sweep(small_config(), train=train, test=test)
        model, head = fitted[("pca", 3)]
        config = AttackConfig(kind="fgsm", threat=ThreatModel(p=LINF, epsilon=0.0))
        paths = dump_adversarial_grid(model, head, test, config, 4, tmp_path / "out")
        assert len(paths) == 4
        for clean_path, adv_path in paths:
            with open(clean_path, "rb") as f1, open(adv_path, "rb") as f2:
                assert f1.read() == f2.read()

    def test_perturbation_magnitude(self, data, tmp_path):
        train, test = data
        _, fitted = run_sweep(small_config(), train=train, test=test)
        model, head = fitted[("pca", 3)]
        eps = 0.2
        config = AttackConfig(kind="fgsm", threat=ThreatModel(p=LINF, epsilon=eps),
                              clip_to_unit_box=False)
        paths = dump_adversarial_grid(model, head, test, config, 3, tmp_path / "out")
        header = b"P5\n6 6\n255\n"
        diffs = []
        for clean_path, adv_path in paths:
            clean = np.frombuffer(open(clean_path, "rb").read()[len(header):],
                                  dtype=np.uint8).astype(int)
            adv = np.frombuffer(open(adv_path, "rb").read()[len(header):],
                                dtype=np.uint8).astype(int)
            diffs.append(np.abs(clean - adv).max())
        # unclipped FGSM moves every coordinate by exactly eps (up to PGM
        # quantization and the [0,1] clamp inside the writer)
        assert max(diffs) <= round(255 * eps) + 1
        assert max(diffs) >= round(255 * eps) - 52  # clamping can only shrink

    def test_non_square_rejected(self, data, tmp_path):
        from robustproj.datasets import LabeledDataset

        train, test = data
        _, fitted = run_sweep(small_config(), train=train, test=test)
        model, head = fitted[("pca", 3)]
        flat = LabeledDataset(X=test.X[:, :30], y=test.y, n_classes=2,
                              name="flat")
        config = AttackConfig(kind="fgsm", threat=ThreatModel(p=LINF, epsilon=0.1))
        with pytest.raises(ParameterError):
            dump_adversarial_grid(model, head, flat, config, 2, tmp_path / "out")


class TestCli:
    @pytest.fixture
    def patched_loader(self, data, monkeypatch):
        train, test = data
        import robustproj.harness as harness_mod

        loader = lambda config: (train, test)
        monkeypatch.setattr(cli, "load_dataset_pair", loader)
        monkeypatch.setattr(harness_mod, "load_dataset_pair", loader)
        return train, test

    def test_train_certify_attack_dump(self, patched_loader, tmp_path, capsys):
        out = str(tmp_path / "out")
        model_path = str(tmp_path / "model.bin")
        base = ["--out", out, "--mnist-dir", "unused"]

        assert cli.main(base + ["train", "--kind", "pca", "--r", "3",
                                "--model", model_path]) == 0
        assert os.path.exists(model_path)
        captured = capsys.readouterr().out
        assert "clean test accuracy" in captured

        # the default head is mlp, so certify must refuse
        assert cli.main(base + ["certify", "--model", model_path,
                                "--norm", "inf"]) == 2

        assert cli.main(base + ["attack", "--model", model_path,
                                "--attack", "fgsm", "--norm", "inf",
                                "--epsilon", "0.1"]) == 0
        assert "robust accuracy" in capsys.readouterr().out

        assert cli.main(base + ["dump-advex", "--model", model_path,
                                "--attack", "fgsm", "--epsilon", "0.1",
                                "--count", "2"]) == 0
        advex = os.path.join(out, "advex")
        assert sorted(os.listdir(advex)) == [
            "adv_000.pgm", "adv_001.pgm", "clean_000.pgm", "clean_001.pgm",
        ]

    def test_certify_linear_head(self, patched_loader, tmp_path, capsys):
        out = str(tmp_path / "out")
        model_path = str(tmp_path / "model.bin")
        config_path = tmp_path / "exp.cfg"
        config_path.write_text("head = linear\nepochs = 30\n")
        base = ["--config", str(config_path), "--out", out,
                "--mnist-dir", "unused"]
        assert cli.main(base + ["train", "--kind", "pca", "--r", "3",
                                "--model", model_path]) == 0
        assert cli.main(base + ["certify", "--model", model_path,
                                "--norm", "inf"]) == 0
        detail = os.path.join(out, "certificates-linf.csv")
        assert os.path.exists(detail)
        lines = open(detail).read().splitlines()
        assert lines[0] == "index,clean_pred,label,margin,dual_norm,radius,norm_p"
        assert len(lines) == 1 + patched_loader[1].n

    def test_sweep_and_plot(self, patched_loader, tmp_path, capsys):
        out = str(tmp_path / "out")
        config_path = tmp_path / "exp.cfg"
        config_path.write_text(
            "projection = pca\nprojection = spca\nr = 3\nhead = linear\n"
            "density = 0.3\nepochs = 30\nattack = fgsm\nnorm = inf\n"
            "epsilon = 0.05\nepsilon = 0.1\n"
        )
        base = ["--config", str(config_path), "--out", out,
                "--mnist-dir", "unused"]
        assert cli.main(base + ["sweep"]) == 0
        results = os.path.join(out, "results.csv")
        assert os.path.exists(results)
        svg = os.path.join(out, "curves.svg")
        png = os.path.join(out, "curves.png")
        assert cli.main(["plot", "--results", results, "--svg", svg,
                         "--png", png]) == 0
        assert open(svg).read().startswith('<?xml version="1.0"')
        assert open(png, "rb").read(8) == b"\x89PNG\r\n\x1a\n"

    def test_fit_only(self, patched_loader, tmp_path, capsys):
        out = str(tmp_path / "out")
        model_path = str(tmp_path / "proj.bin")
        assert cli.main(["--out", out, "--mnist-dir", "unused", "fit",
                         "--kind", "spca", "--r", "2", "--model",
                         model_path]) == 0
        loaded, head = load_model(model_path)
        assert head is None and loaded.kind == "spca"
        assert "density=" in capsys.readouterr().out
