"""Experiment orchestration: configuration files, dataset resolution, and the
projection x component-count x attack x epsilon sweep.

A sweep fits each requested projection at each component count, trains one
head per (kind, r) pair with a shared seed, then evaluates robust accuracy for
every configured attack, norm, and epsilon on the test set. Linear-head sweeps
additionally emit certified-accuracy rows (attack name ``certified``). A
failed grid cell is recorded with a NaN accuracy marker and the sweep keeps
going.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import attacks
from .attacks import AttackConfig
from .certificates import L2, LINF, ThreatModel, certified_accuracy_curve
from .datasets import LabeledDataset, center, load_cifar_binary, load_mnist
from .errors import ParameterError
from .heads import TrainConfig, fit_linear_head, forward, train_mlp
from .projection import PCA, SPCA, fit_pca, fit_spca, project
from .report import ResultRow

DEFAULT_EPSILONS = tuple(round(0.01 * k, 2) for k in range(1, 21))
DEFAULT_R = (100, 125, 150, 175, 200)

MNIST_TRAIN = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", 60000)
MNIST_TEST = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", 10000)
CIFAR_BATCHES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST = "test_batch.bin"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "mnist"
    projections: tuple = (PCA, SPCA)
    r_values: tuple = DEFAULT_R
    density: float = 0.05
    head: str = "mlp"                   # "mlp" or "linear"
    train: TrainConfig = field(default_factory=TrainConfig)
    attacks: tuple = ("fgsm", "pgd", "mim")
    norms: tuple = (LINF, L2)
    epsilons: tuple = DEFAULT_EPSILONS
    seed: int = 0
    out_dir: str = "out"
    mnist_dir: str = ""
    cifar_dir: str = ""
    limit: int = 0                      # 0 = full test set
    train_limit: int = 0
    clip_to_unit_box: bool = True

    def __post_init__(self):
        if not self.r_values or not self.epsilons or not self.attacks:
            raise ParameterError("r, epsilon, and attack grids must be non-empty")


_LIST_KEYS = {"projection", "r", "attack", "norm", "epsilon"}


def parse_config(path, **overrides):
    """Read a flat key=value config file; repeated keys accumulate into lists."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key in _LIST_KEYS:
                values.setdefault(key, []).append(value)
            else:
                values[key] = value

    kwargs = {}
    if "dataset" in values:
        kwargs["dataset"] = values["dataset"]
    if "projection" in values:
        kwargs["projections"] = tuple(values["projection"])
    if "r" in values:
        kwargs["r_values"] = tuple(int(v) for v in values["r"])
    if "density" in values:
        kwargs["density"] = float(values["density"])
    if "head" in values:
        kwargs["head"] = values["head"]
    if "attack" in values:
        kwargs["attacks"] = tuple(values["attack"])
    if "norm" in values:
        kwargs["norms"] = tuple(values["norm"])
    if "epsilon" in values:
        kwargs["epsilons"] = tuple(float(v) for v in values["epsilon"])
    if "seed" in values:
        kwargs["seed"] = int(values["seed"])
    for key in ("out_dir", "mnist_dir", "cifar_dir"):
        if key in values:
            kwargs[key] = values[key]
    for key in ("limit", "train_limit"):
        if key in values:
            kwargs[key] = int(values[key])
    if "clip" in values:
        kwargs["clip_to_unit_box"] = values["clip"].lower() in ("1", "true", "yes")
    train_kwargs = {}
    for key, cast in (("epochs", int), ("learning_rate", float), ("batch_size", int)):
        if key in values:
            train_kwargs[key] = cast(values[key])
    kwargs.update(overrides)
    seed = kwargs.get("seed", 0)
    kwargs["train"] = TrainConfig(seed=seed, **train_kwargs)
    return ExperimentConfig(**kwargs)


def load_dataset_pair(config):
    """Resolve the configured dataset name to (train, test) from raw files."""
    if config.dataset == "mnist":
        if not config.mnist_dir:
            raise ParameterError("mnist_dir is not configured")
        d = config.mnist_dir
        img, lbl, n = MNIST_TRAIN
        train = load_mnist(os.path.join(d, img), os.path.join(d, lbl), n)
        img, lbl, n = MNIST_TEST
        test = load_mnist(os.path.join(d, img), os.path.join(d, lbl), n)
        return train, test
    if config.dataset == "cifar-binary":
        if not config.cifar_dir:
            raise ParameterError("cifar_dir is not configured")
        d = config.cifar_dir
        return load_cifar_binary(
            [os.path.join(d, b) for b in CIFAR_BATCHES],
            os.path.join(d, CIFAR_TEST),
        )
    raise ParameterError(f"unknown dataset {config.dataset!r}")


def _subset(dataset, limit):
    if limit and limit < dataset.n:
        return LabeledDataset(
            X=dataset.X[:limit], y=dataset.y[:limit],
            n_classes=dataset.n_classes, name=dataset.name,
        )
    return dataset


def fit_projection(kind, X_train, r, density, mean):
    if kind == PCA:
        return fit_pca(X_train - mean, r, mean=mean)
    if kind == SPCA:
        return fit_spca(X_train - mean, r, density, mean=mean)
    raise ParameterError(f"unknown projection kind {kind!r}")


def train_head(head_kind, Z, y, train_config, n_classes):
    if head_kind == "linear":
        return fit_linear_head(Z, y, train_config, n_classes=n_classes)
    if head_kind == "mlp":
        head, _ = train_mlp(Z, y, train_config, n_classes=n_classes)
        return head
    raise ParameterError(f"unknown head kind {head_kind!r}")


def _clean_accuracy(model, head, dataset):
    logits = forward(head, project(model, dataset.X))
    return float(np.mean(np.argmax(logits, axis=1) == dataset.y))


def run_sweep(config, train=None, test=None, progress=None):
    """Run the full grid; returns (result rows, fitted {(kind, r): (model, head)}).

    Datasets may be passed in directly (tests, notebooks); otherwise they are
    loaded from the configured paths. Errors in one grid cell mark that row
    with NaN accuracy and do not abort the sweep.
    """
    if train is None or test is None:
        train, test = load_dataset_pair(config)
    train = _subset(train, config.train_limit)
    test = _subset(test, config.limit)
    _, info = center(train.X)

    rows = []
    fitted = {}
    for kind in config.projections:
        for r in config.r_values:
            try:
                model = fit_projection(kind, train.X, r, config.density, info.mean)
                Z = project(model, train.X)
                head = train_head(config.head, Z, train.y, config.train, train.n_classes)
            except Exception as exc:  # a failed fit poisons the whole (kind, r) cell
                if progress:
                    progress(f"{kind} r={r}: fit/train failed: {exc}")
                rows.append(ResultRow(
                    dataset=train.name, projection=kind, r=r, head=config.head,
                    attack="clean", norm="none", epsilon=0.0,
                    accuracy=float("nan"), n=test.n, seed=config.seed,
                ))
                continue
            fitted[(kind, r)] = (model, head)
            rows.append(ResultRow(
                dataset=train.name, projection=kind, r=r, head=config.head,
                attack="clean", norm="none", epsilon=0.0,
                accuracy=_clean_accuracy(model, head, test), n=test.n,
                seed=config.seed,
            ))
            for attack_kind in config.attacks:
                for norm in config.norms:
                    if attack_kind == "square" and norm != LINF:
                        continue
                    for eps in config.epsilons:
                        try:
                            acc = attacks.robust_accuracy(
                                model, head, test,
                                AttackConfig(
                                    kind=attack_kind,
                                    threat=ThreatModel(p=norm, epsilon=eps),
                                    seed=config.seed,
                                    clip_to_unit_box=config.clip_to_unit_box,
                                ),
                            )
                        except Exception as exc:
                            if progress:
                                progress(f"{kind} r={r} {attack_kind} l{norm} "
                                         f"eps={eps}: {exc}")
                            acc = float("nan")
                        rows.append(ResultRow(
                            dataset=train.name, projection=kind, r=r,
                            head=config.head, attack=attack_kind, norm=norm,
                            epsilon=eps, accuracy=acc, n=test.n, seed=config.seed,
                        ))
                        if progress:
                            progress(f"{kind} r={r} {attack_kind} l{norm} "
                                     f"eps={eps}: acc={acc:.4f}")
            if config.head == "linear":
                for norm in config.norms:
                    curve = certified_accuracy_curve(
                        model, head, test, norm, sorted(config.epsilons)
                    )
                    for eps, frac in curve:
                        rows.append(ResultRow(
                            dataset=train.name, projection=kind, r=r,
                            head=config.head, attack="certified", norm=norm,
                            epsilon=eps, accuracy=frac, n=test.n, seed=config.seed,
                        ))
    return rows, fitted


def dump_adversarial_grid(model, head, dataset, attack_config, count, out_dir):
    """Write clean/adversarial image pairs as PGM files for visual inspection."""
    from .report import write_pgm

    side = math.isqrt(dataset.dim)
    if side * side != dataset.dim:
        raise ParameterError("dataset rows are not square images")
    os.makedirs(out_dir, exist_ok=True)
    count = min(count, dataset.n)
    X = dataset.X[:count]
    y = dataset.y[:count]
    X_adv = attacks.run_attack(model, head, X, y, attack_config)
    paths = []
    for i in range(count):
        clean_path = os.path.join(out_dir, f"clean_{i:03d}.pgm")
        adv_path = os.path.join(out_dir, f"adv_{i:03d}.pgm")
        write_pgm(clean_path, X[i].reshape(side, side))
        write_pgm(adv_path, X_adv[i].reshape(side, side))
        paths.append((clean_path, adv_path))
    return paths
