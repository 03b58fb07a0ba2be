"""Command-line interface.

Subcommands: fit, train, attack, certify, sweep, plot, dump-advex. Most take
a flat key=value config file; individual flags override config values.
"""

import argparse
import os
import sys

import numpy as np

from . import attacks as attacks_mod
from .attacks import AttackConfig
from .certificates import ThreatModel, certified_accuracy_curve, certify_dataset
from .datasets import center
from .harness import (ExperimentConfig, dump_adversarial_grid, fit_projection,
                      load_dataset_pair, parse_config, run_sweep, train_head)
from .heads import LinearHead
from .modelio import load_model, save_model
from .projection import project, sparsity_report
from .report import read_csv, render_curves, render_curves_png, write_csv


def _config_from_args(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.mnist_dir:
        overrides["mnist_dir"] = args.mnist_dir
    if args.cifar_dir:
        overrides["cifar_dir"] = args.cifar_dir
    if args.limit is not None:
        overrides["limit"] = args.limit
    if args.config:
        return parse_config(args.config, **overrides)
    return ExperimentConfig(**overrides)


def _prepared(config):
    train, test = load_dataset_pair(config)
    _, info = center(train.X)
    return train, test, info


def cmd_fit(args):
    config = _config_from_args(args)
    train, _, info = _prepared(config)
    model = fit_projection(args.kind, train.X, args.r, config.density, info.mean)
    os.makedirs(config.out_dir, exist_ok=True)
    path = args.model or os.path.join(
        config.out_dir, f"{config.dataset}-{args.kind}-r{args.r}.model"
    )
    save_model(path, model, None)
    rep = sparsity_report(model)
    print(f"saved {path}")
    print(f"density={rep.density:.4f} col_norm_sum={rep.col_norm_sum:.4f} "
          f"spectral={rep.spectral_norm:.4f}")
    return 0


def cmd_train(args):
    config = _config_from_args(args)
    train, test, info = _prepared(config)
    model = fit_projection(args.kind, train.X, args.r, config.density, info.mean)
    Z = project(model, train.X)
    head = train_head(config.head, Z, train.y, config.train, train.n_classes)
    os.makedirs(config.out_dir, exist_ok=True)
    path = args.model or os.path.join(
        config.out_dir, f"{config.dataset}-{args.kind}-r{args.r}-{config.head}.model"
    )
    save_model(path, model, head)
    from .harness import _clean_accuracy

    print(f"saved {path}")
    print(f"clean test accuracy: {_clean_accuracy(model, head, test):.4f}")
    return 0


def _load_trained(path):
    model, head = load_model(path)
    if head is None:
        print("model file contains no trained head", file=sys.stderr)
        raise SystemExit(2)
    return model, head


def cmd_attack(args):
    config = _config_from_args(args)
    model, head = _load_trained(args.model)
    _, test, _ = _prepared(config)
    if config.limit:
        from .harness import _subset

        test = _subset(test, config.limit)
    attack_config = AttackConfig(
        kind=args.attack,
        threat=ThreatModel(p=args.norm, epsilon=args.epsilon),
        seed=config.seed,
        clip_to_unit_box=not args.no_clip,
    )
    acc = attacks_mod.robust_accuracy(model, head, test, attack_config)
    print(f"{args.attack} l{args.norm} eps={args.epsilon}: "
          f"robust accuracy {acc:.6f} on {test.n} points")
    return 0


def cmd_certify(args):
    config = _config_from_args(args)
    model, head = _load_trained(args.model)
    if not isinstance(head, LinearHead):
        print("certificates require a linear head", file=sys.stderr)
        return 2
    _, test, _ = _prepared(config)
    if config.limit:
        from .harness import _subset

        test = _subset(test, config.limit)
    os.makedirs(config.out_dir, exist_ok=True)
    detail_path = os.path.join(config.out_dir, f"certificates-l{args.norm}.csv")
    records = certify_dataset(model, head, test, args.norm)
    with open(detail_path, "w") as f:
        f.write("index,clean_pred,label,margin,dual_norm,radius,norm_p\n")
        for rec in records:
            radius = "inf" if rec.radius == float("inf") else f"{rec.radius:.6f}"
            f.write(f"{rec.index},{rec.clean_pred},{rec.label},{rec.margin:.6f},"
                    f"{rec.dual_norm:.6f},{radius},{rec.norm_p}\n")
    curve = certified_accuracy_curve(model, head, test, args.norm,
                                     sorted(config.epsilons))
    for eps, frac in curve:
        print(f"eps={eps:.2f}: certified accuracy {frac:.6f}")
    print(f"per-example detail written to {detail_path}")
    return 0


def cmd_sweep(args):
    config = _config_from_args(args)
    progress = print if args.verbose else None
    rows, _ = run_sweep(config, progress=progress)
    os.makedirs(config.out_dir, exist_ok=True)
    csv_path = os.path.join(config.out_dir, "results.csv")
    write_csv(rows, csv_path)
    print(f"wrote {len(rows)} rows to {csv_path}")
    return 0


def cmd_plot(args):
    table = read_csv(args.results)
    out = args.svg or os.path.splitext(args.results)[0] + ".svg"
    render_curves(table, out)
    print(f"wrote {out}")
    if args.png:
        render_curves_png(table, args.png)
        print(f"wrote {args.png}")
    return 0


def cmd_dump_advex(args):
    config = _config_from_args(args)
    model, head = _load_trained(args.model)
    _, test, _ = _prepared(config)
    attack_config = AttackConfig(
        kind=args.attack,
        threat=ThreatModel(p=args.norm, epsilon=args.epsilon),
        seed=config.seed,
    )
    out_dir = os.path.join(config.out_dir, "advex")
    paths = dump_adversarial_grid(model, head, test, attack_config, args.count, out_dir)
    print(f"wrote {len(paths)} clean/adversarial pairs to {out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robustproj",
        description="PCA/SPCA projections, heads, certificates, and attacks",
    )
    parser.add_argument("--config", help="key=value experiment config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--mnist-dir", default="", help="directory with MNIST IDX files")
    parser.add_argument("--cifar-dir", default="", help="directory with CIFAR-10 binary batches")
    parser.add_argument("--limit", type=int, default=None,
                        help="evaluate at most N test points")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a projection and save it")
    p.add_argument("--kind", choices=["pca", "spca"], required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--model", help="output model path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train", help="fit a projection, train a head, save both")
    p.add_argument("--kind", choices=["pca", "spca"], required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--model", help="output model path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="run one attack against a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--attack", choices=["fgsm", "pgd", "mim", "square"], required=True)
    p.add_argument("--norm", choices=["inf", "2"], default="inf")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--no-clip", action="store_true",
                   help="skip clipping adversarial examples to [0,1]")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("certify", help="exact certificates for a linear-head model")
    p.add_argument("--model", required=True)
    p.add_argument("--norm", choices=["inf", "2"], default="inf")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="full projection x r x attack x epsilon grid")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render accuracy curves from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--svg", help="output SVG path")
    p.add_argument("--png", help="also render a matplotlib PNG here")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("dump-advex", help="write clean/adversarial PGM pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--attack", choices=["fgsm", "pgd", "mim", "square"], default="fgsm")
    p.add_argument("--norm", choices=["inf", "2"], default="inf")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--count", type=int, default=8)
    p.set_defaults(func=cmd_dump_advex)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
