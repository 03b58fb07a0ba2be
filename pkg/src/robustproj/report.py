"""Result tables and report artifacts: CSV, dependency-free SVG curves, PGM
image grids, and optional matplotlib renderings.

The SVG and PGM writers are deliberately hand-rolled so that a sweep's output
is byte-for-byte reproducible; matplotlib is only used for the optional PNG
report figures.
"""

import csv
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ParameterError

CSV_COLUMNS = ("dataset", "projection", "r", "head", "attack", "norm", "epsilon",
               "accuracy", "n", "seed")

# fixed palette indexed by rank of r within the sweep, dark blue -> warm red
PALETTE = ("#1f3b73", "#2c7fb8", "#41ae76", "#d9a521", "#d95f0e", "#c22f2f",
           "#7a1fa2", "#50565e")

PANEL_W, PANEL_H = 340, 260
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 48, 16, 28, 40


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    projection: str
    r: int
    head: str
    attack: str
    norm: str
    epsilon: float
    accuracy: float
    n: int
    seed: int

    def __post_init__(self):
        if math.isfinite(self.accuracy) and not 0.0 <= self.accuracy <= 1.0:
            raise ParameterError(f"accuracy {self.accuracy} outside [0, 1]")


def row_sort_key(row):
    return (row.dataset, row.projection, row.r, row.head, row.attack, row.norm,
            row.epsilon, row.seed)


def write_csv(table, path):
    """Write result rows with the fixed column order and 6-decimal accuracy."""
    if not table:
        raise ParameterError("refusing to write an empty result table")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for row in sorted(table, key=row_sort_key):
            writer.writerow([
                row.dataset, row.projection, row.r, row.head, row.attack,
                row.norm, f"{row.epsilon:g}", f"{row.accuracy:.6f}", row.n, row.seed,
            ])


def read_csv(path):
    """Parse a result CSV back into rows (the plot subcommand's input)."""
    table = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for rec in reader:
            table.append(ResultRow(
                dataset=rec["dataset"], projection=rec["projection"],
                r=int(rec["r"]), head=rec["head"], attack=rec["attack"],
                norm=rec["norm"], epsilon=float(rec["epsilon"]),
                accuracy=float(rec["accuracy"]), n=int(rec["n"]),
                seed=int(rec["seed"]),
            ))
    return table


def scale_point(eps, acc, eps_min, eps_max):
    """Map (epsilon, accuracy) to panel-local SVG coordinates."""
    span = eps_max - eps_min
    fx = 0.0 if span == 0 else (eps - eps_min) / span
    x = MARGIN_L + fx * (PANEL_W - MARGIN_L - MARGIN_R)
    y = MARGIN_T + (1.0 - acc) * (PANEL_H - MARGIN_T - MARGIN_B)
    return x, y


def _panel_svg(title, curves, eps_min, eps_max, r_values, x0, y0):
    """One accuracy-vs-epsilon panel; solid lines SPCA, dashed PCA."""
    parts = [f'<g transform="translate({x0},{y0})">']
    left, right = MARGIN_L, PANEL_W - MARGIN_R
    top, bottom = MARGIN_T, PANEL_H - MARGIN_B
    parts.append(
        f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
        'fill="none" stroke="#444" stroke-width="1"/>'
    )
    parts.append(
        f'<text x="{(left + right) / 2:.2f}" y="{top - 10}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">{title}</text>'
    )
    for frac in (0.0, 0.5, 1.0):
        y = top + (1.0 - frac) * (bottom - top)
        parts.append(
            f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end" font-size="10" '
            f'font-family="sans-serif">{frac:.1f}</text>'
        )
        eps = eps_min + frac * (eps_max - eps_min)
        x = left + frac * (right - left)
        parts.append(
            f'<text x="{x:.2f}" y="{bottom + 14}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif">{eps:.2f}</text>'
        )
    for (projection, r), points in sorted(curves.items()):
        color = PALETTE[sorted(r_values).index(r) % len(PALETTE)]
        dash = ' stroke-dasharray="6 4"' if projection == "pca" else ""
        coords = " ".join(
            "{:.2f},{:.2f}".format(*scale_point(eps, acc, eps_min, eps_max))
            for eps, acc in sorted(points)
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} '
            f'points="{coords}"/>'
        )
    parts.append("</g>")
    return "\n".join(parts)


def _group_panels(table):
    panels = {}
    for row in table:
        if not math.isfinite(row.accuracy):
            continue
        key = (row.dataset, row.attack, row.norm)
        panels.setdefault(key, {}).setdefault((row.projection, row.r), []).append(
            (row.epsilon, row.accuracy)
        )
    return panels


def render_curves(table, path, per_row=3):
    """Render accuracy-vs-epsilon curves as plain SVG 1.1.

    One panel per (dataset, attack, norm); solid lines for SPCA, dashed for
    PCA, one palette color per component count.
    """
    if not table:
        raise ParameterError("refusing to plot an empty result table")
    panels = _group_panels(table)
    panels = {k: v for k, v in panels.items() if k[1] != "clean"}
    if not panels:
        raise ParameterError("no attack rows to plot")
    eps_all = [eps for curves in panels.values()
               for pts in curves.values() for eps, _ in pts]
    eps_min, eps_max = min(eps_all), max(eps_all)
    r_values = sorted({r for curves in panels.values() for _, r in curves})

    keys = sorted(panels)
    n_cols = min(per_row, len(keys))
    n_rows = (len(keys) + n_cols - 1) // n_cols
    width, height = n_cols * PANEL_W, n_rows * PANEL_H
    body = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i, key in enumerate(keys):
        dataset, attack, norm = key
        title = f"{dataset} — {attack} (l{norm})"
        x0 = (i % n_cols) * PANEL_W
        y0 = (i // n_cols) * PANEL_H
        body.append(_panel_svg(title, panels[key], eps_min, eps_max, r_values, x0, y0))
    body.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(body) + "\n")


def render_curves_png(table, path):
    """Matplotlib rendering of the same panels, for the PNG report path."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    panels = {k: v for k, v in _group_panels(table).items() if k[1] != "clean"}
    if not panels:
        raise ParameterError("no attack rows to plot")
    keys = sorted(panels)
    r_values = sorted({r for curves in panels.values() for _, r in curves})
    n_cols = min(3, len(keys))
    n_rows = (len(keys) + n_cols - 1) // n_cols
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(4.2 * n_cols, 3.2 * n_rows),
                             squeeze=False)
    for ax in axes.ravel():
        ax.set_visible(False)
    for i, key in enumerate(keys):
        ax = axes[i // n_cols][i % n_cols]
        ax.set_visible(True)
        dataset, attack, norm = key
        for (projection, r), pts in sorted(panels[key].items()):
            pts = sorted(pts)
            color = PALETTE[r_values.index(r) % len(PALETTE)]
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    linestyle="--" if projection == "pca" else "-",
                    color=color, label=f"{projection} r={r}")
        ax.set_title(f"{dataset} — {attack} ($\\ell_{{{norm}}}$)", fontsize=10)
        ax.set_xlabel("epsilon")
        ax.set_ylabel("accuracy")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_pgm(path, image):
    """Write one grayscale image in [0, 1] as a binary PGM (P5) file."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    quantized = np.round(arr * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        f.write(quantized.tobytes())
