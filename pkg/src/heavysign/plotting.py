"""Matplotlib figures for reports (rendered off-screen to PNG)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLUMN = {"l1": "grad_l1", "l2": "grad_l2", "nuclear": "grad_nuclear", "frobenius": "grad_fro"}
# fixed metadata keeps PNG bytes stable across runs
_META = {"Software": None}


def _read_column(path: Path, column: str):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t"]) for r in rows])
    v = np.array([float(r[column]) for r in rows])
    return t, v


def plot_native_curves(summaries, fig_dir: Path) -> list[Path]:
    """One panel per optimizer: native gradient norm against t for the longest run of each seed."""
    by_opt: dict[str, list] = {}
    for d, s in summaries:
        by_opt.setdefault(s["optimizer"], []).append((d, s))
    paths = []
    for opt, items in sorted(by_opt.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        drew = False
        for d, s in items:
            cells = [c for c in s["cells"] if c.get("csv")]
            if not cells:
                continue
            Tmax = max(c["T"] for c in cells)
            for c in sorted((c for c in cells if c["T"] == Tmax), key=lambda c: c["seed"]):
                t, v = _read_column(Path(d) / c["csv"], COLUMN[c["native_norm"]])
                ok = v > 0
                if not np.any(ok):
                    continue
                ax.loglog(t[ok], v[ok], lw=0.8, alpha=0.8,
                          label=f"{s['problem']['id']} p={s['noise']['p']:g} seed {c['seed']}")
                drew = True
        if not drew:
            plt.close(fig)
            continue
        native = items[0][1]["cells"][0]["native_norm"]
        ax.set_xlabel("step t")
        ax.set_ylabel(f"||grad f(x_t)|| ({native})")
        ax.set_title(f"{opt}: native-norm gradient curve")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig_dir.mkdir(parents=True, exist_ok=True)
        path = fig_dir / f"curves_{opt}.png"
        fig.savefig(path, dpi=100, metadata=_META)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_rate_fits(summaries, fig_dir: Path) -> list[Path]:
    fits = [(s, s["rate_fit"]) for _, s in summaries if "rate_fit" in s]
    if not fits:
        return []
    fig, ax = plt.subplots(figsize=(6, 4))
    for s, rf in fits:
        pts = np.array(rf["points"])
        label = f"{s['optimizer']} p={s['noise']['p']:g}: {rf['exponent_hat']:.3f}"
        ax.plot(pts[:, 0], pts[:, 1], "o", ms=4, label=label)
        ax.plot(pts[:, 0], rf["intercept_hat"] - rf["exponent_hat"] * pts[:, 0], "-", lw=0.8)
    ax.set_xlabel("log T")
    ax.set_ylabel("log average native gradient norm")
    ax.set_title("fitted rate exponents")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig_dir.mkdir(parents=True, exist_ok=True)
    path = fig_dir / "rate_fits.png"
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return [path]


def plot_noise_fit(x, y, intercept: float, slope: float, path: Path, xlabel: str, ylabel: str) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    x = np.asarray(x)
    ax.plot(x, y, "o", ms=4, label="estimated moment")
    xs = np.linspace(0, float(np.max(x)), 50)
    ax.plot(xs, intercept + slope * xs, "-", label="affine fit")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path
