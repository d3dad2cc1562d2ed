"""Static figures rendered next to the delimited report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed salt and no timestamp keep SVG output byte-identical across runs
_RC = {
    "svg.hashsalt": "topotrack",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def wealth_figure(path, curves: dict[str, np.ndarray], index_curve=None, title: str = "") -> Path:
    """Growth of $1 for each model, with the index dashed in black."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        if index_curve is not None:
            ax.plot(index_curve, color="black", ls="--", lw=1.2, label="Index")
        for name, curve in curves.items():
            ax.plot(curve, lw=1.0, label=name)
        ax.set_xlabel("out-of-sample trading day")
        ax.set_ylabel("wealth ($)")
        if title:
            ax.set_title(title)
        ax.legend(ncol=3, fontsize=7)
        fig.tight_layout()
        return _save(fig, path)


def histogram_figure(path, columns: dict[str, np.ndarray], bins: int = 20) -> Path:
    """Grid of per-asset histograms with mean (red) and median (blue) lines."""
    names = list(columns)
    ncols = 2
    nrows = max(1, -(-len(names) // ncols))
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(nrows, ncols, figsize=(7.0, 2.2 * nrows), squeeze=False)
        for ax, name in zip(axes.flat, names):
            vals = np.asarray(columns[name], dtype=float)
            vals = vals[np.isfinite(vals)]
            if vals.size:
                ax.hist(vals, bins=bins, color="0.6", edgecolor="white")
                ax.axvline(np.mean(vals), color="tab:red", lw=1.2)
                ax.axvline(np.median(vals), color="tab:blue", lw=1.2)
            ax.set_title(name, fontsize=8)
        for ax in list(axes.flat)[len(names):]:
            ax.set_visible(False)
        fig.tight_layout()
        return _save(fig, path)
