"""Optional SVG renderings of command results (scatter, histogram, loss curve)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def render(kind: str, data, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "vqt"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    if kind == "scatter":
        for N, (truth, meas) in data.items():
            ax.scatter(truth, meas, s=4, label=f"batch {N}")
        ax.plot([-1, 1], [-1, 1], color="k", lw=0.8)
        ax.set_xlabel("true x*y")
        ax.set_ylabel("measured")
        ax.legend(fontsize=7)
    elif kind == "histogram":
        ax.hist(np.asarray(data), bins=30)
        ax.set_xlabel("|quantum - classical|")
        ax.set_ylabel("entries")
    else:
        ax.plot(range(len(data)), data, marker="o", ms=3)
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
