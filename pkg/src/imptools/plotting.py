"""Figures for benchmark reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import ResultTable  # noqa: E402

_STYLE = {
    "ml_heuristic": dict(marker="o", color="C0"),
    "ml_exhaustive": dict(marker="s", color="C2"),
    "baseline": dict(marker="^", color="C3"),
}


def plot_success(table: ResultTable, path: str | Path, title: str | None = None) -> Path:
    """Success fraction against sequence length, one curve per method and criterion.

    Canonical and compatible curves are drawn only when they differ from the
    exact-partition curve somewhere.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    methods = sorted({r["method"] for r in table.rows})
    for method in methods:
        rows = sorted((r for r in table.rows if r["method"] == method), key=lambda r: r["n"])
        ns = [r["n"] for r in rows]
        style = _STYLE.get(method, {})
        ax.plot(ns, [r["success_exact"] for r in rows], label=method, **style)
        for kind, ls in (("canonical", "--"), ("compatible", ":")):
            ys = [r[f"success_{kind}"] for r in rows]
            if ys != [r["success_exact"] for r in rows]:
                ax.plot(ns, ys, linestyle=ls, label=f"{method} ({kind})", color=style.get("color"))
    ax.set_xscale("log")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("sequence length n")
    ax.set_ylabel("fraction correctly deinterleaved")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8, loc="lower right")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
