"""Figures for the scan outputs. Needs matplotlib, imported on first use."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_curves(rows, x: str, y: str, yerr: str | None, group: list[str], path, title: str = "",
                logx: bool = False, logy: bool = False, hline: float | None = None) -> Path:
    """One errorbar line per distinct value of the ``group`` columns."""
    plt = _pyplot()
    series = defaultdict(list)
    for r in rows:
        series[tuple(r[g] for g in group)].append(r)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for key, rs in series.items():
        rs = sorted(rs, key=lambda r: float(r[x]))
        xs = [float(r[x]) for r in rs]
        ys = [float(r[y]) for r in rs]
        es = [float(r[yerr]) for r in rs] if yerr else None
        label = ", ".join(f"{g}={v}" for g, v in zip(group, key))
        ax.errorbar(xs, ys, yerr=es, marker="o", ms=3, capsize=2, label=label)
    if hline is not None:
        ax.axhline(hline, color="grey", ls=":", lw=1)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
