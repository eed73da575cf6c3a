"""Figures for gap studies (matplotlib, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiment import GapStudyResult  # noqa: E402

_FLOOR = 1e-16  # gaps at or below this are drawn at the floor on log axes


def _log_gaps(res: GapStudyResult) -> np.ndarray:
    return np.log10(np.maximum(np.abs(res.gaps), _FLOOR))


def gap_histogram(results: dict[str, GapStudyResult], ax=None):
    """Histogram of ``log10 |relative gap|`` per study, with the threshold marked."""
    if ax is None:
        _, ax = plt.subplots(figsize=(6.0, 3.6))
    all_gaps = [_log_gaps(r) for r in results.values() if r.gaps.size]
    if all_gaps:
        lo = min(float(g.min()) for g in all_gaps)
        hi = max(float(g.max()) for g in all_gaps)
        bins = np.linspace(np.floor(lo), max(np.ceil(hi), np.floor(lo) + 1), 40)
        for label, res in results.items():
            if res.gaps.size:
                ax.hist(_log_gaps(res), bins=bins, histtype="step", lw=1.5, label=label)
    thr = next(iter(results.values())).threshold if results else 1e-4
    ax.axvline(np.log10(thr), color="k", ls="--", lw=1, label=f"threshold {thr:.0e}")
    ax.set_xlabel(r"$\log_{10}$ |relative duality gap|")
    ax.set_ylabel("instances")
    ax.legend(frameon=False, fontsize=8)
    return ax


def gap_profile(results: dict[str, GapStudyResult], ax=None):
    """Sorted ``|relative gap|`` per study against the instance rank."""
    if ax is None:
        _, ax = plt.subplots(figsize=(6.0, 3.6))
    for label, res in results.items():
        g = np.sort(np.maximum(np.abs(res.gaps), _FLOOR))
        if g.size:
            ax.semilogy(np.arange(1, g.size + 1), g, marker=".", ms=3, lw=0.8, label=label)
    thr = next(iter(results.values())).threshold if results else 1e-4
    ax.axhline(thr, color="k", ls="--", lw=1)
    ax.set_xlabel("instance (sorted by gap)")
    ax.set_ylabel("|relative duality gap|")
    ax.legend(frameon=False, fontsize=8)
    return ax


def save_gap_figures(results: dict[str, GapStudyResult], folder: str | Path, stem: str = "gap") -> list[Path]:
    """Write histogram and profile PNGs into ``folder``; returns the paths."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, fn in (("histogram", gap_histogram), ("profile", gap_profile)):
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        fn(results, ax=ax)
        fig.tight_layout()
        path = folder / f"{stem}_{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
