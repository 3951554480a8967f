"""Static figures of g2(tau) curves (Agg backend, no display needed)."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .correlations import CorrelationSeries  # noqa: E402
from .io import atomic_write_bytes  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.1,
    "figure.dpi": 150,
    "svg.hashsalt": "cavityg2",
}
LINESTYLES = {"dashed": "--", "solid": "-"}
VECTOR = ("svg", "pdf")
RASTER = ("png",)
_METADATA = {"svg": {"Date": None}, "pdf": {"CreationDate": None}}


def _save(fig, stem: Path, formats) -> list[Path]:
    paths = []
    for ext in formats:
        if ext not in VECTOR + RASTER:
            continue
        buf = io.BytesIO()
        fig.savefig(buf, format=ext, metadata=_METADATA.get(ext))
        paths.append(atomic_write_bytes(stem.with_suffix(f".{ext}"), buf.getvalue()))
    plt.close(fig)
    return paths


def _draw(ax, curves, tau_limit):
    for label, series in curves:
        style = LINESTYLES.get(label.split()[-1], "-")
        if series.stderr.any():
            ax.errorbar(series.tau, series.g2, yerr=series.stderr, fmt=".", ms=2, label=label)
        else:
            ax.plot(series.tau, series.g2, style, color="k", label=label)
    ax.axhline(1.0, color="0.7", lw=0.6, zorder=0)
    if tau_limit:
        ax.set_xlim(0, tau_limit)
    ax.set_ylim(bottom=0)


def plot_series(curves: list[tuple[str, CorrelationSeries]], stem: str | Path, formats=("svg",),
                title: str = "", tau_limit: float | None = None) -> list[Path]:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0), layout="constrained")
        _draw(ax, curves, tau_limit)
        ax.set_xlabel(r"$\tau\kappa$")
        ax.set_ylabel(r"$g^{(2)}(\tau)$")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, Path(stem), formats)


def plot_grid(panels: dict[tuple[int, int], tuple[str, list[tuple[str, CorrelationSeries]]]],
              stem: str | Path, formats=("svg",), tau_limit: float | None = 10.0) -> list[Path]:
    """2 x 2 grid; ``panels[(row, col)] = (title, curves)``."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, figsize=(7.0, 5.0), sharex=True, layout="constrained")
        for (r, c), (title, curves) in panels.items():
            ax = axes[r][c]
            _draw(ax, curves, tau_limit)
            ax.set_title(title)
            ax.legend(frameon=False)
            if r == 1:
                ax.set_xlabel(r"$\tau\kappa$")
            if c == 0:
                ax.set_ylabel(r"$g^{(2)}(\tau)$")
        return _save(fig, Path(stem), formats)
