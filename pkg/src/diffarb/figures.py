"""Figure rendering for the report pipeline.

Strictly a presentation layer: everything here redraws numbers that are
already in the machine report or the paths CSV, and nothing else in the
package imports this module.  Figures are rendered headlessly to PNG
files.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_DPI = 120


def _series_label(report) -> str:
    if report.asset is None:
        return "measure-change density"
    return f"asset {report.asset}"


def save_exit_figure(reports, path) -> Path:
    """Exit probability against stopping radius, one series per defect
    report, with Wilson confidence bars.  Log scale; zero counts are
    drawn at their confidence ceiling with an open marker."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for report in reports:
        rows = report.estimate.per_radius
        radii = [row.radius for row in rows]
        label = _series_label(report)
        filled = [(r, row) for r, row in zip(radii, rows) if row.exit_count]
        empty = [(r, row) for r, row in zip(radii, rows) if not row.exit_count]
        if filled:
            line = ax.errorbar(
                [r for r, _ in filled],
                [row.p_hat for _, row in filled],
                yerr=[[row.p_hat - row.ci_lo for _, row in filled],
                      [row.ci_hi - row.p_hat for _, row in filled]],
                marker="o", capsize=3, label=label)
            color = line.lines[0].get_color()
        else:
            color = None
        if empty:
            ax.scatter([r for r, _ in empty],
                       [row.ci_hi for _, row in empty],
                       marker="v", facecolors="none",
                       edgecolors=color or "grey",
                       label=None if filled else f"{label} (no exits)")
    ax.set_yscale("log")
    ax.set_xlabel("stopping radius")
    ax.set_ylabel("exit probability")
    ax.set_title("Exit probability ladder")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_defect_figure(reports, path) -> Path:
    """Defect trend: the exit-probability ladder on a linear scale with
    its confidence band, the zero line, and each series' verdict."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for report in reports:
        rows = report.estimate.per_radius
        radii = [row.radius for row in rows]
        p_hats = [row.p_hat for row in rows]
        label = f"{_series_label(report)}: {report.trend}"
        line, = ax.plot(radii, p_hats, marker="o", label=label)
        ax.fill_between(radii, [row.ci_lo for row in rows],
                        [row.ci_hi for row in rows],
                        color=line.get_color(), alpha=0.2)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("stopping radius")
    ax.set_ylabel("estimated defect")
    ax.set_title("Martingale defect trend")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_paths_figure(csv_text: str, path) -> Path:
    """Asset price trajectories from a paths CSV (as written by
    emit_paths).  All asset columns are drawn; one colour per path."""
    path = Path(path)
    reader = csv.reader(io.StringIO(csv_text))
    header = next(reader)
    asset_cols = [j for j, name in enumerate(header) if name.startswith("S")]
    by_path: dict[str, list] = {}
    for row in reader:
        by_path.setdefault(row[0], []).append(
            (float(row[1]), [float(row[j]) for j in asset_cols]))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if by_path:
        colors = plt.cm.tab10.colors
        for k, (pid, rows) in enumerate(sorted(by_path.items(),
                                               key=lambda kv: int(kv[0]))):
            times = [t for t, _ in rows]
            color = colors[k % len(colors)]
            for j in range(len(asset_cols)):
                ax.plot(times, [vals[j] for _, vals in rows],
                        color=color, alpha=0.8, linewidth=1.0,
                        label=f"path {pid}" if j == 0 else None)
        ax.legend(fontsize="small")
    else:
        ax.text(0.5, 0.5, "no paths emitted", ha="center", va="center",
                transform=ax.transAxes)
    ax.set_xlabel("t")
    ax.set_ylabel("price")
    ax.set_title("Sample price paths")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


__all__ = ["save_exit_figure", "save_defect_figure", "save_paths_figure"]
