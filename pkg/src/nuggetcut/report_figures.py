"""Figure rendering for evaluation reports.

Written next to the delimited report outputs: a per-case DSC bar chart
and a manual-vs-automatic volume comparison.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evalstat import EvalReport

_SUBGROUP_COLORS = ("#4878a8", "#c44e52", "#55a868", "#8172b2")


def render_report_figures(report: EvalReport, basepath: str) -> list[str]:
    """Render figures for ``report`` as ``<basepath>_dsc.png`` and
    ``<basepath>_volumes.png``; returns the written paths."""
    written = []
    written.append(_dsc_bars(report, f"{basepath}_dsc.png"))
    written.append(_volume_scatter(report, f"{basepath}_volumes.png"))
    return written


def _subgroup_color(report, row):
    tags = sorted({r.subgroup for r in report.rows if r.subgroup is not None})
    if row.subgroup is None or row.subgroup not in tags:
        return _SUBGROUP_COLORS[0]
    return _SUBGROUP_COLORS[tags.index(row.subgroup) % len(_SUBGROUP_COLORS)]


def _dsc_bars(report: EvalReport, path: str) -> str:
    fig, ax = plt.subplots(figsize=(max(6.0, 0.5 * len(report.rows)), 3.5))
    xs = np.arange(len(report.rows))
    dsc = [r.dsc_percent for r in report.rows]
    colors = [_subgroup_color(report, r) for r in report.rows]
    ax.bar(xs, dsc, color=colors)
    if "DSC percent" in report.overall:
        mean = report.overall["DSC percent"].mean
        ax.axhline(mean, color="black", linewidth=0.8, linestyle="--",
                   label=f"mean {mean:.2f}")
        ax.legend(frameon=False, fontsize=8)
    ax.set_xticks(xs)
    ax.set_xticklabels([r.case_id for r in report.rows], rotation=45,
                       ha="right", fontsize=8)
    ax.set_ylabel("DSC (%)")
    ax.set_ylim(0, 100)
    ax.set_title("Overlap per case")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _volume_scatter(report: EvalReport, path: str) -> str:
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    manual = np.array([r.manual_volume_mm3 for r in report.rows])
    auto = np.array([r.automatic_volume_mm3 for r in report.rows])
    colors = [_subgroup_color(report, r) for r in report.rows]
    ax.scatter(manual / 1000.0, auto / 1000.0, c=colors, s=28, zorder=3)
    lim = max(manual.max(), auto.max()) / 1000.0 * 1.1
    ax.plot([0, lim], [0, lim], color="gray", linewidth=0.8, zorder=1)
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)
    ax.set_xlabel("manual volume (cm$^3$)")
    ax.set_ylabel("automatic volume (cm$^3$)")
    ax.set_title("Volume agreement")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
