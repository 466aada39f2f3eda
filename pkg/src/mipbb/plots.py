"""Optional figures for benchmark reports; the CSV files remain the primary output."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _finite(*vals) -> bool:
    return all(v is not None and math.isfinite(v) for v in vals)


def pareto_plot(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for a in report.aggregates:
        t, g = a.get("time_mean"), a.get("gap_mean")
        if not _finite(t, g):
            continue
        ax.scatter(t, g, color="tab:red" if a.get("pareto") else "tab:gray")
        ax.annotate(a["policy"], (t, g), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("mean time to first solution [s]")
    ax.set_ylabel("mean optimality gap")
    ax.set_title("first solution: Pareto front in red")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def depth_gap_plot(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    policies = sorted({r["policy"] for r in report.rows})
    for i, policy in enumerate(policies):
        pts = [(r["depth"], r["gap"]) for r in report.policy_rows(policy) if _finite(r.get("depth"), r.get("gap"))]
        if pts:
            xs, ys = zip(*pts)
            ax.scatter(xs, ys, label=policy, marker="ox"[i % 2], alpha=0.7)
    ax.set_xlabel("depth of the last node in the first plunge")
    ax.set_ylabel("optimality gap")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_report(report, stem) -> list[Path]:
    if report.experiment == "first":
        return [pareto_plot(report, f"{stem}_pareto.png")]
    if report.experiment == "imitate":
        return [depth_gap_plot(report, f"{stem}_depth_gap.png")]
    return []
