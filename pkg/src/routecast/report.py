"""Leaderboard, stratified, Pareto, and seed-stability outputs.

Tables are written as CSV (the UI's data source); alongside them the
report path renders matplotlib figures to PNG files. Figures are a
convenience view of the same delimited data, never an extra source of
truth.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from routecast.benchmark import SeedStabilityResult
from routecast.errors import RoutecastError
from routecast.evaluate import BenchmarkReport


class ReportError(RoutecastError):
    pass


_METRIC_ORDER = ("str", "top1", "top10")


def _metric_columns(reports: Sequence[BenchmarkReport]) -> list[str]:
    metrics: list[str] = []
    for report in reports:
        for metric in report.aggregates:
            if metric not in metrics:
                metrics.append(metric)
    # stable, human-friendly order: str first, then topK ascending
    return sorted(metrics, key=lambda m: (m != "str", int(m[3:]) if m.startswith("top") else 0))


def _ranking_metric(reports: Sequence[BenchmarkReport]) -> str:
    metrics = _metric_columns(reports)
    for preferred in reversed(_METRIC_ORDER):
        if preferred in metrics:
            return preferred
    return metrics[-1]


def write_leaderboard(reports: Sequence[BenchmarkReport], out_path: str | Path) -> Path:
    """One row per report, sorted by the headline metric (descending)."""
    if not reports:
        raise ReportError("no reports to tabulate")
    metrics = _metric_columns(reports)
    ranking = _ranking_metric(reports)
    rows = sorted(
        reports,
        key=lambda r: r.aggregates[ranking].mean if ranking in r.aggregates else -1.0,
        reverse=True,
    )
    out_path = Path(out_path)
    with out_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        header = ["model", "benchmark", "n_targets"]
        for metric in metrics:
            header += [f"{metric}_mean", f"{metric}_lo", f"{metric}_hi", f"{metric}_reliable"]
        header += ["seconds_per_target", "total_usd"]
        writer.writerow(header)
        for report in rows:
            row: list[object] = [
                report.model_id,
                report.benchmark_id,
                len(report.per_target),
            ]
            for metric in metrics:
                ci = report.aggregates.get(metric)
                if ci is None:
                    row += ["", "", "", ""]
                else:
                    row += [f"{ci.mean:.6f}", f"{ci.lo:.6f}", f"{ci.hi:.6f}", str(ci.reliable).lower()]
            if report.cost is None:
                row += ["", ""]
            else:
                row += [f"{report.cost.seconds_per_target:.6f}", f"{report.cost.total_usd:.6f}"]
            writer.writerow(row)
    return out_path


def write_stratified(report: BenchmarkReport, out_path: str | Path) -> Path:
    """Per-stratum metric table for one report (length and topology rows)."""
    out_path = Path(out_path)
    with out_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["model", "stratum", "metric", "mean", "lo", "hi", "n", "reliable"])
        for stratum in sorted(report.stratified):
            for metric, ci in report.stratified[stratum].items():
                writer.writerow(
                    [
                        report.model_id,
                        stratum,
                        metric,
                        f"{ci.mean:.6f}",
                        f"{ci.lo:.6f}",
                        f"{ci.hi:.6f}",
                        ci.n,
                        str(ci.reliable).lower(),
                    ]
                )
    return out_path


def write_pareto(
    reports: Sequence[BenchmarkReport], out_path: str | Path, metric: str = "top10"
) -> Path:
    """Accuracy-vs-cost points, one per report (reports without cost are
    written with an empty cost cell)."""
    out_path = Path(out_path)
    with out_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["model", "benchmark", "metric", "accuracy", "lo", "hi", "total_usd"])
        for report in reports:
            ci = report.aggregates.get(metric)
            if ci is None:
                continue
            cost = "" if report.cost is None else f"{report.cost.total_usd:.6f}"
            writer.writerow(
                [
                    report.model_id,
                    report.benchmark_id,
                    metric,
                    f"{ci.mean:.6f}",
                    f"{ci.lo:.6f}",
                    f"{ci.hi:.6f}",
                    cost,
                ]
            )
    return out_path


def write_stability(result: SeedStabilityResult, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    with out_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["seed", "str", "top1", "top10", "deviation_score", "chosen"])
        for index, row in enumerate(result.rows):
            writer.writerow(
                [
                    row.seed,
                    f"{row.metrics[0]:.6f}",
                    f"{row.metrics[1]:.6f}",
                    f"{row.metrics[2]:.6f}",
                    f"{row.score:.6f}",
                    str(index == result.chosen_index).lower(),
                ]
            )
    return out_path


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def render_pareto_figure(
    reports: Sequence[BenchmarkReport], out_path: str | Path, metric: str = "top10"
) -> Path | None:
    """Scatter of accuracy against total cost with CI whiskers.

    Skipped (returns None) when no report carries both the metric and a
    cost summary.
    """
    points = [
        r for r in reports if metric in r.aggregates and r.cost is not None
    ]
    if not points:
        return None
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for report in points:
        ci = report.aggregates[metric]
        ax.errorbar(
            report.cost.total_usd,
            ci.mean,
            yerr=[[ci.mean - ci.lo], [ci.hi - ci.mean]],
            fmt="o",
            capsize=3,
            label=report.model_id,
        )
    ax.set_xlabel("total cost (USD)")
    ax.set_ylabel(f"{metric} accuracy")
    ax.set_title("accuracy vs. compute cost")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_stratified_figure(
    reports: Sequence[BenchmarkReport], out_path: str | Path, metric: str = "top10"
) -> Path | None:
    """Accuracy per reference length, one line per model."""
    drawn = False
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for report in reports:
        lengths = []
        means = []
        err_lo = []
        err_hi = []
        for stratum in sorted(report.stratified):
            if not stratum.startswith("length:"):
                continue
            ci = report.stratified[stratum].get(metric)
            if ci is None:
                continue
            lengths.append(int(stratum.split(":", 1)[1]))
            means.append(ci.mean)
            err_lo.append(ci.mean - ci.lo)
            err_hi.append(ci.hi - ci.mean)
        if not lengths:
            continue
        order = sorted(range(len(lengths)), key=lengths.__getitem__)
        ax.errorbar(
            [lengths[i] for i in order],
            [means[i] for i in order],
            yerr=[[err_lo[i] for i in order], [err_hi[i] for i in order]],
            marker="o",
            capsize=3,
            label=report.model_id,
        )
        drawn = True
    if not drawn:
        plt.close(fig)
        return None
    ax.set_xlabel("reference route length")
    ax.set_ylabel(f"{metric} accuracy")
    ax.set_title(f"{metric} by reference length")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_stability_figure(result: SeedStabilityResult, out_path: str | Path) -> Path:
    """Per-seed metric means with the cross-seed mean and the chosen seed."""
    names = ("stock termination", "top-1", "top-10")
    fig, axes = plt.subplots(1, 3, figsize=(9.0, 3.2), sharey=True)
    y = list(range(len(result.rows)))
    for column, (ax, name) in enumerate(zip(axes, names)):
        values = [row.metrics[column] for row in result.rows]
        grand_mean = sum(values) / len(values)
        ax.scatter(values, y, s=18)
        chosen = result.rows[result.chosen_index]
        ax.scatter([chosen.metrics[column]], [result.chosen_index], s=48, marker="*")
        ax.axvline(grand_mean, linestyle="--", linewidth=1)
        ax.set_title(name, fontsize=9)
        ax.set_xlabel("mean")
    axes[0].set_ylabel("seed index")
    axes[0].set_yticks(y)
    axes[0].set_yticklabels([str(row.seed) for row in result.rows], fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
