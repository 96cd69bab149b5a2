"""Sequential filtering, rank metrics, and benchmark report assembly.

Rank-dependent metrics are computed under a fixed protocol: raw outputs
are first filtered for structural integrity, the survivors are filtered
against all explicit task constraints (stock termination, etc.), and only
then is Top-K accuracy read off the fully validated pool, in the model's
original output order. Stock termination is scored on the structurally
valid pool.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from routecast.benchmark import BenchmarkDefinition, BenchmarkTarget
from routecast.errors import RoutecastError
from routecast.expand import GroundTruthSet, expand_ground_truths
from routecast.rng import derive_seed_label
from routecast.schema import Route, RouteStats, Topology, canonical_key, route_stats
from routecast.stats import BootstrapCI, PairedDiffResult, bootstrap_ci, paired_diff
from routecast.stock import StockSet, is_stock_terminated


class EvaluationError(RoutecastError):
    pass


@dataclass(frozen=True)
class FilterTrace:
    n_raw: int
    n_structurally_valid: int
    n_constraint_valid: int
    rejected: tuple[tuple[int, str], ...]  # (1-based source rank, reason)


@dataclass(frozen=True)
class Constraint:
    name: str
    predicate: Callable[[Route], bool]


def stock_termination_constraint(stock: StockSet) -> Constraint:
    return Constraint(
        name="StockTermination",
        predicate=lambda route: is_stock_terminated(route, stock),
    )


def structural_filter(
    raw: Sequence[Route | Exception], target: str
) -> tuple[list[Route], FilterTrace]:
    """Keep parseable, valid routes rooted at the queried target.

    Rejections are recorded (rank, reason), never raised; order is
    preserved.
    """
    kept: list[Route] = []
    rejected: list[tuple[int, str]] = []
    for rank, entry in enumerate(raw, start=1):
        if isinstance(entry, Exception):
            rejected.append((rank, type(entry).__name__))
        elif entry.target != target:
            rejected.append((rank, "TargetMismatch"))
        else:
            kept.append(entry)
    return kept, FilterTrace(
        n_raw=len(raw),
        n_structurally_valid=len(kept),
        n_constraint_valid=len(kept),
        rejected=tuple(rejected),
    )


def constraint_filter(
    routes: Sequence[Route],
    constraints: Sequence[Constraint],
    trace: FilterTrace | None = None,
) -> tuple[list[Route], FilterTrace]:
    """Keep routes satisfying every constraint; order preserved.

    When ``trace`` carries the structural-filter bookkeeping, the merged
    trace reports raw/structural counts from it and rejection ranks stay
    relative to this function's input pool.
    """
    kept: list[Route] = []
    rejected: list[tuple[int, str]] = []
    for rank, route in enumerate(routes, start=1):
        failed = next((c.name for c in constraints if not c.predicate(route)), None)
        if failed is None:
            kept.append(route)
        else:
            rejected.append((rank, failed))
    n_raw = trace.n_raw if trace else len(routes)
    n_structural = trace.n_structurally_valid if trace else len(routes)
    prior = trace.rejected if trace else ()
    return kept, FilterTrace(
        n_raw=n_raw,
        n_structurally_valid=n_structural,
        n_constraint_valid=len(kept),
        rejected=prior + tuple(rejected),
    )


def topk_accuracy(
    filtered: Sequence[Route], gts: GroundTruthSet, k: int
) -> tuple[bool, int | None]:
    """Match against the expanded ground-truth keys.

    Returns (hit within the first k, 1-based rank of the first match over
    the whole filtered list).
    """
    if k < 1:
        raise EvaluationError("k must be >= 1")
    first = next(
        (
            rank
            for rank, route in enumerate(filtered, start=1)
            if canonical_key(route) in gts.keys
        ),
        None,
    )
    return (first is not None and first <= k), first


def str_metric(filtered_structural: Sequence[Route], stock: StockSet) -> bool:
    """True iff any structurally valid route terminates in stock."""
    return any(is_stock_terminated(route, stock) for route in filtered_structural)


# ---------------------------------------------------------------------------
# Cost model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostSummary:
    n_targets: int
    seconds_per_target: float
    rate_usd_per_hour: float
    total_usd: float


def cost_summary(
    n_targets: int, seconds_per_target: float, rate_usd_per_hour: float
) -> CostSummary:
    """Total benchmark cost from user-supplied timing and a cloud rate."""
    if n_targets < 0 or seconds_per_target < 0 or rate_usd_per_hour < 0:
        raise EvaluationError("cost inputs must be non-negative")
    total = seconds_per_target * n_targets * rate_usd_per_hour / 3600.0
    return CostSummary(
        n_targets=n_targets,
        seconds_per_target=seconds_per_target,
        rate_usd_per_hour=rate_usd_per_hour,
        total_usd=total,
    )


# ---------------------------------------------------------------------------
# Per-target and benchmark-level evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetResult:
    target_id: str
    stock_terminated: bool
    first_match_rank: int | None
    strata: RouteStats
    wall_seconds: float | None
    filter_trace: FilterTrace


@dataclass(frozen=True)
class BenchmarkReport:
    benchmark_id: str
    model_id: str
    k_values: tuple[int, ...]
    stats_seed: int
    resamples: int
    per_target: tuple[TargetResult, ...]
    aggregates: Mapping[str, BootstrapCI]
    stratified: Mapping[str, Mapping[str, BootstrapCI]]
    cost: CostSummary | None


def _worker_count() -> int:
    raw = os.environ.get("ROUTECAST_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _evaluate_target(
    target: BenchmarkTarget,
    raw: Sequence[Route | Exception],
    stock: StockSet,
    wall_seconds: float | None,
) -> TargetResult:
    structural, trace = structural_filter(raw, target.target)
    terminated = str_metric(structural, stock)
    valid, trace = constraint_filter(
        structural, [stock_termination_constraint(stock)], trace
    )
    gts = GroundTruthSet(
        target=target.target,
        original_key=canonical_key(target.reference),
        keys=target.gt_keys,
        n_variants=target.n_variants,
    )
    _, first_rank = topk_accuracy(valid, gts, k=1)
    return TargetResult(
        target_id=target.target_id,
        stock_terminated=terminated,
        first_match_rank=first_rank,
        strata=route_stats(target.reference),
        wall_seconds=wall_seconds,
        filter_trace=trace,
    )


def _metric_outcomes(
    results: Sequence[TargetResult], metric: str
) -> list[float]:
    if metric == "str":
        return [1.0 if r.stock_terminated else 0.0 for r in results]
    if metric.startswith("top"):
        k = int(metric[3:])
        return [
            1.0 if r.first_match_rank is not None and r.first_match_rank <= k else 0.0
            for r in results
        ]
    raise EvaluationError(f"unknown metric {metric!r}")


def evaluate_benchmark(
    benchmark: BenchmarkDefinition,
    predictions: Mapping[str, Sequence[Route | Exception]],
    stock: StockSet,
    k_values: Sequence[int] = (1, 10),
    *,
    stats_seed: int,
    resamples: int = 10_000,
    timings: Mapping[str, float] | None = None,
    rate_usd_per_hour: float | None = None,
    model_id: str = "unknown",
) -> tuple[BenchmarkReport, list[str]]:
    """Score a prediction set against a benchmark definition.

    Every benchmark target is scored; targets missing from the predictions
    count as failures (the benchmark's N is fixed) and are listed in the
    returned warnings, as are extra prediction targets. Deterministic
    given ``stats_seed``.
    """
    warnings: list[str] = []
    benchmark_ids = set(benchmark.target_ids())
    missing = sorted(benchmark_ids - set(predictions))
    extra = sorted(set(predictions) - benchmark_ids)
    if missing:
        warnings.append(
            f"{len(missing)} benchmark targets without predictions "
            f"(scored as failures): {', '.join(missing[:5])}"
            + ("..." if len(missing) > 5 else "")
        )
    if extra:
        warnings.append(f"{len(extra)} predicted targets not in the benchmark: ignored")

    timings = dict(timings or {})

    def run(target: BenchmarkTarget) -> TargetResult:
        return _evaluate_target(
            target,
            predictions.get(target.target_id, ()),
            stock,
            timings.get(target.target_id),
        )

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = tuple(pool.map(run, benchmark.targets))
    else:
        results = tuple(run(t) for t in benchmark.targets)

    metrics = ["str"] + [f"top{k}" for k in sorted(set(int(k) for k in k_values))]
    aggregates = {
        metric: bootstrap_ci(
            _metric_outcomes(results, metric),
            resamples,
            seed=derive_seed_label(stats_seed, metric),
        )
        for metric in metrics
    }

    stratum_members: dict[str, list[TargetResult]] = {}
    for result in results:
        for stratum in (
            f"length:{result.strata.length}",
            f"topology:{result.strata.topology.value}",
        ):
            stratum_members.setdefault(stratum, []).append(result)
    stratified = {
        stratum: {
            metric: bootstrap_ci(
                _metric_outcomes(members, metric),
                resamples,
                seed=derive_seed_label(stats_seed, f"{stratum}/{metric}"),
            )
            for metric in metrics
        }
        for stratum, members in sorted(stratum_members.items())
    }

    cost = None
    if timings and rate_usd_per_hour is not None:
        measured = [t for t in (r.wall_seconds for r in results) if t is not None]
        if measured:
            cost = cost_summary(
                n_targets=len(results),
                seconds_per_target=sum(measured) / len(measured),
                rate_usd_per_hour=rate_usd_per_hour,
            )

    report = BenchmarkReport(
        benchmark_id=benchmark.id,
        model_id=model_id,
        k_values=tuple(sorted(set(int(k) for k in k_values))),
        stats_seed=stats_seed,
        resamples=resamples,
        per_target=results,
        aggregates=aggregates,
        stratified=stratified,
        cost=cost,
    )
    return report, warnings


def quick_scores(
    candidate: Sequence[Route],
    predictions: Mapping[str, Sequence[Route | Exception]],
    stock: StockSet,
) -> tuple[float, float, float]:
    """Mean (stock termination, top-1, top-10) of a prediction set over a
    candidate reference list; no bootstrap, used by seed-stability scoring.

    Candidate routes must carry ``target_id`` metadata.
    """
    if not candidate:
        raise EvaluationError("cannot score an empty candidate")
    hits_str = hits_top1 = hits_top10 = 0
    for reference in candidate:
        target_id = reference.metadata.get("target_id")
        if target_id is None:
            raise EvaluationError("candidate route lacks target_id metadata")
        raw = predictions.get(target_id, ())
        structural, _ = structural_filter(raw, reference.target)
        if str_metric(structural, stock):
            hits_str += 1
        valid, _ = constraint_filter(structural, [stock_termination_constraint(stock)])
        gts = expand_ground_truths(reference, stock)
        _, first = topk_accuracy(valid, gts, k=1)
        if first is not None:
            hits_top10 += 1 if first <= 10 else 0
            hits_top1 += 1 if first <= 1 else 0
    n = len(candidate)
    return (hits_str / n, hits_top1 / n, hits_top10 / n)


# ---------------------------------------------------------------------------
# Prediction and timing loaders
# ---------------------------------------------------------------------------


def group_predictions(
    routes: Sequence[Route],
) -> tuple[dict[str, list[Route]], list[str]]:
    """Group interchange prediction routes by target id, ordered by rank.

    Requires ``target_id`` and ``rank`` metadata on every route; ranks
    should be contiguous from 1 per target (violations produce warnings,
    and routes are reordered by their declared rank).
    """
    warnings: list[str] = []
    grouped: dict[str, list[tuple[int, Route]]] = {}
    for index, route in enumerate(routes):
        target_id = route.metadata.get("target_id")
        if target_id is None:
            raise EvaluationError(
                f"prediction {index} lacks required metadata key 'target_id'"
            )
        rank_text = route.metadata.get("rank")
        if rank_text is None:
            raise EvaluationError(
                f"prediction {index} ({target_id}) lacks required metadata key 'rank'"
            )
        try:
            rank = int(rank_text)
        except ValueError:
            raise EvaluationError(
                f"prediction {index} ({target_id}) has non-integer rank {rank_text!r}"
            ) from None
        grouped.setdefault(target_id, []).append((rank, route))

    ordered: dict[str, list[Route]] = {}
    for target_id, entries in grouped.items():
        entries.sort(key=lambda pair: pair[0])
        ranks = [rank for rank, _ in entries]
        if ranks != list(range(1, len(ranks) + 1)):
            warnings.append(
                f"target {target_id}: ranks are not contiguous from 1 ({ranks[:10]})"
            )
        ordered[target_id] = [route for _, route in entries]
    return ordered, warnings


def load_timings(path: str | Path) -> dict[str, float]:
    """Read a ``target_id,wall_seconds`` CSV (header required)."""
    path = Path(path)
    timings: dict[str, float] = {}
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "target_id" not in reader.fieldnames:
            raise EvaluationError(
                f"timing file {path} must have a target_id,wall_seconds header"
            )
        for row in reader:
            try:
                value = float(row["wall_seconds"])
            except (KeyError, TypeError, ValueError):
                raise EvaluationError(
                    f"timing file {path}: bad wall_seconds for {row.get('target_id')!r}"
                ) from None
            if value < 0:
                raise EvaluationError(
                    f"timing file {path}: negative wall_seconds for {row['target_id']!r}"
                )
            timings[row["target_id"]] = value
    return timings


# ---------------------------------------------------------------------------
# Report (de)serialization: stable key order, diff-friendly
# ---------------------------------------------------------------------------

REPORT_SCHEMA_VERSION = 1


def _ci_to_dict(ci: BootstrapCI) -> dict:
    return {
        "mean": ci.mean,
        "lo": ci.lo,
        "hi": ci.hi,
        "n": ci.n,
        "resamples": ci.resamples,
        "reliable": ci.reliable,
        "seed": ci.seed,
    }


def _ci_from_dict(obj: dict) -> BootstrapCI:
    return BootstrapCI(**obj)


def report_to_dict(report: BenchmarkReport) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "benchmark_id": report.benchmark_id,
        "model_id": report.model_id,
        "n_targets": len(report.per_target),
        "k_values": list(report.k_values),
        "stats_seed": report.stats_seed,
        "resamples": report.resamples,
        "aggregates": {m: _ci_to_dict(ci) for m, ci in report.aggregates.items()},
        "stratified": {
            stratum: {m: _ci_to_dict(ci) for m, ci in metrics.items()}
            for stratum, metrics in report.stratified.items()
        },
        "cost": (
            None
            if report.cost is None
            else {
                "n_targets": report.cost.n_targets,
                "seconds_per_target": report.cost.seconds_per_target,
                "rate_usd_per_hour": report.cost.rate_usd_per_hour,
                "total_usd": report.cost.total_usd,
            }
        ),
        "per_target": [
            {
                "target_id": r.target_id,
                "stock_terminated": r.stock_terminated,
                "first_match_rank": r.first_match_rank,
                "strata": {
                    "length": r.strata.length,
                    "topology": r.strata.topology.value,
                    "n_steps": r.strata.n_steps,
                    "n_leaves": r.strata.n_leaves,
                },
                "wall_seconds": r.wall_seconds,
                "filter_trace": {
                    "n_raw": r.filter_trace.n_raw,
                    "n_structurally_valid": r.filter_trace.n_structurally_valid,
                    "n_constraint_valid": r.filter_trace.n_constraint_valid,
                    "rejected": [list(entry) for entry in r.filter_trace.rejected],
                },
            }
            for r in report.per_target
        ],
    }


def report_from_dict(document: dict) -> BenchmarkReport:
    per_target = tuple(
        TargetResult(
            target_id=r["target_id"],
            stock_terminated=r["stock_terminated"],
            first_match_rank=r["first_match_rank"],
            strata=RouteStats(
                length=r["strata"]["length"],
                topology=Topology(r["strata"]["topology"]),
                n_steps=r["strata"]["n_steps"],
                n_leaves=r["strata"]["n_leaves"],
            ),
            wall_seconds=r["wall_seconds"],
            filter_trace=FilterTrace(
                n_raw=r["filter_trace"]["n_raw"],
                n_structurally_valid=r["filter_trace"]["n_structurally_valid"],
                n_constraint_valid=r["filter_trace"]["n_constraint_valid"],
                rejected=tuple(
                    (int(rank), reason) for rank, reason in r["filter_trace"]["rejected"]
                ),
            ),
        )
        for r in document["per_target"]
    )
    cost = None
    if document.get("cost") is not None:
        cost = CostSummary(**document["cost"])
    return BenchmarkReport(
        benchmark_id=document["benchmark_id"],
        model_id=document["model_id"],
        k_values=tuple(document["k_values"]),
        stats_seed=document["stats_seed"],
        resamples=document["resamples"],
        per_target=per_target,
        aggregates={
            m: _ci_from_dict(ci) for m, ci in document["aggregates"].items()
        },
        stratified={
            stratum: {m: _ci_from_dict(ci) for m, ci in metrics.items()}
            for stratum, metrics in document["stratified"].items()
        },
        cost=cost,
    )


def save_report(report: BenchmarkReport, path: str | Path) -> None:
    payload = json.dumps(report_to_dict(report), indent=2, sort_keys=True)
    Path(path).write_text(payload + "\n", encoding="utf-8")


def load_report(path: str | Path) -> BenchmarkReport:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise EvaluationError(f"cannot load report {path}: {exc}") from exc
    try:
        return report_from_dict(document)
    except (KeyError, TypeError, ValueError) as exc:
        raise EvaluationError(f"malformed report file {path}: {exc}") from exc


def compare_reports(
    report_a: BenchmarkReport,
    report_b: BenchmarkReport,
    metric: str,
    *,
    seed: int,
    resamples: int = 10_000,
) -> PairedDiffResult:
    """Paired bootstrap difference test between two reports on one metric.

    Outcomes are rebuilt from the per-target records and paired by target
    id; both reports must cover the same target set.
    """
    ids_a = {r.target_id for r in report_a.per_target}
    ids_b = {r.target_id for r in report_b.per_target}
    if ids_a != ids_b:
        raise EvaluationError(
            "reports cover different target sets; paired comparison is undefined "
            f"(only in A: {sorted(ids_a - ids_b)[:3]}, only in B: {sorted(ids_b - ids_a)[:3]})"
        )
    order = sorted(ids_a)
    by_id_a = {r.target_id: r for r in report_a.per_target}
    by_id_b = {r.target_id: r for r in report_b.per_target}
    outcomes_a = _metric_outcomes([by_id_a[i] for i in order], metric)
    outcomes_b = _metric_outcomes([by_id_b[i] for i in order], metric)
    return paired_diff(outcomes_a, outcomes_b, resamples, seed=seed)
