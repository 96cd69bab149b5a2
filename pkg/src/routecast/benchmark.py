"""Stratified benchmark construction with seed-stability selection.

A benchmark definition is a static, verifiable artifact: for every target
it embeds the reference route, the precomputed expanded ground-truth keys,
and strata labels, together with the sampling seed and a digest of the
stock used for expansion. Loading re-derives the expansion and fails on
any tampering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from routecast.errors import RoutecastError
from routecast.expand import expand_ground_truths
from routecast.rng import Xoshiro256, derive_seed
from routecast.schema import (
    ReactionStep,
    Route,
    RouteStats,
    Topology,
    build_route,
    route_stats,
)
from routecast.stats import DegenerateInput, deviation_scores
from routecast.stock import StockSet


class BenchmarkError(RoutecastError):
    pass


class InsufficientPool(BenchmarkError):
    pass


class BenchmarkVerificationError(BenchmarkError):
    pass


@dataclass(frozen=True)
class Bucket:
    """One stratum: inclusive length range, topology filter, sample count."""

    min_length: int
    max_length: int
    topology: Topology | None  # None matches both topologies
    n_samples: int

    def matches(self, stats: RouteStats) -> bool:
        if not self.min_length <= stats.length <= self.max_length:
            return False
        return self.topology is None or stats.topology == self.topology

    def label(self) -> str:
        topo = self.topology.value if self.topology else "any"
        return f"len{self.min_length}-{self.max_length}/{topo}"


@dataclass(frozen=True)
class StrataSpec:
    buckets: tuple[Bucket, ...]

    def __post_init__(self) -> None:
        for bucket in self.buckets:
            if bucket.n_samples < 1:
                raise BenchmarkError(f"bucket {bucket.label()} requests no samples")
            if bucket.min_length > bucket.max_length:
                raise BenchmarkError(f"bucket {bucket.label()} has an empty length range")
        for i, a in enumerate(self.buckets):
            for b in self.buckets[i + 1 :]:
                lengths_overlap = a.min_length <= b.max_length and b.min_length <= a.max_length
                topologies_overlap = (
                    a.topology is None or b.topology is None or a.topology == b.topology
                )
                if lengths_overlap and topologies_overlap:
                    raise BenchmarkError(
                        f"buckets {a.label()} and {b.label()} overlap"
                    )


def _per_length_buckets(
    lengths: range, topology: Topology | None, per_length: int
) -> tuple[Bucket, ...]:
    return tuple(
        Bucket(min_length=n, max_length=n, topology=topology, n_samples=per_length)
        for n in lengths
    )


#: Published benchmark shapes; contents are not shipped, only the sampling
#: recipes (equal counts per length category, split by topology).
PRESET_SPECS: dict[str, StrataSpec] = {
    "mkt-lin-500": StrataSpec(_per_length_buckets(range(2, 7), Topology.LINEAR, 100)),
    "mkt-cnv-160": StrataSpec(_per_length_buckets(range(2, 6), Topology.CONVERGENT, 40)),
    "ref-lin-600": StrataSpec(_per_length_buckets(range(2, 8), Topology.LINEAR, 100)),
    "ref-cnv-400": StrataSpec(_per_length_buckets(range(2, 6), Topology.CONVERGENT, 100)),
    "ref-lng-84": StrataSpec((Bucket(8, 10, None, 84),)),
}


def stratified_sample(
    pool: Sequence[Route], spec: StrataSpec, seed: int
) -> list[Route]:
    """Sample each bucket without replacement from its matching sub-pool.

    Bucket ``i`` draws from an independent stream seeded with
    ``derive_seed(seed, i)``; selections are positions into the pool
    (ingestion order), so re-serialization cannot disturb determinism.
    Output is ordered by (bucket, pool index).
    """
    all_stats = [route_stats(route) for route in pool]
    chosen: list[Route] = []
    for bucket_index, bucket in enumerate(spec.buckets):
        eligible = [i for i, stats in enumerate(all_stats) if bucket.matches(stats)]
        if len(eligible) < bucket.n_samples:
            raise InsufficientPool(
                f"bucket {bucket.label()} needs {bucket.n_samples} routes "
                f"but the pool holds {len(eligible)}"
            )
        gen = Xoshiro256(derive_seed(seed, bucket_index))
        picks = sorted(gen.sample(eligible, bucket.n_samples))
        chosen.extend(pool[i] for i in picks)
    return chosen


@dataclass(frozen=True)
class SeedRow:
    seed: int
    metrics: tuple[float, float, float]  # (stock termination, top-1, top-10)
    score: float


@dataclass(frozen=True)
class SeedStabilityResult:
    rows: tuple[SeedRow, ...]
    chosen_index: int

    @property
    def chosen_seed(self) -> int:
        return self.rows[self.chosen_index].seed


ScoreFn = Callable[[Sequence[Route]], tuple[float, float, float]]


def seed_stability(
    pool: Sequence[Route],
    spec: StrataSpec,
    seeds: Sequence[int],
    reference_scores: ScoreFn,
) -> SeedStabilityResult:
    """Build one candidate benchmark per seed and pick the most typical.

    Each candidate is scored by the injected reference function (stock
    termination, top-1, top-10); per-seed deviation scores are the sum of
    squared Z-scores against the cross-seed means, and the lowest-scoring
    seed wins (ties to the lowest index).
    """
    if len(seeds) < 2:
        raise DegenerateInput("seed stability requires at least two seeds")
    metrics = [reference_scores(stratified_sample(pool, spec, seed)) for seed in seeds]
    scores, chosen = deviation_scores(metrics)
    rows = tuple(
        SeedRow(seed=seed, metrics=tuple(m), score=score)
        for seed, m, score in zip(seeds, metrics, scores)
    )
    return SeedStabilityResult(rows=rows, chosen_index=chosen)


# ---------------------------------------------------------------------------
# Benchmark definitions
# ---------------------------------------------------------------------------

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class BenchmarkTarget:
    target_id: str
    target: str
    reference: Route
    gt_keys: frozenset[str]
    n_variants: int
    strata: Mapping[str, str]


@dataclass(frozen=True)
class BenchmarkDefinition:
    id: str
    seed: int
    stock_name: str
    stock_digest: str
    targets: tuple[BenchmarkTarget, ...]
    provenance: str = ""  # parent manifest hash, when built inside a chain

    def target_ids(self) -> list[str]:
        return [t.target_id for t in self.targets]


def build_benchmark(
    samples: Sequence[Route],
    stock: StockSet,
    benchmark_id: str,
    seed: int,
    provenance: str = "",
) -> BenchmarkDefinition:
    """Expand ground truths for every sampled reference and assemble the
    definition. Degenerate (zero-step) references are rejected."""
    targets = []
    seen_ids: set[str] = set()
    for index, route in enumerate(samples):
        target_id = route.metadata.get("target_id", f"{benchmark_id}-{index:04d}")
        if target_id in seen_ids:
            raise BenchmarkError(f"duplicate target id {target_id!r}")
        seen_ids.add(target_id)
        if route.is_degenerate:
            raise BenchmarkError(
                f"target {target_id!r}: degenerate routes cannot serve as references"
            )
        try:
            gts = expand_ground_truths(route, stock)
        except RoutecastError as exc:
            raise BenchmarkError(f"target {target_id!r}: {exc}") from exc
        stats = route_stats(route)
        targets.append(
            BenchmarkTarget(
                target_id=target_id,
                target=route.target,
                reference=route,
                gt_keys=gts.keys,
                n_variants=gts.n_variants,
                strata={
                    "length": str(stats.length),
                    "topology": stats.topology.value,
                },
            )
        )
    return BenchmarkDefinition(
        id=benchmark_id,
        seed=seed,
        stock_name=stock.name,
        stock_digest=stock.content_digest(),
        targets=tuple(targets),
        provenance=provenance,
    )


def _route_to_dict(route: Route) -> dict:
    steps = []
    for step in route.steps:
        obj: dict = {"product": step.product, "reactants": list(step.reactants)}
        if step.metadata:
            obj["metadata"] = dict(sorted(step.metadata.items()))
        steps.append(obj)
    return {
        "target": route.target,
        "steps": steps,
        "metadata": dict(sorted(route.metadata.items())),
    }


def _route_from_dict(obj: dict) -> Route:
    steps = tuple(
        ReactionStep(
            product=s["product"],
            reactants=tuple(s["reactants"]),
            metadata=s.get("metadata", {}),
        )
        for s in obj["steps"]
    )
    return build_route(obj["target"], steps, obj.get("metadata", {}))


def benchmark_to_dict(definition: BenchmarkDefinition) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "id": definition.id,
        "seed": definition.seed,
        "stock": {"name": definition.stock_name, "sha256": definition.stock_digest},
        "provenance": definition.provenance,
        "targets": [
            {
                "target_id": t.target_id,
                "target": t.target,
                "reference": _route_to_dict(t.reference),
                "gt_keys": sorted(t.gt_keys),
                "n_variants": t.n_variants,
                "strata": dict(sorted(t.strata.items())),
            }
            for t in definition.targets
        ],
    }


def save_benchmark(definition: BenchmarkDefinition, path: str | Path) -> None:
    payload = json.dumps(benchmark_to_dict(definition), indent=2, sort_keys=True)
    Path(path).write_text(payload + "\n", encoding="utf-8")


def load_benchmark(
    path: str | Path,
    stock: StockSet | None = None,
    verify: bool = True,
) -> BenchmarkDefinition:
    """Load a definition file, re-deriving expansions when a stock is given.

    Verification recomputes every target's expanded key set and compares
    it to the embedded one; it also checks that the provided stock matches
    the recorded digest. Pass ``verify=False`` to skip (e.g. display-only
    consumers).
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BenchmarkError(f"cannot load benchmark {path}: {exc}") from exc

    try:
        targets = tuple(
            BenchmarkTarget(
                target_id=t["target_id"],
                target=t["target"],
                reference=_route_from_dict(t["reference"]),
                gt_keys=frozenset(t["gt_keys"]),
                n_variants=t["n_variants"],
                strata=t.get("strata", {}),
            )
            for t in document["targets"]
        )
        definition = BenchmarkDefinition(
            id=document["id"],
            seed=document["seed"],
            stock_name=document["stock"]["name"],
            stock_digest=document["stock"]["sha256"],
            targets=targets,
            provenance=document.get("provenance", ""),
        )
    except (KeyError, TypeError, RoutecastError) as exc:
        raise BenchmarkError(f"malformed benchmark file {path}: {exc}") from exc

    if verify and stock is not None:
        verify_benchmark(definition, stock)
    return definition


def verify_benchmark(definition: BenchmarkDefinition, stock: StockSet) -> None:
    """Fail if the embedded ground truths do not recompute bit for bit."""
    if stock.content_digest() != definition.stock_digest:
        raise BenchmarkVerificationError(
            f"stock digest mismatch: benchmark was built against "
            f"{definition.stock_digest[:12]}..., got {stock.content_digest()[:12]}..."
        )
    for target in definition.targets:
        fresh = expand_ground_truths(target.reference, stock)
        if fresh.keys != target.gt_keys:
            raise BenchmarkVerificationError(
                f"target {target.target_id!r}: embedded ground-truth keys do not "
                f"match recomputation"
            )
        if fresh.n_variants != target.n_variants:
            raise BenchmarkVerificationError(
                f"target {target.target_id!r}: recorded n_variants is stale"
            )
