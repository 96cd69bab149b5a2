"""Multi-ground-truth expansion by pruning at purchasable intermediates.

A reference route admits shorter valid variants: cut the tree at any
in-stock intermediate and treat that molecule as a starting material.
Cuts must form an antichain (no cut node an ancestor of another), each
pruned variant must still terminate entirely in stock, and the accepted
set is the original route plus every surviving pruned variant, keyed by
canonical topology.

Positions are reactant-index paths from the root, so a token occurring in
two disjoint branches yields two independent pruning points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from routecast.errors import RoutecastError
from routecast.schema import (
    ReactionStep,
    Route,
    RouteKey,
    build_route,
    canonical_key,
    producer_map,
)
from routecast.stock import StockSet, is_stock_terminated

#: Above this many pruning points the antichain count can blow up
#: exponentially; raising keeps ground truths exact instead of silently
#: truncated. Benchmark-scale routes stay far below it.
DEFAULT_POINT_CAP = 20


class ExpansionError(RoutecastError):
    pass


class TooManyPruningPoints(ExpansionError):
    pass


class NotAnAntichain(ExpansionError):
    pass


@dataclass(frozen=True, order=True)
class PruningPoint:
    """A prunable tree position: an in-stock intermediate occurrence."""

    path: tuple[int, ...]
    token: str

    def is_ancestor_of(self, other: "PruningPoint") -> bool:
        return (
            len(self.path) < len(other.path)
            and other.path[: len(self.path)] == self.path
        )


@dataclass(frozen=True)
class GroundTruthSet:
    """Accepted canonical keys for one target: original + pruned variants."""

    target: str
    original_key: RouteKey
    keys: frozenset[RouteKey]
    n_variants: int


def walk_positions(route: Route):
    """Pre-order (path, token, step-or-None) over all tree positions."""
    producers = producer_map(route)

    def visit(token: str, path: tuple[int, ...]):
        step = producers.get(token)
        yield path, token, step
        if step is not None:
            for i, reactant in enumerate(step.reactants):
                yield from visit(reactant, path + (i,))

    yield from visit(route.target, ())


def pruning_points(route: Route, stock: StockSet) -> list[PruningPoint]:
    """All intermediate positions whose token is purchasable, in pre-order.

    The root is never a pruning point, and leaves cannot be pruned (there
    is nothing below them to remove).
    """
    return [
        PruningPoint(path=path, token=token)
        for path, token, step in walk_positions(route)
        if path and step is not None and token in stock
    ]


def is_antichain(points: Iterable[PruningPoint]) -> bool:
    """True iff no point's position is an ancestor of another's."""
    ordered = sorted(points, key=lambda p: (len(p.path), p.path))
    for i, p in enumerate(ordered):
        for q in ordered[i + 1 :]:
            if p.is_ancestor_of(q):
                return False
    return True


def enumerate_antichains(
    points: Sequence[PruningPoint],
    cap: int = DEFAULT_POINT_CAP,
) -> list[frozenset[PruningPoint]]:
    """Every antichain subset of ``points``, the empty set included.

    Deterministic order: subsets enumerated as increasing bitmasks over
    the pre-order point list. Raises above ``cap`` points.
    """
    n = len(points)
    if n > cap:
        raise TooManyPruningPoints(
            f"{n} pruning points exceed the expansion cap of {cap}"
        )
    # conflicts[i]: bitmask of points comparable with point i.
    conflicts = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if points[i].is_ancestor_of(points[j]) or points[j].is_ancestor_of(points[i]):
                conflicts[i] |= 1 << j
                conflicts[j] |= 1 << i

    result: list[frozenset[PruningPoint]] = []
    for mask in range(1 << n):
        m = mask
        ok = True
        while m:
            i = (m & -m).bit_length() - 1
            if mask & conflicts[i]:
                ok = False
                break
            m &= m - 1
        if ok:
            result.append(
                frozenset(points[i] for i in range(n) if mask & (1 << i))
            )
    return result


def prune(route: Route, cut: Iterable[PruningPoint]) -> Route:
    """Cut the route at every point: the point's molecule becomes a leaf.

    The producing step of each cut position and its entire subtree are
    removed; route metadata records the cut tokens under ``pruned_at``.
    The empty cut returns the route unchanged.
    """
    cut = list(cut)
    if not cut:
        return route
    if not is_antichain(cut):
        raise NotAnAntichain("cut positions are nested inside one another")

    producers = producer_map(route)
    position_tokens = {path: token for path, token, _ in walk_positions(route)}
    for point in cut:
        if position_tokens.get(point.path) != point.token:
            raise NotAnAntichain(
                f"point {point.token!r} at {point.path} does not belong to this route"
            )
        if not point.path or point.token not in producers:
            raise NotAnAntichain(
                f"point {point.token!r} at {point.path} is not a prunable intermediate"
            )

    cut_paths = {point.path for point in cut}
    kept: list[ReactionStep] = []

    def collect(token: str, path: tuple[int, ...]) -> None:
        if path in cut_paths:
            return
        step = producers.get(token)
        if step is None:
            return
        kept.append(step)
        for i, reactant in enumerate(step.reactants):
            collect(reactant, path + (i,))

    collect(route.target, ())
    metadata = dict(route.metadata)
    metadata["pruned_at"] = ".".join(sorted(point.token for point in cut))
    return build_route(route.target, kept, metadata)


def expand_ground_truths(
    route: Route,
    stock: StockSet,
    cap: int = DEFAULT_POINT_CAP,
) -> GroundTruthSet:
    """Expanded acceptance set for one reference route.

    Procedure: find the in-stock intermediates, enumerate their antichain
    combinations, prune at each combination, keep variants whose leaves
    all lie in stock, and collect canonical keys. The original route's key
    is always included, whether or not its own leaves are purchasable;
    purchasability of predictions is filtered separately at evaluation.
    """
    original = canonical_key(route)
    keys = {original}
    points = pruning_points(route, stock)
    for antichain in enumerate_antichains(points, cap):
        if not antichain:
            continue
        variant = prune(route, antichain)
        if is_stock_terminated(variant, stock):
            keys.add(canonical_key(variant))
    return GroundTruthSet(
        target=route.target,
        original_key=original,
        keys=frozenset(keys),
        n_variants=len(keys) - 1,
    )
