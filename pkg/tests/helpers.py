"""Shared test utilities: route builders, a random route generator, and
independent brute-force oracles.

The oracles here deliberately re-derive results from first principles
(explicit tree walks, all-subsets enumeration, a from-scratch scalar PRNG)
so they can catch bugs in the package's optimized paths.
"""

from __future__ import annotations

import itertools
import random
import string
from typing import Iterable, Sequence

from routecast.schema import ReactionStep, Route, build_route, canonical_key

# tokens may contain anything except whitespace and > . ; |
TOKEN_CHARS = string.ascii_letters + string.digits + "()%,[]=#+-@/\\{}'\"!?&*^~"


def fig1_route(metadata: dict[str, str] | None = None) -> Route:
    """The two-step reference tree: target from an intermediate and a leaf."""
    return build_route(
        "T",
        [ReactionStep("T", ("I", "L3")), ReactionStep("I", ("L1", "L2"))],
        metadata or {},
    )


def chain_route(tokens: Sequence[str], metadata: dict[str, str] | None = None) -> Route:
    """Linear chain: tokens[0] <- tokens[1] <- ... <- tokens[-1]."""
    steps = [
        ReactionStep(tokens[i], (tokens[i + 1],)) for i in range(len(tokens) - 1)
    ]
    return build_route(tokens[0], steps, metadata or {})


def random_token(rng: random.Random) -> str:
    return "".join(rng.choice(TOKEN_CHARS) for _ in range(rng.randint(1, 8)))


def random_route(
    rng: random.Random,
    length: int,
    *,
    max_fanout: int = 3,
    expand_prob: float = 0.5,
    with_metadata: bool = True,
) -> Route:
    """Random valid route whose longest root-to-leaf path has ``length`` steps.

    The first reactant of each step forms a spine expanded down to the full
    depth; siblings expand with probability ``expand_prob`` to a strictly
    smaller depth, so the stated length is exact.
    """
    counter = itertools.count()

    def fresh(prefix: str) -> str:
        return f"{prefix}{next(counter)}_{random_token(rng)}"

    steps: list[ReactionStep] = []
    leaf_pool: list[str] = []

    def expand(token: str, depth: int) -> None:
        n_reactants = rng.randint(1, max_fanout)
        reactants: list[str] = []
        plans: list[int] = []
        for position in range(n_reactants):
            if position == 0 and depth > 1:
                child_depth = depth - 1
            elif depth > 1 and rng.random() < expand_prob:
                child_depth = rng.randint(1, depth - 1)
            else:
                child_depth = 0
            if child_depth > 0:
                reactants.append(fresh("M"))
            else:
                # occasionally reuse a leaf token across branches
                if leaf_pool and rng.random() < 0.15:
                    reactants.append(rng.choice(leaf_pool))
                else:
                    leaf = fresh("L")
                    leaf_pool.append(leaf)
                    reactants.append(leaf)
            plans.append(child_depth)
        steps.append(ReactionStep(token, tuple(reactants)))
        for reactant, child_depth in zip(reactants, plans):
            if child_depth > 0:
                expand(reactant, child_depth)

    target = fresh("T")
    if length > 0:
        expand(target, length)
    metadata = {}
    if with_metadata:
        metadata = {random_token(rng): random_token(rng) for _ in range(rng.randint(0, 3))}
    return build_route(target, steps, metadata)


# ---------------------------------------------------------------------------
# Explicit-tree oracles
# ---------------------------------------------------------------------------


def explicit_tree(route: Route) -> tuple[str, list]:
    """(token, children) nested tuples built by direct step lookup."""
    producers = {s.product: s for s in route.steps}

    def node(token: str):
        step = producers.get(token)
        if step is None:
            return (token, [])
        return (token, [node(r) for r in step.reactants])

    return node(route.target)


def oracle_longest_path(route: Route) -> int:
    """Longest root-to-leaf reaction count via the explicit tree."""

    def depth(node) -> int:
        token, children = node
        if not children:
            return 0
        return 1 + max(depth(child) for child in children)

    return depth(explicit_tree(route))


def oracle_leaf_tokens(route: Route) -> set[str]:
    found: set[str] = set()

    def walk(node) -> None:
        token, children = node
        if not children:
            found.add(token)
        for child in children:
            walk(child)

    walk(explicit_tree(route))
    return found


def _tree_positions(node, path=()):
    token, children = node
    yield path, token, bool(children)
    for i, child in enumerate(children):
        yield from _tree_positions(child, path + (i,))


def _is_prefix(short: tuple, long: tuple) -> bool:
    return len(short) < len(long) and long[: len(short)] == short


def _cut_tree(node, cut_paths: set, path=()):
    token, children = node
    if path in cut_paths:
        return (token, [])
    return (token, [_cut_tree(c, cut_paths, path + (i,)) for i, c in enumerate(children)])


def _tree_to_route(node, target_metadata) -> Route:
    steps: list[ReactionStep] = []

    def collect(n) -> None:
        token, children = n
        if children:
            steps.append(ReactionStep(token, tuple(child[0] for child in children)))
            for child in children:
                collect(child)

    collect(node)
    return build_route(node[0], steps, dict(target_metadata))


def oracle_expand_keys(route: Route, stock_members: set[str]) -> set[str]:
    """All-subsets ground-truth oracle.

    Enumerates every subset of in-stock intermediate positions, discards
    non-antichains by pairwise path-prefix testing, prunes on the explicit
    tree, validates leaves against the stock, and collects canonical keys.
    The original route's key is always included.
    """
    tree = explicit_tree(route)
    points = [
        (path, token)
        for path, token, produced in _tree_positions(tree)
        if path and produced and token in stock_members
    ]
    keys = {canonical_key(route)}
    for size in range(1, len(points) + 1):
        for combo in itertools.combinations(points, size):
            paths = [path for path, _ in combo]
            if any(
                _is_prefix(a, b) or _is_prefix(b, a)
                for a, b in itertools.combinations(paths, 2)
            ):
                continue
            pruned_tree = _cut_tree(tree, set(paths))
            variant = _tree_to_route(pruned_tree, route.metadata)
            leaf_tokens = oracle_leaf_tokens(variant)
            if leaf_tokens <= stock_members:
                keys.add(canonical_key(variant))
    return keys


# ---------------------------------------------------------------------------
# Scalar PRNG + bootstrap oracle (from-scratch reimplementation)
# ---------------------------------------------------------------------------

_M64 = (1 << 64) - 1


def _oracle_scramble(z: int) -> int:
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def oracle_child_seed(seed: int, index: int) -> int:
    return _oracle_scramble((seed + (index + 1) * 0x9E3779B97F4A7C15) & _M64)


class OracleXoshiro:
    """Plain-integer xoshiro256** transcribed from the published algorithm."""

    def __init__(self, seed: int) -> None:
        state = seed & _M64
        self.s = []
        for _ in range(4):
            state = (state + 0x9E3779B97F4A7C15) & _M64
            self.s.append(_oracle_scramble(state))

    @staticmethod
    def _rotl(x: int, k: int) -> int:
        return ((x << k) & _M64) | (x >> (64 - k))

    def next(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (self._rotl((s1 * 5) & _M64, 7) * 9) & _M64
        t = (s1 << 17) & _M64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = self._rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result


def oracle_percentile(sorted_values: Sequence[float], q: float) -> float:
    """Linear-interpolation percentile on presorted data."""
    if not sorted_values:
        raise ValueError("empty")
    position = (len(sorted_values) - 1) * q / 100.0
    lower = int(position)
    upper = min(lower + 1, len(sorted_values) - 1)
    fraction = position - lower
    return sorted_values[lower] * (1 - fraction) + sorted_values[upper] * fraction


def oracle_bootstrap(
    outcomes: Sequence[float], resamples: int, seed: int
) -> tuple[float, float, float]:
    """(mean, lo, hi) recomputed with the scalar generator, stream per resample."""
    n = len(outcomes)
    means = []
    for j in range(resamples):
        gen = OracleXoshiro(oracle_child_seed(seed, j))
        total = 0.0
        for _ in range(n):
            total += outcomes[gen.next() % n]
        means.append(total / n)
    means.sort()
    return (
        sum(outcomes) / n,
        oracle_percentile(means, 2.5),
        oracle_percentile(means, 97.5),
    )


def count_intermediates(route: Route) -> int:
    """Produced, non-root tree positions (occurrences, not unique tokens)."""
    return sum(
        1 for path, _, produced in _tree_positions(explicit_tree(route)) if path and produced
    )
