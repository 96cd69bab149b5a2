"""Canonical route data model.

A route is a rooted tree: the root molecule is the target, each reaction
step maps one produced molecule to its reactant list, and leaves are the
starting materials. Everything downstream (adapters, ground-truth
expansion, metrics) works against this one representation, so the
validator here is strict: a `Route` object that exists is a valid route.

All types are immutable after construction and safe to share across
threads; the operations are pure functions.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping

from routecast.errors import RoutecastError

#: Characters that may never appear inside a molecule token. They are the
#: syntax of the delimited route formats, so a token containing one could
#: not be serialized unambiguously.
RESERVED_CHARS = (">", ".", ";", "|")


class RouteError(RoutecastError):
    """Base class for structural route violations."""


class InvalidToken(RouteError):
    """Molecule token is empty or contains whitespace/reserved delimiters."""


class EmptyReactants(RouteError):
    """A reaction step with no reactants."""


class DuplicateProduct(RouteError):
    """Two steps produce the same molecule token."""


class MissingTargetStep(RouteError):
    """Steps are present but none produces the target."""


class OrphanStep(RouteError):
    """A step's product is neither the target nor consumed by another step."""


class SharedIntermediate(RouteError):
    """An intermediate is consumed by more than one step (DAG, not a tree)."""


class Cycle(RouteError):
    """A molecule appears as both ancestor and descendant on some path."""


def molecule_token(raw: str) -> str:
    """Validate and normalize a molecule token (trim surrounding whitespace).

    Tokens are opaque identifiers (e.g. canonical SMILES). They must be
    non-empty and free of whitespace and the reserved delimiters ``> . ; |``.
    """
    token = raw.strip()
    if not token:
        raise InvalidToken("molecule token is empty")
    for ch in token:
        if ch.isspace():
            raise InvalidToken(f"molecule token {token!r} contains whitespace")
        if ch in RESERVED_CHARS:
            raise InvalidToken(
                f"molecule token {token!r} contains reserved delimiter {ch!r}"
            )
    return token


def _frozen_metadata(metadata: Mapping[str, str] | None) -> Mapping[str, str]:
    return MappingProxyType({str(k): str(v) for k, v in dict(metadata or {}).items()})


@dataclass(frozen=True)
class ReactionStep:
    """One retrosynthetic step: ``product <- reactants``.

    ``metadata`` carries adapter-provided step annotations (e.g. template
    hashes); it never participates in canonical keys.
    """

    product: str
    reactants: tuple[str, ...]
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        product = molecule_token(self.product)
        reactants = tuple(molecule_token(r) for r in self.reactants)
        if not reactants:
            raise EmptyReactants(f"step producing {product!r} has no reactants")
        if product in reactants:
            raise Cycle(f"step produces {product!r} from itself")
        object.__setattr__(self, "product", product)
        object.__setattr__(self, "reactants", reactants)
        object.__setattr__(self, "metadata", _frozen_metadata(self.metadata))


@dataclass(frozen=True)
class Route:
    """A validated rooted route tree.

    Construct through :func:`build_route`; direct construction also
    validates, so an instance is always structurally sound.
    """

    target: str
    steps: tuple[ReactionStep, ...]
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "target", molecule_token(self.target))
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "metadata", _frozen_metadata(self.metadata))
        _validate_structure(self.target, self.steps)

    @property
    def is_degenerate(self) -> bool:
        """True for the zero-step "target is purchasable" route."""
        return not self.steps


def build_route(
    target: str,
    steps: Iterable[ReactionStep] = (),
    metadata: Mapping[str, str] | None = None,
) -> Route:
    """Build a validated :class:`Route` or raise a :class:`RouteError`.

    Never returns a partially valid route: any violation of the rooted-tree
    invariants (duplicate products, orphan steps, cycles, missing target
    step, empty reactant lists) raises the matching error.
    """
    return Route(target=target, steps=tuple(steps), metadata=metadata or {})


def producer_map(route: Route) -> dict[str, ReactionStep]:
    """Map each produced molecule token to its producing step."""
    return {step.product: step for step in route.steps}


def _validate_structure(target: str, steps: tuple[ReactionStep, ...]) -> None:
    if not steps:
        return
    producers: dict[str, ReactionStep] = {}
    for step in steps:
        if step.product in producers:
            raise DuplicateProduct(f"two steps produce {step.product!r}")
        producers[step.product] = step
    if target not in producers:
        raise MissingTargetStep(f"no step produces the target {target!r}")

    consumed = Counter(
        reactant
        for step in steps
        for reactant in step.reactants
        if reactant in producers
    )
    for step in steps:
        if step.product == target:
            continue
        n = consumed.get(step.product, 0)
        if n == 0:
            raise OrphanStep(
                f"product {step.product!r} is consumed nowhere and is not the target"
            )
        if n > 1:
            raise SharedIntermediate(
                f"intermediate {step.product!r} is consumed by {n} steps"
            )

    # Walk the tree from the target; any token reappearing on its own
    # ancestor path is a cycle. Steps left unvisited afterwards form a
    # detached component in which every product is consumed, which on a
    # finite step set forces a cycle as well.
    visited = 0
    stack: list[tuple[str, frozenset[str]]] = [(target, frozenset())]
    while stack:
        token, ancestors = stack.pop()
        if token in ancestors:
            raise Cycle(f"molecule {token!r} is its own ancestor")
        step = producers.get(token)
        if step is None:
            continue
        visited += 1
        lineage = ancestors | {token}
        for reactant in step.reactants:
            stack.append((reactant, lineage))
    if visited != len(steps):
        raise Cycle("route contains steps unreachable from the target (cyclic component)")


# ---------------------------------------------------------------------------
# Canonical keys
# ---------------------------------------------------------------------------

#: Key grammar: a leaf is its escaped token; a produced molecule is
#: ``token(child,child,...)`` with children sorted lexicographically.
#: ``%``, ``(``, ``)`` and ``,`` inside tokens are percent-encoded so the
#: encoding is injective.
_KEY_ESCAPES = str.maketrans({"%": "%25", "(": "%28", ")": "%29", ",": "%2C"})

RouteKey = str


def escape_token(token: str) -> str:
    """Percent-encode the canonical-key grammar characters inside a token."""
    return token.translate(_KEY_ESCAPES)


def canonical_key(route: Route) -> RouteKey:
    """Deterministic serialization of the route tree.

    Two routes share a key iff they are topologically identical up to
    reactant reordering; metadata and step order never influence the key.
    """
    producers = producer_map(route)

    def serialize(token: str) -> str:
        step = producers.get(token)
        if step is None:
            return escape_token(token)
        children = sorted(serialize(r) for r in step.reactants)
        return f"{escape_token(token)}({','.join(children)})"

    return serialize(route.target)


def subtree_keys(route: Route) -> dict[str, RouteKey]:
    """Canonical key of the subtree rooted at every produced molecule.

    Leaves are not included; the target's entry equals ``canonical_key``.
    Used by diff-style consumers to locate where two routes diverge.
    """
    producers = producer_map(route)
    keys: dict[str, RouteKey] = {}

    def serialize(token: str) -> str:
        step = producers.get(token)
        if step is None:
            return escape_token(token)
        children = sorted(serialize(r) for r in step.reactants)
        key = f"{escape_token(token)}({','.join(children)})"
        keys[token] = key
        return key

    serialize(route.target)
    return keys


# ---------------------------------------------------------------------------
# Route statistics
# ---------------------------------------------------------------------------


class Topology(str, Enum):
    LINEAR = "linear"
    CONVERGENT = "convergent"


@dataclass(frozen=True)
class RouteStats:
    """Shape summary used for stratification.

    ``length`` is the reaction count along the longest root-to-leaf path;
    a route is convergent when some step joins two or more synthesized
    fragments (>= 2 reactants that are themselves produced).
    """

    length: int
    topology: Topology
    n_steps: int
    n_leaves: int


def route_stats(route: Route) -> RouteStats:
    producers = producer_map(route)

    def depth(token: str) -> int:
        step = producers.get(token)
        if step is None:
            return 0
        return 1 + max(depth(r) for r in step.reactants)

    convergent = any(
        sum(1 for r in step.reactants if r in producers) >= 2 for step in route.steps
    )
    return RouteStats(
        length=depth(route.target),
        topology=Topology.CONVERGENT if convergent else Topology.LINEAR,
        n_steps=len(route.steps),
        n_leaves=len(leaves(route)),
    )


def leaves(route: Route) -> frozenset[str]:
    """All reactant tokens not produced by any step.

    The degenerate zero-step route has its target as the single leaf.
    """
    if route.is_degenerate:
        return frozenset({route.target})
    produced = {step.product for step in route.steps}
    return frozenset(
        reactant
        for step in route.steps
        for reactant in step.reactants
        if reactant not in produced
    )
