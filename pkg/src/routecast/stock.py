"""Purchasable-molecule stock sets and leaf-coverage statistics.

A stock is an exact hashed set of canonicalized tokens; membership queries
run the same canonicalizer the set was loaded with. Real chemical
canonicalization (tautomers, salts) is an integration point, not a
built-in: the shipped canonicalizers only normalize whitespace.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from routecast.errors import RoutecastError
from routecast.schema import Route, leaves


class StockError(RoutecastError):
    pass


class UnknownCanonicalizer(StockError):
    pass


def _identity(token: str) -> str:
    return token.strip()


def _fold_ws(token: str) -> str:
    # Removing internal whitespace (rather than collapsing to one space)
    # keeps outputs valid molecule tokens.
    return "".join(token.split())


CANONICALIZERS: dict[str, Callable[[str], str]] = {
    "identity": _identity,
    "fold-ws": _fold_ws,
}


def get_canonicalizer(canonicalizer_id: str) -> Callable[[str], str]:
    try:
        return CANONICALIZERS[canonicalizer_id]
    except KeyError:
        raise UnknownCanonicalizer(
            f"unknown canonicalizer {canonicalizer_id!r}; "
            f"registered: {sorted(CANONICALIZERS)}"
        ) from None


@dataclass(frozen=True)
class StockSet:
    """Immutable set of purchasable molecule tokens (post-canonicalization)."""

    name: str
    members: frozenset[str]
    canonicalizer_id: str = "identity"

    def canonicalize(self, token: str) -> str:
        return get_canonicalizer(self.canonicalizer_id)(token)

    def __contains__(self, token: str) -> bool:
        return self.canonicalize(token) in self.members

    def __len__(self) -> int:
        return len(self.members)

    def content_digest(self) -> str:
        """SHA-256 over the sorted member list; independent of file layout."""
        payload = "\n".join(sorted(self.members)).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    @classmethod
    def from_tokens(
        cls,
        name: str,
        tokens: Iterable[str],
        canonicalizer_id: str = "identity",
    ) -> "StockSet":
        canon = get_canonicalizer(canonicalizer_id)
        return cls(
            name=name,
            members=frozenset(canon(t) for t in tokens),
            canonicalizer_id=canonicalizer_id,
        )


@dataclass(frozen=True)
class StockLoad:
    """Result of loading a stock file: the set plus load accounting."""

    stock: StockSet
    n_raw: int
    n_unique: int
    warnings: tuple[str, ...]


def load_stock(
    path: str | Path,
    canonicalizer_id: str = "identity",
    name: str | None = None,
) -> StockLoad:
    """Load a newline-delimited stock file.

    Blank lines and ``#`` comments are ignored; duplicates (after
    canonicalization) are dropped with a warning. An empty stock is a
    warning, not an error.
    """
    path = Path(path)
    canon = get_canonicalizer(canonicalizer_id)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StockError(f"cannot read stock file {path}: {exc}") from exc

    members: set[str] = set()
    n_raw = 0
    n_duplicates = 0
    for line in text.splitlines():
        entry = line.strip()
        if not entry or entry.startswith("#"):
            continue
        n_raw += 1
        token = canon(entry)
        if token in members:
            n_duplicates += 1
        else:
            members.add(token)

    warnings: list[str] = []
    if n_duplicates:
        warnings.append(f"{n_duplicates} duplicate stock entries dropped")
    if not members:
        warnings.append(f"stock file {path} is empty")
    stock = StockSet(
        name=name or path.stem,
        members=frozenset(members),
        canonicalizer_id=canonicalizer_id,
    )
    return StockLoad(
        stock=stock, n_raw=n_raw, n_unique=len(members), warnings=tuple(warnings)
    )


def is_stock_terminated(route: Route, stock: StockSet) -> bool:
    """True iff every leaf of the route is purchasable."""
    return all(leaf in stock for leaf in leaves(route))


@dataclass(frozen=True)
class CoverageReport:
    n_unique_leaves: int
    n_leaves_in_stock: int
    n_routes: int
    n_routes_fully_covered: int


def coverage(routes: Sequence[Route], stock: StockSet) -> CoverageReport:
    """Leaf-coverage census of a route pool against a stock.

    Leaves are deduplicated across the whole pool after canonicalization
    with the stock's own canonicalizer, so the unique-leaf count matches
    what membership testing sees.
    """
    unique: set[str] = set()
    fully_covered = 0
    for route in routes:
        route_leaves = {stock.canonicalize(leaf) for leaf in leaves(route)}
        unique.update(route_leaves)
        if route_leaves <= stock.members:
            fully_covered += 1
    in_stock = sum(1 for leaf in unique if leaf in stock.members)
    return CoverageReport(
        n_unique_leaves=len(unique),
        n_leaves_in_stock=in_stock,
        n_routes=len(routes),
        n_routes_fully_covered=fully_covered,
    )
