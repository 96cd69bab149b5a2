"""Adapters between native route formats and the canonical schema.

Five incompatible upstream shapes are supported, plus the engine's own
line-delimited interchange format. Each parser yields fully validated
routes in source order (source order is the model's ranking and is never
touched), and every failure surfaces as a structured error rather than a
crash: syntax errors carry line/offset, shape problems raise schema
errors, and structurally invalid routes raise validation errors.

Byte-level grammars for all formats are documented in ``docs/formats/``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

from routecast.errors import RoutecastError
from routecast.schema import ReactionStep, Route, RouteError, build_route


class AdapterError(RoutecastError):
    pass


class FormatSyntaxError(AdapterError):
    """Input is not even well-formed text for the format."""

    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        location = ""
        if line is not None:
            location = f" (line {line}" + (f", offset {offset}" if offset is not None else "") + ")"
        super().__init__(message + location)
        self.line = line
        self.offset = offset


class FormatSchemaError(AdapterError):
    """Well-formed text with the wrong shape for the format."""


class FormatValidationError(AdapterError):
    """Parsed cleanly but the resulting route is structurally invalid."""


class UnsupportedEmitter(AdapterError):
    pass


class AdapterId(str, Enum):
    NESTED_MOL_JSON = "nested-mol-json"
    MAPPING_STRING = "mapping-string"
    ALTERNATING_JSON = "alternating-json"
    EDGE_LIST_JSON = "edge-list-json"
    RECIPE_STRING = "recipe-string"
    INTERCHANGE = "interchange"


@dataclass(frozen=True)
class ParseReport:
    """Parsed routes in source order plus non-fatal warnings."""

    routes: tuple[Route, ...]
    warnings: tuple[str, ...]
    source: str


def _decode(data: bytes | str) -> str:
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatSyntaxError(f"input is not valid UTF-8: {exc}") from exc


def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except RecursionError:
        raise FormatSchemaError("JSON nesting too deep") from None
    except json.JSONDecodeError as exc:
        raise FormatSyntaxError(exc.msg, line=exc.lineno, offset=exc.colno) from exc


def _as_string(value: Any, what: str) -> str:
    if not isinstance(value, str):
        raise FormatSchemaError(f"{what} must be a string, got {type(value).__name__}")
    return value


def _stringify(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _build(target: str, steps: Iterable[ReactionStep], metadata: dict[str, str], where: str) -> Route:
    try:
        return build_route(target, steps, metadata)
    except RouteError as exc:
        raise FormatValidationError(f"{where}: {exc}") from exc


def _json_records(text: str, format_name: str) -> list[Any]:
    """Top-level array = many routes; a single object = one route."""
    document = _load_json(text)
    if isinstance(document, list):
        return document
    if isinstance(document, dict):
        return [document]
    raise FormatSchemaError(
        f"{format_name} input must be an object or an array of objects"
    )


# ---------------------------------------------------------------------------
# interchange: one JSON record per line
# ---------------------------------------------------------------------------

_INTERCHANGE_FIELDS = ("target", "steps", "metadata")


def _parse_interchange_record(record: Any, where: str) -> Route:
    if not isinstance(record, dict):
        raise FormatSchemaError(f"{where}: record must be an object")
    missing = [k for k in _INTERCHANGE_FIELDS if k not in record]
    if missing:
        raise FormatSchemaError(f"{where}: missing fields {missing}")
    target = _as_string(record["target"], f"{where}: target")
    raw_steps = record["steps"]
    if not isinstance(raw_steps, list):
        raise FormatSchemaError(f"{where}: steps must be an array")
    steps = []
    for i, raw in enumerate(raw_steps):
        if not isinstance(raw, dict) or "product" not in raw or "reactants" not in raw:
            raise FormatSchemaError(
                f"{where}: step {i} must be an object with product and reactants"
            )
        reactants = raw["reactants"]
        if not isinstance(reactants, list):
            raise FormatSchemaError(f"{where}: step {i} reactants must be an array")
        step_meta = raw.get("metadata", {})
        if not isinstance(step_meta, dict):
            raise FormatSchemaError(f"{where}: step {i} metadata must be an object")
        try:
            steps.append(
                ReactionStep(
                    product=_as_string(raw["product"], f"{where}: step {i} product"),
                    reactants=tuple(
                        _as_string(r, f"{where}: step {i} reactant") for r in reactants
                    ),
                    metadata={k: _stringify(v) for k, v in step_meta.items()},
                )
            )
        except RouteError as exc:
            raise FormatValidationError(f"{where}: step {i}: {exc}") from exc
    raw_meta = record["metadata"]
    if not isinstance(raw_meta, dict):
        raise FormatSchemaError(f"{where}: metadata must be an object")
    metadata = {k: _stringify(v) for k, v in raw_meta.items()}
    for key in record:
        if key not in _INTERCHANGE_FIELDS:
            metadata[f"x-{key}"] = _stringify(record[key])
    return _build(target, steps, metadata, where)


def _parse_interchange(text: str, source: str) -> ParseReport:
    routes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except RecursionError:
            raise FormatSchemaError(f"line {lineno}: JSON nesting too deep") from None
        except json.JSONDecodeError as exc:
            raise FormatSyntaxError(exc.msg, line=lineno, offset=exc.colno) from exc
        routes.append(_parse_interchange_record(record, f"line {lineno}"))
    return ParseReport(routes=tuple(routes), warnings=(), source=source)


def _emit_interchange(routes: Sequence[Route]) -> bytes:
    lines = []
    for route in routes:
        steps = []
        for step in route.steps:
            obj: dict[str, Any] = {
                "product": step.product,
                "reactants": list(step.reactants),
            }
            if step.metadata:
                obj["metadata"] = {k: step.metadata[k] for k in sorted(step.metadata)}
            steps.append(obj)
        record = {
            "target": route.target,
            "steps": steps,
            "metadata": {k: route.metadata[k] for k in sorted(route.metadata)},
        }
        lines.append(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
    return ("".join(line + "\n" for line in lines)).encode("utf-8")


# ---------------------------------------------------------------------------
# nested-mol-json: molecule tree, reactions implicit
# ---------------------------------------------------------------------------

_NESTED_KEYS = ("smiles", "children")


def _parse_nested_node(
    node: Any, steps: list[ReactionStep], warnings: list[str], where: str, depth: int = 0
) -> str:
    if depth > 512:
        raise FormatSchemaError(f"{where}: molecule tree too deep")
    if not isinstance(node, dict):
        raise FormatSchemaError(f"{where}: molecule node must be an object")
    token = _as_string(node.get("smiles"), f"{where}: smiles")
    children = node.get("children", [])
    if children is None:
        children = []
    if not isinstance(children, list):
        raise FormatSchemaError(f"{where}: children must be an array")
    unknown = [k for k in node if k not in _NESTED_KEYS]
    if depth > 0 and unknown:
        warnings.append(f"{where}: ignored molecule-node fields {unknown}")
    if children:
        reactants = [
            _parse_nested_node(child, steps, warnings, where, depth + 1)
            for child in children
        ]
        try:
            steps.append(ReactionStep(product=token, reactants=tuple(reactants)))
        except RouteError as exc:
            raise FormatValidationError(f"{where}: {exc}") from exc
    return token


def _parse_nested_mol_json(text: str, source: str) -> ParseReport:
    routes = []
    warnings: list[str] = []
    for index, record in enumerate(_json_records(text, "nested-mol-json")):
        where = f"route {index}"
        steps: list[ReactionStep] = []
        target = _parse_nested_node(record, steps, warnings, where)
        metadata = {
            f"x-{k}": _stringify(record[k]) for k in record if k not in _NESTED_KEYS
        }
        routes.append(_build(target, steps, metadata, where))
    return ParseReport(routes=tuple(routes), warnings=tuple(warnings), source=source)


def _emit_nested_mol_json(routes: Sequence[Route]) -> bytes:
    def node(route: Route, token: str) -> dict[str, Any]:
        producers = {s.product: s for s in route.steps}
        step = producers.get(token)
        if step is None:
            return {"smiles": token}
        return {"smiles": token, "children": [node(route, r) for r in step.reactants]}

    document = [node(route, route.target) for route in routes]
    return (json.dumps(document, ensure_ascii=False, separators=(",", ":")) + "\n").encode(
        "utf-8"
    )


# ---------------------------------------------------------------------------
# mapping-string: "product>reactant.reactant;..." one route per line
# ---------------------------------------------------------------------------


def _parse_mapping_line(line: str, lineno: int) -> Route:
    where = f"line {lineno}"
    if ">" not in line:
        # Degenerate route: a bare token is a purchasable target.
        return _build(line.strip(), (), {}, where)
    steps = []
    for part in line.split(";"):
        part = part.strip()
        if not part:
            raise FormatSyntaxError("empty step", line=lineno)
        head, sep, tail = part.partition(">")
        if not sep:
            raise FormatSyntaxError(f"step {part!r} lacks '>'", line=lineno)
        reactants = tuple(r for r in tail.split(".") if r.strip())
        if not reactants:
            raise FormatSyntaxError(f"step {part!r} lists no reactants", line=lineno)
        try:
            steps.append(ReactionStep(product=head, reactants=reactants))
        except RouteError as exc:
            raise FormatValidationError(f"{where}: {exc}") from exc
    # The first step's product is the route target by grammar.
    return _build(steps[0].product, steps, {}, where)


def _parse_mapping_string(text: str, source: str) -> ParseReport:
    routes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        routes.append(_parse_mapping_line(line.strip(), lineno))
    return ParseReport(routes=tuple(routes), warnings=(), source=source)


def _preorder_steps(route: Route) -> list[ReactionStep]:
    producers = {s.product: s for s in route.steps}
    ordered: list[ReactionStep] = []

    def visit(token: str) -> None:
        step = producers.get(token)
        if step is None:
            return
        ordered.append(step)
        for reactant in step.reactants:
            visit(reactant)

    visit(route.target)
    return ordered


def _emit_mapping_string(routes: Sequence[Route]) -> bytes:
    lines = []
    for route in routes:
        if route.is_degenerate:
            lines.append(route.target)
            continue
        lines.append(
            ";".join(
                f"{step.product}>{'.'.join(step.reactants)}"
                for step in _preorder_steps(route)
            )
        )
    return ("".join(line + "\n" for line in lines)).encode("utf-8")


# ---------------------------------------------------------------------------
# recipe-string: "reactants>>product|..." forward order, chained products
# ---------------------------------------------------------------------------


def _parse_recipe_line(line: str, lineno: int) -> Route:
    where = f"line {lineno}"
    if ">>" not in line:
        return _build(line.strip(), (), {}, where)
    steps = []
    previous_product: str | None = None
    for part in line.split("|"):
        part = part.strip()
        if not part:
            raise FormatSyntaxError("empty recipe step", line=lineno)
        head, sep, product = part.partition(">>")
        if not sep:
            raise FormatSyntaxError(f"step {part!r} lacks '>>'", line=lineno)
        explicit = tuple(r for r in head.split(".") if r.strip())
        # The previous step's product joins the reactant list implicitly,
        # ahead of the explicit reactants.
        reactants = ((previous_product,) if previous_product else ()) + explicit
        if not reactants:
            raise FormatSyntaxError(f"step {part!r} lists no reactants", line=lineno)
        try:
            step = ReactionStep(product=product, reactants=reactants)
        except RouteError as exc:
            raise FormatValidationError(f"{where}: {exc}") from exc
        steps.append(step)
        previous_product = step.product
    return _build(steps[-1].product, steps, {}, where)


def _parse_recipe_string(text: str, source: str) -> ParseReport:
    routes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        routes.append(_parse_recipe_line(line.strip(), lineno))
    return ParseReport(routes=tuple(routes), warnings=(), source=source)


# ---------------------------------------------------------------------------
# edge-list-json: {"nodes": {id: token}, "edges": [[parent, child], ...]}
# ---------------------------------------------------------------------------


def _parse_edge_list_record(record: Any, where: str) -> Route:
    if not isinstance(record, dict):
        raise FormatSchemaError(f"{where}: record must be an object")
    nodes = record.get("nodes")
    edges = record.get("edges")
    if not isinstance(nodes, dict) or not isinstance(edges, list):
        raise FormatSchemaError(f"{where}: expected a nodes map and an edges array")
    tokens = {
        node_id: _as_string(token, f"{where}: node {node_id}")
        for node_id, token in nodes.items()
    }
    children: dict[str, list[str]] = {node_id: [] for node_id in tokens}
    referenced_as_child = set()
    for i, edge in enumerate(edges):
        if not isinstance(edge, list) or len(edge) != 2:
            raise FormatSchemaError(f"{where}: edge {i} must be a [parent, child] pair")
        parent, child = edge
        if parent not in tokens or child not in tokens:
            raise FormatSchemaError(f"{where}: edge {i} references unknown node ids")
        children[parent].append(child)
        referenced_as_child.add(child)
    roots = [node_id for node_id in tokens if node_id not in referenced_as_child]
    if len(roots) != 1:
        raise FormatSchemaError(
            f"{where}: expected exactly one root node, found {len(roots)}"
        )
    steps = []
    for node_id, kids in children.items():
        if kids:
            try:
                steps.append(
                    ReactionStep(
                        product=tokens[node_id],
                        reactants=tuple(tokens[k] for k in kids),
                    )
                )
            except RouteError as exc:
                raise FormatValidationError(f"{where}: node {node_id}: {exc}") from exc
    metadata = {
        f"x-{k}": _stringify(record[k]) for k in record if k not in ("nodes", "edges")
    }
    return _build(tokens[roots[0]], steps, metadata, where)


def _parse_edge_list_json(text: str, source: str) -> ParseReport:
    routes = [
        _parse_edge_list_record(record, f"route {index}")
        for index, record in enumerate(_json_records(text, "edge-list-json"))
    ]
    return ParseReport(routes=tuple(routes), warnings=(), source=source)


# ---------------------------------------------------------------------------
# alternating-json: molecule nodes alternate with explicit reaction nodes
# ---------------------------------------------------------------------------


def _parse_alternating_mol(node: Any, steps: list[ReactionStep], where: str, depth: int = 0) -> str:
    if depth > 512:
        raise FormatSchemaError(f"{where}: tree too deep")
    if not isinstance(node, dict) or node.get("type") != "mol":
        raise FormatSchemaError(f"{where}: expected a molecule node with type 'mol'")
    token = _as_string(node.get("smiles"), f"{where}: smiles")
    reactions = node.get("children", []) or []
    if not isinstance(reactions, list):
        raise FormatSchemaError(f"{where}: children must be an array")
    if not reactions:
        return token
    if len(reactions) > 1:
        raise FormatSchemaError(
            f"{where}: molecule {token!r} has {len(reactions)} reaction children; "
            "a route holds exactly one"
        )
    reaction = reactions[0]
    if not isinstance(reaction, dict) or reaction.get("type") != "reaction":
        raise FormatSchemaError(f"{where}: expected a reaction node under {token!r}")
    mols = reaction.get("children", [])
    if not isinstance(mols, list) or not mols:
        raise FormatSchemaError(f"{where}: reaction under {token!r} has no reactants")
    reactants = [
        _parse_alternating_mol(child, steps, where, depth + 2) for child in mols
    ]
    step_meta = {
        k: _stringify(v)
        for k, v in reaction.items()
        if k not in ("type", "children")
    }
    try:
        steps.append(
            ReactionStep(product=token, reactants=tuple(reactants), metadata=step_meta)
        )
    except RouteError as exc:
        raise FormatValidationError(f"{where}: {exc}") from exc
    return token


def _parse_alternating_json(text: str, source: str) -> ParseReport:
    routes = []
    for index, record in enumerate(_json_records(text, "alternating-json")):
        where = f"route {index}"
        steps: list[ReactionStep] = []
        target = _parse_alternating_mol(record, steps, where)
        routes.append(_build(target, steps, {}, where))
    return ParseReport(routes=tuple(routes), warnings=(), source=source)


# ---------------------------------------------------------------------------
# registry and public API
# ---------------------------------------------------------------------------

_PARSERS: dict[AdapterId, Callable[[str, str], ParseReport]] = {
    AdapterId.INTERCHANGE: _parse_interchange,
    AdapterId.NESTED_MOL_JSON: _parse_nested_mol_json,
    AdapterId.MAPPING_STRING: _parse_mapping_string,
    AdapterId.RECIPE_STRING: _parse_recipe_string,
    AdapterId.EDGE_LIST_JSON: _parse_edge_list_json,
    AdapterId.ALTERNATING_JSON: _parse_alternating_json,
}

_EMITTERS: dict[AdapterId, Callable[[Sequence[Route]], bytes]] = {
    AdapterId.INTERCHANGE: _emit_interchange,
    AdapterId.NESTED_MOL_JSON: _emit_nested_mol_json,
    AdapterId.MAPPING_STRING: _emit_mapping_string,
}


def parse(adapter: AdapterId, data: bytes | str, source: str = "<stream>") -> ParseReport:
    """Parse ``data`` with the named adapter.

    Routes come back in source order; any malformed entry raises a
    structured error naming its location.
    """
    adapter = AdapterId(adapter)
    text = _decode(data)
    try:
        return _PARSERS[adapter](text, source)
    except AdapterError:
        raise
    except RecursionError:
        raise FormatSchemaError("input nesting too deep") from None


def emit(adapter: AdapterId, routes: Sequence[Route]) -> bytes:
    adapter = AdapterId(adapter)
    emitter = _EMITTERS.get(adapter)
    if emitter is None:
        raise UnsupportedEmitter(f"no emitter registered for {adapter.value}")
    return emitter(routes)


def emit_interchange(routes: Sequence[Route]) -> bytes:
    """Serialize routes to the interchange format (order preserved).

    Round-trip identity: parsing the output reproduces the routes exactly,
    metadata included.
    """
    return _emit_interchange(routes)


def convert(
    from_adapter: AdapterId,
    to_adapter: AdapterId,
    data: bytes | str,
    source: str = "<stream>",
) -> bytes:
    """Parse with one adapter and emit with another; keys are preserved."""
    report = parse(from_adapter, data, source)
    return emit(to_adapter, report.routes)


def emitters() -> tuple[AdapterId, ...]:
    return tuple(_EMITTERS)
