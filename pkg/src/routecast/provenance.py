"""Content-addressed stage manifests and chain verification.

Every pipeline stage records the SHA-256 of each input and output file in
a manifest; manifests link to their parent stage by the parent manifest's
identity hash, forming a verifiable chain from raw inputs to final
reports. Timestamps are recorded for humans but never participate in
validity: a manifest's identity is the hash of its canonical
serialization with ``created_at`` blanked, so re-running a pipeline with
identical content yields identical chain hashes and re-verification can
never fail on clock data.

Manifests live under ``<root>/provenance/<stage>.manifest.json`` with all
paths stored root-relative using ``/`` separators.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from routecast import __version__
from routecast.errors import RoutecastError

MANIFEST_SUFFIX = ".manifest.json"
PROVENANCE_DIR = "provenance"

_HEX64 = re.compile(r"^[0-9a-f]{64}$")


class ProvenanceError(RoutecastError):
    pass


class MissingFile(ProvenanceError):
    pass


def hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_file(path: str | Path) -> str:
    """SHA-256 of the file's bytes, lowercase hex."""
    digest = hashlib.sha256()
    try:
        with Path(path).open("rb") as handle:
            for chunk in iter(lambda: handle.read(1 << 20), b""):
                digest.update(chunk)
    except OSError as exc:
        raise ProvenanceError(f"cannot hash {path}: {exc}") from exc
    return digest.hexdigest()


@dataclass(frozen=True)
class FileDigest:
    path: str  # root-relative, "/" separators
    sha256: str


@dataclass(frozen=True)
class Manifest:
    stage: str
    created_at: str
    inputs: tuple[FileDigest, ...]
    outputs: tuple[FileDigest, ...]
    parent: str | None
    tool_version: str

    def __post_init__(self) -> None:
        for entry in (*self.inputs, *self.outputs):
            if not _HEX64.match(entry.sha256):
                raise ProvenanceError(
                    f"digest for {entry.path!r} is not 64 lowercase hex characters"
                )
        if self.parent is not None and not _HEX64.match(self.parent):
            raise ProvenanceError("parent hash is not 64 lowercase hex characters")


def manifest_to_bytes(manifest: Manifest) -> bytes:
    """Canonical serialization: sorted keys, compact separators, one LF."""
    document = {
        "stage": manifest.stage,
        "created_at": manifest.created_at,
        "inputs": [{"path": e.path, "sha256": e.sha256} for e in manifest.inputs],
        "outputs": [{"path": e.path, "sha256": e.sha256} for e in manifest.outputs],
        "parent": manifest.parent,
        "tool_version": manifest.tool_version,
    }
    return (
        json.dumps(document, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        + "\n"
    ).encode("utf-8")


def manifest_identity(manifest: Manifest) -> str:
    """Chain identity: canonical-serialization hash with the timestamp
    blanked, so identity depends on content only."""
    normalized = Manifest(
        stage=manifest.stage,
        created_at="",
        inputs=manifest.inputs,
        outputs=manifest.outputs,
        parent=manifest.parent,
        tool_version=manifest.tool_version,
    )
    return hash_bytes(manifest_to_bytes(normalized))


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ProvenanceError(f"cannot load manifest {path}: {exc}") from exc
    try:
        return Manifest(
            stage=document["stage"],
            created_at=document["created_at"],
            inputs=tuple(FileDigest(e["path"], e["sha256"]) for e in document["inputs"]),
            outputs=tuple(FileDigest(e["path"], e["sha256"]) for e in document["outputs"]),
            parent=document["parent"],
            tool_version=document["tool_version"],
        )
    except (KeyError, TypeError) as exc:
        raise ProvenanceError(f"malformed manifest {path}: {exc}") from exc


def _relative(root: Path, target: Path) -> str:
    try:
        return target.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        raise ProvenanceError(
            f"{target} is outside the provenance root {root}"
        ) from None


def write_manifest(
    root: str | Path,
    stage: str,
    inputs: Iterable[str | Path],
    outputs: Iterable[str | Path],
    parent: str | Path | None = None,
    created_at: str | None = None,
) -> tuple[Path, str]:
    """Hash the stage's files and write its manifest.

    ``parent`` may be a manifest file path or its hex identity hash; when
    given, it must resolve to an existing manifest whose outputs overlap
    this stage's inputs (the chain property). Returns the manifest path
    and the manifest's identity hash.
    """
    root = Path(root)
    manifest_dir = root / PROVENANCE_DIR
    manifest_dir.mkdir(parents=True, exist_ok=True)

    def digest_all(paths: Iterable[str | Path]) -> tuple[FileDigest, ...]:
        entries = []
        for raw in paths:
            path = Path(raw)
            if not path.is_file():
                raise MissingFile(f"referenced file does not exist: {path}")
            entries.append(FileDigest(path=_relative(root, path), sha256=hash_file(path)))
        return tuple(entries)

    input_digests = digest_all(inputs)
    output_digests = digest_all(outputs)

    parent_hash: str | None = None
    if parent is not None:
        if isinstance(parent, str) and _HEX64.match(parent):
            parent_hash = parent
        else:
            parent_path = Path(parent)
            if not parent_path.is_file():
                raise MissingFile(f"parent manifest does not exist: {parent_path}")
            parent_hash = manifest_identity(load_manifest(parent_path))
        parent_manifest = _find_manifest_by_hash(manifest_dir, parent_hash)
        if parent_manifest is None:
            raise ProvenanceError(
                f"parent manifest {parent_hash[:12]}... not found under {manifest_dir}"
            )
        parent_outputs = {e.sha256 for e in load_manifest(parent_manifest).outputs}
        if parent_outputs.isdisjoint(e.sha256 for e in input_digests):
            raise ProvenanceError(
                "parent manifest's outputs share no file with this stage's inputs"
            )

    manifest = Manifest(
        stage=stage,
        created_at=created_at
        or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        inputs=input_digests,
        outputs=output_digests,
        parent=parent_hash,
        tool_version=__version__,
    )
    manifest_path = manifest_dir / f"{stage}{MANIFEST_SUFFIX}"
    manifest_path.write_bytes(manifest_to_bytes(manifest))
    return manifest_path, manifest_identity(manifest)


def _find_manifest_by_hash(manifest_dir: Path, digest: str) -> Path | None:
    if not manifest_dir.is_dir():
        return None
    for candidate in sorted(manifest_dir.glob(f"*{MANIFEST_SUFFIX}")):
        try:
            if manifest_identity(load_manifest(candidate)) == digest:
                return candidate
        except ProvenanceError:
            continue
    return None


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass
class VerificationReport:
    """Outcome of a chain walk; failures are entries, never exceptions."""

    leaf: str
    stages: list[str] = field(default_factory=list)
    mismatches: list[tuple[str, str, str]] = field(default_factory=list)  # path, expected, actual
    missing: list[str] = field(default_factory=list)
    broken_links: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.mismatches or self.missing or self.broken_links)

    def summary(self) -> str:
        if self.ok:
            return f"OK: {len(self.stages)} stage(s) verified from {self.leaf}"
        parts = []
        for path, expected, actual in self.mismatches:
            parts.append(f"MISMATCH {path}: expected {expected[:12]}..., got {actual[:12]}...")
        parts.extend(f"MISSING {path}" for path in self.missing)
        parts.extend(f"BROKEN {entry}" for entry in self.broken_links)
        return "\n".join(parts)


def verify_chain(leaf_manifest: str | Path) -> VerificationReport:
    """Walk parent links from a leaf manifest to the root, re-hashing
    every referenced file along the way."""
    leaf_path = Path(leaf_manifest)
    report = VerificationReport(leaf=str(leaf_path))
    manifest_dir = leaf_path.parent
    root = manifest_dir.parent

    current: Path | None = leaf_path
    seen: set[str] = set()
    while current is not None:
        if not current.is_file():
            report.broken_links.append(f"manifest file missing: {current}")
            break
        try:
            manifest = load_manifest(current)
        except ProvenanceError as exc:
            report.broken_links.append(str(exc))
            break
        report.stages.append(manifest.stage)
        for entry in (*manifest.inputs, *manifest.outputs):
            target = root / entry.path
            if not target.is_file():
                report.missing.append(entry.path)
                continue
            actual = hash_file(target)
            if actual != entry.sha256:
                report.mismatches.append((entry.path, entry.sha256, actual))
        if manifest.parent is None:
            break
        if manifest.parent in seen:
            report.broken_links.append(f"parent loop at {manifest.parent[:12]}...")
            break
        seen.add(manifest.parent)
        parent_path = _find_manifest_by_hash(manifest_dir, manifest.parent)
        if parent_path is None:
            report.broken_links.append(
                f"parent manifest {manifest.parent[:12]}... not found (stage {manifest.stage})"
            )
            break
        current = parent_path
    return report


def verify_all(root: str | Path) -> list[VerificationReport]:
    """Verify every chain under ``<root>/provenance`` from each leaf.

    A leaf is a manifest no other manifest names as its parent.
    """
    manifest_dir = Path(root) / PROVENANCE_DIR
    manifests = sorted(manifest_dir.glob(f"*{MANIFEST_SUFFIX}"))
    if not manifests:
        raise ProvenanceError(f"no manifests under {manifest_dir}")
    by_hash = {manifest_identity(load_manifest(path)): path for path in manifests}
    parents = set()
    for path in manifests:
        parent = load_manifest(path).parent
        if parent:
            parents.add(parent)
    leaves = [path for digest, path in sorted(by_hash.items()) if digest not in parents]
    return [verify_chain(leaf) for leaf in leaves]
