"""Hashing, manifest determinism, and chain verification tests."""

import random

import pytest

from routecast.provenance import (
    Manifest,
    MissingFile,
    ProvenanceError,
    FileDigest,
    hash_bytes,
    hash_file,
    load_manifest,
    manifest_identity,
    manifest_to_bytes,
    verify_all,
    verify_chain,
    write_manifest,
)


class TestHashFile:
    def test_empty_file_standard_vector(self, tmp_path):
        path = tmp_path / "empty"
        path.write_bytes(b"")
        assert (
            hash_file(path)
            == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        )

    def test_abc_standard_vector(self, tmp_path):
        path = tmp_path / "abc"
        path.write_bytes(b"abc")
        assert (
            hash_file(path)
            == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        )

    def test_same_file_twice(self, tmp_path):
        path = tmp_path / "x"
        path.write_bytes(b"payload")
        assert hash_file(path) == hash_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ProvenanceError):
            hash_file(tmp_path / "nope")


class TestManifest:
    def test_bad_hex_rejected(self):
        with pytest.raises(ProvenanceError):
            Manifest(
                stage="s",
                created_at="2026-01-01T00:00:00+00:00",
                inputs=(FileDigest("a", "XYZ"),),
                outputs=(),
                parent=None,
                tool_version="0",
            )

    def test_uppercase_hex_rejected(self):
        with pytest.raises(ProvenanceError):
            Manifest(
                stage="s",
                created_at="t",
                inputs=(),
                outputs=(),
                parent="A" * 64,
                tool_version="0",
            )

    def test_canonical_bytes_are_sorted_and_lf(self):
        manifest = Manifest(
            stage="s",
            created_at="2026-01-01T00:00:00+00:00",
            inputs=(FileDigest("in.txt", "0" * 64),),
            outputs=(FileDigest("out.txt", "1" * 64),),
            parent=None,
            tool_version="0.1.0",
        )
        payload = manifest_to_bytes(manifest)
        assert payload.endswith(b"\n")
        assert payload.index(b'"created_at"') < payload.index(b'"inputs"') < payload.index(b'"stage"')


def _write(path, data: bytes):
    path.write_bytes(data)
    return path


class TestWriteManifest:
    def test_single_stage_verifies(self, tmp_path):
        src = _write(tmp_path / "in.txt", b"input")
        dst = _write(tmp_path / "out.txt", b"output")
        manifest_path, digest = write_manifest(tmp_path, "ingest", [src], [dst])
        assert manifest_path.name == "ingest.manifest.json"
        assert manifest_identity(load_manifest(manifest_path)) == digest
        assert verify_chain(manifest_path).ok

    def test_pinned_timestamp_gives_identical_hash(self, tmp_path):
        src = _write(tmp_path / "in.txt", b"input")
        dst = _write(tmp_path / "out.txt", b"output")
        when = "2026-01-01T00:00:00+00:00"
        _, first = write_manifest(tmp_path, "s", [src], [dst], created_at=when)
        _, second = write_manifest(tmp_path, "s", [src], [dst], created_at=when)
        assert first == second

    def test_identity_hash_ignores_timestamp(self, tmp_path):
        src = _write(tmp_path / "in.txt", b"input")
        dst = _write(tmp_path / "out.txt", b"output")
        _, first = write_manifest(tmp_path, "s", [src], [dst], created_at="2026-01-01T00:00:00+00:00")
        _, second = write_manifest(tmp_path, "s", [src], [dst], created_at="2026-02-02T02:02:02+00:00")
        assert first == second  # identity covers content, not clock data

    def test_missing_referenced_file(self, tmp_path):
        with pytest.raises(MissingFile):
            write_manifest(tmp_path, "s", [tmp_path / "ghost"], [])

    def test_parent_must_exist_in_chain_dir(self, tmp_path):
        src = _write(tmp_path / "a.txt", b"a")
        with pytest.raises(ProvenanceError):
            write_manifest(tmp_path, "s", [src], [], parent="f" * 64)

    def test_parent_outputs_must_feed_inputs(self, tmp_path):
        a = _write(tmp_path / "a.txt", b"a")
        b = _write(tmp_path / "b.txt", b"b")
        unrelated = _write(tmp_path / "c.txt", b"c")
        first, _ = write_manifest(tmp_path, "one", [a], [b])
        with pytest.raises(ProvenanceError):
            write_manifest(tmp_path, "two", [unrelated], [], parent=first)

    def test_paths_recorded_relative_with_forward_slashes(self, tmp_path):
        sub = tmp_path / "data"
        sub.mkdir()
        src = _write(sub / "in.txt", b"x")
        manifest_path, _ = write_manifest(tmp_path, "s", [src], [])
        manifest = load_manifest(manifest_path)
        assert manifest.inputs[0].path == "data/in.txt"


def _three_stage_chain(tmp_path):
    raw = _write(tmp_path / "raw.txt", b"raw data")
    mid = _write(tmp_path / "mid.txt", b"intermediate")
    out = _write(tmp_path / "out.txt", b"final")
    m1, _ = write_manifest(tmp_path, "ingest", [raw], [mid])
    m2, _ = write_manifest(tmp_path, "transform", [mid], [out], parent=m1)
    summary = _write(tmp_path / "summary.txt", b"summary")
    m3, _ = write_manifest(tmp_path, "report", [out], [summary], parent=m2)
    return {"files": [raw, mid, out, summary], "manifests": [m1, m2, m3]}


class TestVerifyChain:
    def test_untouched_chain_ok(self, tmp_path):
        chain = _three_stage_chain(tmp_path)
        report = verify_chain(chain["manifests"][-1])
        assert report.ok
        assert report.stages == ["report", "transform", "ingest"]

    def test_single_flipped_bit_localized(self, tmp_path):
        chain = _three_stage_chain(tmp_path)
        victim = chain["files"][1]  # mid.txt, referenced by two stages
        data = bytearray(victim.read_bytes())
        data[0] ^= 0x01
        victim.write_bytes(bytes(data))
        report = verify_chain(chain["manifests"][-1])
        assert not report.ok
        flagged = {path for path, _, _ in report.mismatches}
        assert flagged == {"mid.txt"}

    def test_random_single_byte_mutations_detected(self, tmp_path):
        chain = _three_stage_chain(tmp_path)
        gen = random.Random(7)
        for _ in range(8):
            victim = gen.choice(chain["files"])
            original = victim.read_bytes()
            data = bytearray(original)
            index = gen.randrange(len(data))
            data[index] ^= 1 << gen.randrange(8)
            victim.write_bytes(bytes(data))
            report = verify_chain(chain["manifests"][-1])
            assert not report.ok
            assert any(path == victim.name for path, _, _ in report.mismatches)
            victim.write_bytes(original)
        assert verify_chain(chain["manifests"][-1]).ok

    def test_deleted_intermediate_manifest_breaks_chain(self, tmp_path):
        chain = _three_stage_chain(tmp_path)
        chain["manifests"][1].unlink()
        report = verify_chain(chain["manifests"][-1])
        assert not report.ok
        assert any("not found" in entry for entry in report.broken_links)

    def test_deleted_referenced_file_is_missing(self, tmp_path):
        chain = _three_stage_chain(tmp_path)
        chain["files"][3].unlink()
        report = verify_chain(chain["manifests"][-1])
        assert "summary.txt" in report.missing

    def test_tampered_manifest_changes_its_hash(self, tmp_path):
        """Editing an intermediate manifest orphans its children."""
        chain = _three_stage_chain(tmp_path)
        target = chain["manifests"][1]
        text = target.read_text().replace("transform", "tampered")
        target.write_text(text)
        report = verify_chain(chain["manifests"][-1])
        assert not report.ok
        assert report.broken_links


class TestVerifyAll:
    def test_finds_single_leaf(self, tmp_path):
        _three_stage_chain(tmp_path)
        reports = verify_all(tmp_path)
        assert len(reports) == 1
        assert reports[0].ok

    def test_no_manifests_raises(self, tmp_path):
        with pytest.raises(ProvenanceError):
            verify_all(tmp_path)


def test_hash_bytes_matches_hash_file(tmp_path):
    path = tmp_path / "f"
    path.write_bytes(b"identical")
    assert hash_bytes(b"identical") == hash_file(path)
