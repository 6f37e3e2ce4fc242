import json
import tracemalloc
import zipfile

import numpy as np
import pytest

from crosspose.datasets.archive import (
    DTYPE,
    ArchiveReader,
    archive_bytes,
    make_archive,
    read_archive,
    write_archive,
)
from crosspose.errors import ArchiveError, DataLoadError


def _archive(n=50, seed=0):
    rng = np.random.default_rng(seed)
    return make_archive(
        {"kind": "test", "sample_ids": [f"s{i}" for i in range(n)]},
        {"a": rng.normal(size=(n, 16, 3)), "b": rng.normal(size=(n, 2))},
    )


def test_round_trip_bit_identical(tmp_path):
    a = _archive()
    p = tmp_path / "a.zip"
    write_archive(a, p)
    b = read_archive(p)
    assert a.equals(b)
    for k in a.tensors:
        assert a[k].tobytes() == b[k].tobytes()


def test_container_layout(tmp_path):
    p = tmp_path / "a.zip"
    write_archive(_archive(7), p)
    with zipfile.ZipFile(p) as zf:
        names = zf.namelist()
        assert names == ["manifest.json", "a.f32", "b.f32"]
        assert all(i.compress_type == zipfile.ZIP_STORED for i in zf.infolist())
        m = json.loads(zf.read("manifest.json"))
        raw = np.frombuffer(zf.read("a.f32"), dtype="<f4")
    assert m["format_version"] == 1 and m["count"] == 7
    assert m["tensors"]["a"] == {"shape": [7, 16, 3], "file": "a.f32"}
    assert raw.size == 7 * 16 * 3


def test_writes_are_deterministic():
    assert archive_bytes(_archive(seed=3)) == archive_bytes(_archive(seed=3))


def test_truncated_file_is_archive_error(tmp_path):
    p = tmp_path / "a.zip"
    write_archive(_archive(), p)
    data = p.read_bytes()
    for cut in (len(data) // 2, len(data) - 10, 100):
        q = tmp_path / f"t{cut}.zip"
        q.write_bytes(data[:cut])
        with pytest.raises(ArchiveError):
            read_archive(q)


def test_corrupted_payload_fails_crc(tmp_path):
    p = tmp_path / "a.zip"
    write_archive(_archive(), p)
    data = bytearray(p.read_bytes())
    with zipfile.ZipFile(p) as zf:
        info = zf.getinfo("a.f32")
    data[info.header_offset + 30 + len("a.f32") + 5] ^= 0xFF
    p.write_bytes(bytes(data))
    with pytest.raises(ArchiveError):
        read_archive(p)


def _rewrite_manifest(src, dst, edit):
    with zipfile.ZipFile(src) as zin, zipfile.ZipFile(dst, "w", zipfile.ZIP_STORED) as zout:
        for info in zin.infolist():
            data = zin.read(info.filename)
            if info.filename == "manifest.json":
                m = json.loads(data)
                edit(m)
                data = json.dumps(m).encode()
            zout.writestr(info.filename, data)


def test_version_mismatch(tmp_path):
    p, q = tmp_path / "a.zip", tmp_path / "b.zip"
    write_archive(_archive(), p)
    _rewrite_manifest(p, q, lambda m: m.update(format_version=2))
    with pytest.raises(ArchiveError, match="format_version"):
        read_archive(q)


def test_shape_disagreement(tmp_path):
    p, q = tmp_path / "a.zip", tmp_path / "b.zip"
    write_archive(_archive(), p)
    _rewrite_manifest(p, q, lambda m: m["tensors"]["a"].update(shape=[50, 17, 3]))
    with pytest.raises(ArchiveError):
        read_archive(q)


def test_missing_file():
    with pytest.raises(DataLoadError):
        read_archive("/nonexistent/archive.zip")


def test_count_mismatch_rejected():
    with pytest.raises(ArchiveError):
        make_archive({"count": 3}, {"a": np.zeros((4, 2))})


def test_iter_batches_matches_full_read(tmp_path):
    a = _archive(1000)
    p = tmp_path / "a.zip"
    write_archive(a, p)
    with ArchiveReader(p) as r:
        parts = [b["a"] for b in r.iter_batches(["a"], batch_size=128)]
    np.testing.assert_array_equal(np.concatenate(parts), a["a"])
    assert [len(x) for x in parts][-1] == 1000 - 7 * 128


def test_streaming_memory_is_bounded(tmp_path):
    n, batch = 100_000, 4096
    p = tmp_path / "big.zip"
    rows = np.arange(n, dtype=np.float32)[:, None, None] * np.ones((1, 16, 3), dtype=np.float32)
    write_archive(make_archive({}, {"joints": rows}), p)
    del rows
    footprint = batch * 16 * 3 * DTYPE.itemsize
    total = 0.0
    with ArchiveReader(p) as r:
        tracemalloc.start()
        for b in r.iter_batches(["joints"], batch_size=batch):
            total += float(b["joints"][:, 0, 0].sum(dtype=np.float64))
            del b
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
    assert total == n * (n - 1) / 2
    assert peak < 2 * footprint, (peak, footprint)
