"""Zip archive of raw float32 tensors plus a JSON manifest.

Layout (all members stored uncompressed)::

    manifest.json
    <key>.f32        little-endian float32, row-major, shape in manifest

The manifest carries ``format``, ``format_version``, ``count`` and a
``tensors`` table ``{key: {"shape": [...], "file": "<key>.f32"}}``; every
tensor's leading dimension equals ``count``. Anything else in the manifest
(dataset name, joint set, sample ids, vocabularies, run metadata) is free-form.
"""

from __future__ import annotations

import json
import os
import struct
import zipfile
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import ArchiveError, DataLoadError

FORMAT = "crosspose-archive"
FORMAT_VERSION = 1
DTYPE = np.dtype("<f4")
_EPOCH = (1980, 1, 1, 0, 0, 0)
_LOCAL_HEADER = struct.Struct("<4sHHHHHIIIHH")


@dataclass
class DatasetArchive:
    manifest: dict
    tensors: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return int(self.manifest["count"])

    def __getitem__(self, key) -> np.ndarray:
        return self.tensors[key]

    def __contains__(self, key):
        return key in self.tensors

    @property
    def sample_ids(self) -> list[str]:
        ids = self.manifest.get("sample_ids")
        return list(ids) if ids is not None else [str(i) for i in range(self.count)]

    def subset(self, rows) -> "DatasetArchive":
        """New archive restricted to ``rows`` (index array or boolean mask)."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        manifest = dict(manifest_without_tensors(self.manifest))
        manifest["count"] = int(len(rows))
        if "sample_ids" in self.manifest:
            ids = self.manifest["sample_ids"]
            manifest["sample_ids"] = [ids[i] for i in rows]
        tensors = {k: v[rows] for k, v in self.tensors.items()}
        return make_archive(manifest, tensors)

    def equals(self, other: "DatasetArchive") -> bool:
        if manifest_without_tensors(self.manifest) != manifest_without_tensors(other.manifest):
            return False
        if set(self.tensors) != set(other.tensors):
            return False
        return all(
            self.tensors[k].shape == other.tensors[k].shape
            and self.tensors[k].tobytes() == other.tensors[k].tobytes()
            for k in self.tensors
        )


def manifest_without_tensors(manifest: dict) -> dict:
    return {k: v for k, v in manifest.items() if k != "tensors"}


def make_archive(manifest: dict, tensors: dict) -> DatasetArchive:
    """Coerce tensors to float32 and fill in the bookkeeping manifest keys."""
    manifest = dict(manifest)
    fixed = {}
    for key, arr in tensors.items():
        if "/" in key or key.startswith(".") or not key:
            raise ArchiveError(f"invalid tensor key {key!r}")
        fixed[key] = np.ascontiguousarray(np.asarray(arr, dtype=DTYPE))
    count = manifest.get("count")
    if count is None:
        count = next(iter(fixed.values())).shape[0] if fixed else 0
    manifest["count"] = int(count)
    manifest["format"] = FORMAT
    manifest["format_version"] = FORMAT_VERSION
    manifest["tensors"] = {k: {"shape": list(v.shape), "file": f"{k}.f32"} for k, v in sorted(fixed.items())}
    _validate_manifest(manifest)
    for k, v in fixed.items():
        if v.ndim == 0 or v.shape[0] != manifest["count"]:
            raise ArchiveError(f"tensor {k!r} leading dim {v.shape[:1]} != count {manifest['count']}")
    return DatasetArchive(manifest, fixed)


def _validate_manifest(manifest: dict):
    if manifest.get("format") != FORMAT:
        raise ArchiveError(f"not a {FORMAT} manifest (format={manifest.get('format')!r})")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ArchiveError(f"unsupported format_version {manifest.get('format_version')!r}, expected {FORMAT_VERSION}")
    count = manifest.get("count")
    if not isinstance(count, int) or count < 0:
        raise ArchiveError(f"bad count {count!r}")
    for key, info in manifest.get("tensors", {}).items():
        shape = info.get("shape")
        if not shape or shape[0] != count:
            raise ArchiveError(f"manifest shape {shape} for {key!r} disagrees with count {count}")
    ids = manifest.get("sample_ids")
    if ids is not None and len(ids) != count:
        raise ArchiveError(f"{len(ids)} sample_ids for count {count}")


def write_archive(archive: DatasetArchive, path) -> None:
    """Write deterministically: fixed timestamps, sorted keys, no compression."""
    if not isinstance(archive, DatasetArchive):
        raise TypeError("write_archive expects a DatasetArchive")
    archive = make_archive(archive.manifest, archive.tensors)
    manifest_bytes = json.dumps(archive.manifest, sort_keys=True, separators=(",", ":")).encode()
    tmp = f"{path}.tmp"
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        _write_member(zf, "manifest.json", manifest_bytes)
        for key in sorted(archive.tensors):
            _write_member(zf, f"{key}.f32", archive.tensors[key].tobytes())
    os.replace(tmp, path)


def _write_member(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


class ArchiveReader:
    """Lazy view over an archive file; tensors are read on demand.

    ``iter_batches`` reads straight from the stored member into a
    preallocated buffer, so peak memory is one batch per requested key.
    """

    def __init__(self, path):
        self.path = os.fspath(path)
        try:
            self._zf = zipfile.ZipFile(self.path, "r")
            raw = self._zf.read("manifest.json")
        except FileNotFoundError:
            raise DataLoadError("archive not found", self.path) from None
        except (zipfile.BadZipFile, KeyError, EOFError, OSError) as exc:
            raise ArchiveError(f"corrupt or truncated archive {self.path}: {exc}") from exc
        try:
            self.manifest = json.loads(raw)
        except ValueError as exc:
            raise ArchiveError(f"unreadable manifest in {self.path}: {exc}") from exc
        _validate_manifest(self.manifest)
        for key, info in self.manifest["tensors"].items():
            try:
                member = self._zf.getinfo(info["file"])
            except KeyError:
                raise ArchiveError(f"tensor file {info['file']} missing from {self.path}") from None
            expected = int(np.prod(info["shape"])) * DTYPE.itemsize
            if member.file_size != expected:
                raise ArchiveError(
                    f"tensor {key!r}: {member.file_size} bytes on disk, manifest shape needs {expected}"
                )
            if member.compress_type != zipfile.ZIP_STORED:
                raise ArchiveError(f"tensor {key!r} is compressed; only stored members are supported")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        self._zf.close()

    @property
    def count(self) -> int:
        return int(self.manifest["count"])

    @property
    def keys(self) -> list[str]:
        return sorted(self.manifest["tensors"])

    def shape(self, key) -> tuple:
        return tuple(self.manifest["tensors"][key]["shape"])

    def tensor(self, key) -> np.ndarray:
        """Whole tensor, CRC-checked."""
        info = self.manifest["tensors"].get(key)
        if info is None:
            raise KeyError(key)
        try:
            data = self._zf.read(info["file"])
        except (zipfile.BadZipFile, EOFError, OSError) as exc:
            raise ArchiveError(f"tensor {key!r} in {self.path} is corrupt: {exc}") from exc
        return np.frombuffer(data, dtype=DTYPE).reshape(info["shape"]).copy()

    def load(self) -> DatasetArchive:
        tensors = {k: self.tensor(k) for k in self.keys}
        return DatasetArchive(dict(self.manifest), tensors)

    def _data_offset(self, member: zipfile.ZipInfo, fh) -> int:
        fh.seek(member.header_offset)
        header = fh.read(_LOCAL_HEADER.size)
        if len(header) != _LOCAL_HEADER.size or header[:4] != b"PK\x03\x04":
            raise ArchiveError(f"bad local header for {member.filename} in {self.path}")
        fields = _LOCAL_HEADER.unpack(header)
        name_len, extra_len = fields[9], fields[10]
        return member.header_offset + _LOCAL_HEADER.size + name_len + extra_len

    def iter_batches(self, keys, batch_size=4096) -> Iterator[dict]:
        """Yield ``{key: rows}`` dicts of at most ``batch_size`` rows."""
        keys = list(keys)
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        with open(self.path, "rb") as fh:
            offsets, row_shapes = {}, {}
            for key in keys:
                info = self.manifest["tensors"][key]
                member = self._zf.getinfo(info["file"])
                offsets[key] = self._data_offset(member, fh)
                row_shapes[key] = tuple(info["shape"][1:])
            for start in range(0, self.count, batch_size):
                n = min(batch_size, self.count - start)
                batch = {}
                for key in keys:
                    rs = row_shapes[key]
                    row_bytes = int(np.prod(rs, dtype=np.int64)) * DTYPE.itemsize
                    buf = np.empty((n,) + rs, dtype=DTYPE)
                    fh.seek(offsets[key] + start * row_bytes)
                    got = fh.readinto(memoryview(buf).cast("B"))
                    if got != n * row_bytes:
                        raise ArchiveError(f"tensor {key!r} truncated at row {start} in {self.path}")
                    batch[key] = buf
                del buf
                yield batch
                # drop our reference so the caller can free the rows
                del batch


def read_archive(path) -> DatasetArchive:
    with ArchiveReader(path) as reader:
        return reader.load()


def open_archive(path) -> ArchiveReader:
    return ArchiveReader(path)


def archive_bytes(archive: DatasetArchive) -> bytes:
    """Serialized archive as bytes (used for determinism checks)."""
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "a.zip")
        write_archive(archive, p)
        with open(p, "rb") as fh:
            return fh.read()


__all__ = [
    "ArchiveReader",
    "DatasetArchive",
    "archive_bytes",
    "make_archive",
    "open_archive",
    "read_archive",
    "write_archive",
]
