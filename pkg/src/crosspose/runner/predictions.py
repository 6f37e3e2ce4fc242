"""Prediction files and built-in baseline predictors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..datasets.archive import ArchiveReader, make_archive, write_archive
from ..errors import DataLoadError, MissingIdsError, NotCenteredError, PredictionSourceError, ShapeError
from ..metrics import CENTER_TOL_MM
from ..skeleton import CANONICAL_16, JointSet

JOINTS_KEY = "joints_3d"


@dataclass
class PredictionBatch:
    sample_ids: list
    joints_3d: np.ndarray

    def validate(self, js: JointSet = CANONICAL_16):
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise PredictionSourceError("duplicate sample ids in prediction batch")
        if self.joints_3d.shape != (len(self.sample_ids), js.count, 3):
            raise ShapeError(f"predictions have shape {self.joints_3d.shape}, expected [N, {js.count}, 3]")
        root = np.abs(self.joints_3d[:, js.root_index])
        if root.size and root.max() > CENTER_TOL_MM:
            i = int(np.argmax(root.max(axis=1)))
            raise NotCenteredError(f"prediction {self.sample_ids[i]} is not hip-centered")
        return self


def write_prediction_file(path, sample_ids, joints_3d, metadata=None):
    joints_3d = np.asarray(joints_3d, dtype=np.float64)
    manifest = {"kind": "predictions", "sample_ids": list(sample_ids), "metadata": metadata or {}}
    write_archive(make_archive(manifest, {JOINTS_KEY: joints_3d}), path)


def load_prediction_file(path, js: JointSet = CANONICAL_16, expected_ids=None, batch_size=4096) -> Iterator[PredictionBatch]:
    """Stream validated ``PredictionBatch`` objects from a prediction file.

    Args:
        path: Archive written by ``write_prediction_file``.
        js: Joint set the evaluation uses.
        expected_ids: Ids of the evaluation set; any missing or extra id is
            an error (order does not matter).
        batch_size: Rows per batch.

    Raises:
        MissingIdsError: Id sets differ.
        ShapeError: Row shape does not match ``js``.
        NotCenteredError: A root row is not at the origin.
    """
    try:
        reader = ArchiveReader(path)
    except DataLoadError as exc:
        raise PredictionSourceError(f"cannot open prediction file: {exc}") from exc
    ids = reader.manifest.get("sample_ids")
    if ids is None or JOINTS_KEY not in reader.keys:
        reader.close()
        raise PredictionSourceError(f"{path} is not a prediction file (needs '{JOINTS_KEY}' and sample_ids)")
    shape = reader.shape(JOINTS_KEY)
    if tuple(shape[1:]) != (js.count, 3):
        reader.close()
        raise ShapeError(f"{path}: predictions are {list(shape[1:])} per sample, run uses [{js.count}, 3]")
    if len(set(ids)) != len(ids):
        reader.close()
        raise PredictionSourceError(f"{path}: duplicate sample ids")
    if expected_ids is not None:
        exp = set(expected_ids)
        got = set(ids)
        if exp != got:
            reader.close()
            raise MissingIdsError(sorted(exp - got), sorted(got - exp))

    def gen():
        with reader:
            start = 0
            for batch in reader.iter_batches([JOINTS_KEY], batch_size):
                X = batch[JOINTS_KEY].astype(np.float64)
                yield PredictionBatch(ids[start : start + len(X)], X).validate(js)
                start += len(X)

    return gen()


def collect_predictions(path, sample_ids, js: JointSet = CANONICAL_16, batch_size=4096) -> np.ndarray:
    """Predictions reordered to ``sample_ids``."""
    where = {s: i for i, s in enumerate(sample_ids)}
    out = np.empty((len(sample_ids), js.count, 3))
    for b in load_prediction_file(path, js, sample_ids, batch_size):
        out[[where[s] for s in b.sample_ids]] = b.joints_3d
    return out


def oracle_with_noise(gt, sigma_mm, seed, root_index=0) -> np.ndarray:
    """Ground truth plus iid N(0, sigma^2) per coordinate on every non-root joint."""
    if sigma_mm < 0:
        raise ValueError("sigma_mm must be >= 0")
    gt = np.asarray(gt, dtype=np.float64)
    rng = np.random.default_rng(seed)
    noise = sigma_mm * rng.standard_normal(gt.shape)
    noise[..., root_index, :] = 0.0
    return gt + noise
