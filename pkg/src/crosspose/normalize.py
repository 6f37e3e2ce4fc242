"""Screen-space normalization and z-score standardization."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ShapeError, ValidationError

log = logging.getLogger(__name__)

STD_FLOOR = 1e-12


def screen_normalize(uv, width, height) -> np.ndarray:
    """Pixels -> unit interval. Out-of-frame points land outside (0, 1) and are kept."""
    if width <= 0 or height <= 0:
        raise ValidationError("image width and height must be positive")
    uv = np.asarray(uv, dtype=np.float64)
    return uv / np.array([width, height], dtype=np.float64)


def screen_normalize_batch(uv, wh) -> np.ndarray:
    """Per-sample dims: ``uv`` is ``[N, J, 2]``, ``wh`` is ``[N, 2]``."""
    uv = np.asarray(uv, dtype=np.float64)
    wh = np.asarray(wh, dtype=np.float64)
    if np.any(wh <= 0):
        raise ValidationError("image width and height must be positive")
    return uv / wh[:, None, :]


@dataclass
class ZScoreStats:
    mean: np.ndarray
    std: np.ndarray
    dataset: str = ""
    joint_set: str = ""
    count: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape:
            raise ShapeError(f"mean {self.mean.shape} and std {self.std.shape} differ")
        if np.any(self.std < STD_FLOOR):
            raise ValidationError("std entries must be >= 1e-12")

    def to_json(self) -> str:
        return json.dumps(
            {
                "dataset": self.dataset,
                "joint_set": self.joint_set,
                "mean": self.mean.tolist(),
                "std": self.std.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ZScoreStats":
        doc = json.loads(text)
        return cls(np.array(doc["mean"]), np.array(doc["std"]), doc.get("dataset", ""), doc.get("joint_set", ""))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "ZScoreStats":
        with open(path) as fh:
            return cls.from_json(fh.read())


class RunningStats:
    """Welford/Chan accumulator over a stream of equally shaped arrays.

    ``update`` takes either one sample or a stacked batch (``batch=True``).
    """

    def __init__(self):
        self.n = 0
        self.mean = None
        self.m2 = None

    def update(self, x, batch=False):
        x = np.asarray(x, dtype=np.float64)
        if not batch:
            x = x[None]
        nb = x.shape[0]
        if nb == 0:
            return
        mb = x.mean(axis=0)
        m2b = ((x - mb) ** 2).sum(axis=0)
        if self.n == 0:
            self.n, self.mean, self.m2 = nb, mb, m2b
            return
        if mb.shape != self.mean.shape:
            raise ShapeError(f"sample shape {mb.shape} differs from stream shape {self.mean.shape}")
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + m2b + delta**2 * (self.n * nb / n)
        self.n = n

    def finalize(self, dataset="", joint_set="") -> ZScoreStats:
        if self.n < 2:
            raise ValidationError(f"need at least 2 samples for statistics, got {self.n}")
        std = np.sqrt(self.m2 / self.n)  # population std
        low = std < STD_FLOOR
        if np.any(low):
            log.warning("%d constant coordinate(s); std clamped to %g", int(low.sum()), STD_FLOOR)
            std = np.where(low, STD_FLOOR, std)
        return ZScoreStats(self.mean.copy(), std, dataset, joint_set, self.n)


def compute_stats(samples: Iterable, dataset="", joint_set="", batched=False) -> ZScoreStats:
    """Per-coordinate mean and population std over a stream, in one pass.

    With ``batched=True`` each stream item is a stack of samples along axis 0.
    """
    acc = RunningStats()
    for s in samples:
        acc.update(s, batch=batched)
    return acc.finalize(dataset, joint_set)


def zscore(X, stats: ZScoreStats) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    _check_shape(X, stats)
    return (X - stats.mean) / stats.std


def zscore_inverse(Xn, stats: ZScoreStats) -> np.ndarray:
    Xn = np.asarray(Xn, dtype=np.float64)
    _check_shape(Xn, stats)
    return Xn * stats.std + stats.mean


def _check_shape(X, stats):
    k = stats.mean.ndim
    if X.shape[X.ndim - k :] != stats.mean.shape:
        raise ShapeError(f"array shape {X.shape} does not end with stats shape {stats.mean.shape}")
