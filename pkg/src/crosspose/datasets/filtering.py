"""Motion-based frame thinning and validity filtering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from ..skeleton import BONES_16, bones_for, joint_set

DEFAULT_THRESHOLD_MM = 40.0
BONE_MIN_MM = 10.0
BONE_MAX_MM = 1000.0

REASONS = ("non-finite", "behind-camera", "bone-length")


def sample_frames(sequence: Iterable, threshold_mm: float = DEFAULT_THRESHOLD_MM) -> Iterator:
    """Keep frames whose max joint displacement from the last kept frame exceeds the threshold.

    The first frame is always kept. ``threshold_mm == 0`` keeps every frame,
    including exact repeats.
    """
    if threshold_mm < 0:
        raise ValueError("threshold_mm must be >= 0")
    last = None
    for pose in sequence:
        p = np.asarray(pose, dtype=np.float64)
        if last is None or threshold_mm == 0:
            last = p
            yield pose
            continue
        disp = np.max(np.linalg.norm(p - last, axis=-1))
        if disp > threshold_mm:
            last = p
            yield pose


def sample_frame_indices(poses, threshold_mm: float = DEFAULT_THRESHOLD_MM) -> np.ndarray:
    """Indices kept by ``sample_frames`` for a ``[F, J, 3]`` array."""
    poses = np.asarray(poses, dtype=np.float64)
    if threshold_mm < 0:
        raise ValueError("threshold_mm must be >= 0")
    if len(poses) == 0:
        return np.zeros(0, dtype=np.int64)
    if threshold_mm == 0:
        return np.arange(len(poses))
    keep = [0]
    last = poses[0]
    for k in range(1, len(poses)):
        if np.max(np.linalg.norm(poses[k] - last, axis=-1)) > threshold_mm:
            keep.append(k)
            last = poses[k]
    return np.asarray(keep, dtype=np.int64)


@dataclass
class FilterReport:
    total: int = 0
    counts: dict = field(default_factory=lambda: {r: 0 for r in REASONS})

    @property
    def dropped(self) -> int:
        return sum(self.counts.values())

    @property
    def kept(self) -> int:
        return self.total - self.dropped

    @property
    def fraction(self) -> float:
        return self.dropped / self.total if self.total else 0.0

    def as_dict(self) -> dict:
        return {"total": self.total, "dropped": self.dropped, "fraction": self.fraction, "counts": dict(self.counts)}


def invalid_reasons(joints_cam, bones=BONES_16) -> np.ndarray:
    """First failing check per sample as an index into ``REASONS``; -1 = valid.

    ``joints_cam`` is ``[N, J, 3]`` in camera space, not hip-centered.
    """
    X = np.asarray(joints_cam, dtype=np.float64)
    out = np.full(len(X), -1, dtype=np.int64)
    finite = np.all(np.isfinite(X), axis=(1, 2))
    out[~finite] = 0
    Xs = np.where(np.isfinite(X), X, 0.0)
    behind = np.any(Xs[..., 2] <= 0, axis=1) & (out < 0)
    out[behind] = 1
    lengths = _bone_lengths(Xs, bones)
    bad_bone = np.any((lengths < BONE_MIN_MM) | (lengths > BONE_MAX_MM), axis=1) & (out < 0)
    out[bad_bone] = 2
    return out


def _bone_lengths(X, bones):
    p = np.array([b[0] for b in bones])
    c = np.array([b[1] for b in bones])
    return np.linalg.norm(X[:, c] - X[:, p], axis=-1)


def filter_invalid_arrays(joints_cam, bones=BONES_16):
    """Vectorized core: returns ``(keep_mask, FilterReport)``."""
    reasons = invalid_reasons(joints_cam, bones)
    report = FilterReport(total=len(reasons))
    for i, name in enumerate(REASONS):
        report.counts[name] = int(np.sum(reasons == i))
    return reasons < 0, report


def filter_invalid(samples):
    """Drop unusable ``CanonicalPose`` records; never raises.

    Returns ``(kept, report)``.
    """
    samples = list(samples)
    if not samples:
        return [], FilterReport()
    J = samples[0].joints_3d_cam.shape[0]
    bones = bones_for(joint_set(J)) if J in (14, 16) else BONES_16
    stacked = np.stack([_uncentered(s) for s in samples])
    keep, report = filter_invalid_arrays(stacked, bones)
    return [s for s, k in zip(samples, keep) if k], report


def _uncentered(sample):
    X = np.asarray(sample.joints_3d_cam, dtype=np.float64)
    if getattr(sample, "hip_centered", False):
        # depth test is meaningless once centered; skip it by shifting forward
        return X + np.array([0.0, 0.0, 1e9])
    return X
