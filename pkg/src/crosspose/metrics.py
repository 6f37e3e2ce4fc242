"""Protocol 1 (MPJPE) and Protocol 2 (PA-MPJPE) errors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentDegenerateError, NotCenteredError, ShapeError

CENTER_TOL_MM = 1e-6


@dataclass
class ProtocolResult:
    """Aggregate and per-joint errors for both protocols.

    Attributes:
        mpjpe_mm: Protocol 1 error.
        pa_mpjpe_mm: Protocol 2 error over the non-degenerate samples.
        per_joint_mpjpe_mm: ``[J]`` Protocol 1 error per joint.
        per_joint_pa_mpjpe_mm: ``[J]`` Protocol 2 error per joint.
        sample_count: Number of samples evaluated.
        degenerate_count: Samples excluded from Protocol 2.
    """

    mpjpe_mm: float
    pa_mpjpe_mm: float
    per_joint_mpjpe_mm: np.ndarray
    per_joint_pa_mpjpe_mm: np.ndarray
    sample_count: int
    degenerate_count: int = 0
    per_sample: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {
            "mpjpe_mm": self.mpjpe_mm,
            "pa_mpjpe_mm": self.pa_mpjpe_mm,
            "per_joint_mpjpe_mm": [float(v) for v in self.per_joint_mpjpe_mm],
            "per_joint_pa_mpjpe_mm": [float(v) for v in self.per_joint_pa_mpjpe_mm],
            "sample_count": self.sample_count,
            "degenerate_count": self.degenerate_count,
        }


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    if pred.ndim != 3 or pred.shape[-1] != 3:
        raise ShapeError(f"expected [N, J, 3], got {pred.shape}")
    return pred, gt


def check_centered(X, root_index=0, name="poses"):
    off = np.abs(np.asarray(X)[:, root_index, :])
    if off.size and off.max() > CENTER_TOL_MM:
        i = int(np.argmax(off.max(axis=1)))
        raise NotCenteredError(f"{name}: root joint of sample {i} is {off[i].max():.3g} mm from the origin")


def joint_errors(pred, gt) -> np.ndarray:
    """``[N, J]`` Euclidean distances."""
    pred, gt = _check_pair(pred, gt)
    return np.linalg.norm(pred - gt, axis=-1)


def mpjpe(pred, gt, root_index=0):
    """Protocol 1 on hip-centered poses.

    Averages jointly over samples and joints (same as frames-then-joints for
    a fixed joint count).

    Returns:
        ``(mpjpe_mm, per_joint_mm)``.

    Raises:
        ShapeError: Shapes differ or are not ``[N, J, 3]``.
        NotCenteredError: A root row is further than 1e-6 mm from zero.
    """
    pred, gt = _check_pair(pred, gt)
    check_centered(pred, root_index, "prediction")
    check_centered(gt, root_index, "ground truth")
    if len(pred) == 0:
        J = pred.shape[1]
        return 0.0, np.zeros(J)
    e = np.linalg.norm(pred - gt, axis=-1)
    per_joint = e.mean(axis=0)
    return float(per_joint.mean()), per_joint


def procrustes_align(pred, gt, with_scale=True, return_transform=False):
    """Least-squares similarity (or rigid) fit of ``pred`` onto ``gt``.

    Args:
        pred: ``[J, 3]`` points to move.
        gt: ``[J, 3]`` target points.
        with_scale: Fit a uniform scale; otherwise ``s = 1``.
        return_transform: Also return ``(s, R, t)`` with
            ``aligned = s * pred @ R.T + t``.

    Raises:
        AlignmentDegenerateError: Fewer than 3 points, coincident ground
            truth or a cross-covariance of rank < 2 (collinear points).
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ShapeError(f"procrustes needs matching [J, 3] arrays, got {pred.shape} and {gt.shape}")
    if len(pred) < 3:
        raise AlignmentDegenerateError("need at least 3 joints")
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    P, G = pred - mu_p, gt - mu_g
    norm_p = np.sum(P * P)
    if np.sum(G * G) < 1e-18 or norm_p < 1e-18:
        raise AlignmentDegenerateError("coincident points")
    U, S, Vt = np.linalg.svd(G.T @ P)
    if S[1] <= 1e-9 * S[0]:
        raise AlignmentDegenerateError("collinear points: cross-covariance rank < 2")
    # flip the smallest singular direction if the best orthogonal map is a reflection
    d = np.sign(np.linalg.det(U @ Vt)) or 1.0
    D = np.array([1.0, 1.0, d])
    R = (U * D) @ Vt
    s = float((S * D).sum() / norm_p) if with_scale else 1.0
    t = mu_g - s * mu_p @ R.T
    aligned = s * pred @ R.T + t
    if return_transform:
        return aligned, (s, R, t)
    return aligned


def pa_joint_errors(pred, gt, with_scale=True) -> np.ndarray:
    """``[N, J]`` per-joint errors after per-sample alignment; NaN rows mark degenerate samples."""
    pred, gt = _check_pair(pred, gt)
    out = np.full(pred.shape[:2], np.nan)
    for i in range(len(pred)):
        try:
            a = procrustes_align(pred[i], gt[i], with_scale)
        except AlignmentDegenerateError:
            continue
        out[i] = np.linalg.norm(a - gt[i], axis=-1)
    return out


def reduce_errors(e):
    """Aggregate an ``[N, J]`` error array (NaN rows skipped).

    Returns:
        ``(aggregate_mm, per_joint_mm, skipped_rows)``.
    """
    e = np.asarray(e, dtype=np.float64)
    ok = ~np.any(np.isnan(e), axis=1)
    if not ok.any():
        return 0.0, np.zeros(e.shape[1]), int(len(e))
    per_joint = e[ok].mean(axis=0)
    return float(per_joint.mean()), per_joint, int((~ok).sum())


def pa_mpjpe(pred, gt, with_scale=True):
    """Protocol 2: per-sample Procrustes then MPJPE.

    Degenerate samples are skipped and counted rather than aborting the run.

    Returns:
        ``(pa_mpjpe_mm, per_joint_mm, per_sample_mm, degenerate_count)``;
        ``per_sample_mm`` is NaN for degenerate samples.
    """
    e = pa_joint_errors(pred, gt, with_scale)
    agg, per_joint, degen = reduce_errors(e)
    return agg, per_joint, e.mean(axis=1), degen


def evaluate(pred, gt, with_scale=True, root_index=0) -> ProtocolResult:
    """Both protocols on hip-centered ``[N, J, 3]`` arrays."""
    m, pj = mpjpe(pred, gt, root_index)
    pa, pj_pa, ps_pa, degen = pa_mpjpe(pred, gt, with_scale)
    return ProtocolResult(
        mpjpe_mm=m,
        pa_mpjpe_mm=pa,
        per_joint_mpjpe_mm=pj,
        per_joint_pa_mpjpe_mm=pj_pa,
        sample_count=len(np.asarray(pred)),
        degenerate_count=degen,
        per_sample={"mpjpe_mm": joint_errors(pred, gt).mean(axis=1), "pa_mpjpe_mm": ps_pa},
    )


def result_from_errors(e1, e2) -> ProtocolResult:
    """Build a result from precomputed ``[N, J]`` Protocol 1/2 error arrays."""
    m, pj, _ = reduce_errors(e1)
    pa, pj_pa, degen = reduce_errors(e2)
    return ProtocolResult(
        mpjpe_mm=m,
        pa_mpjpe_mm=pa,
        per_joint_mpjpe_mm=pj,
        per_joint_pa_mpjpe_mm=pj_pa,
        sample_count=len(e1),
        degenerate_count=degen,
        per_sample={"mpjpe_mm": np.asarray(e1).mean(axis=1), "pa_mpjpe_mm": np.asarray(e2).mean(axis=1)},
    )


def per_joint_report(results) -> np.ndarray:
    """Mean per-joint errors across results as a ``[J, 2]`` array (P1, P2).

    Raises:
        ValueError: No results supplied.
        ShapeError: Joint counts differ between results.
    """
    results = list(results)
    if not results:
        raise ValueError("per_joint_report needs at least one result")
    J = len(results[0].per_joint_mpjpe_mm)
    for r in results:
        if len(r.per_joint_mpjpe_mm) != J or len(r.per_joint_pa_mpjpe_mm) != J:
            raise ShapeError(f"joint-set mismatch: {len(r.per_joint_mpjpe_mm)} vs {J} joints")
    p1 = np.mean([r.per_joint_mpjpe_mm for r in results], axis=0)
    p2 = np.mean([r.per_joint_pa_mpjpe_mm for r in results], axis=0)
    return np.stack([p1, p2], axis=1)
