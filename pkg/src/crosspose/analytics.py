"""Viewpoint histograms, bin-level error maps and rank correlation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st

from .errors import UndefinedCorrelationError

ELEV_STEP = 5.0
AZIM_STEP = 10.0
N_ELEV = int(180 / ELEV_STEP)
N_AZIM = int(360 / AZIM_STEP)

CONTOUR_HEADER = ("azim_center", "elev_center", "train_count", "test_count", "mean_error_mm")


@dataclass(frozen=True)
class ViewpointBin:
    elev_lo: float
    elev_hi: float
    azim_lo: float
    azim_hi: float
    train_count: int
    test_count: int
    mean_test_error_mm: float | None


@dataclass(frozen=True)
class CorrelationResult:
    num_bins: int
    rho: float
    p_value: float
    sigma: float

    def as_dict(self):
        return {"num_bins": self.num_bins, "rho": self.rho, "p_value": self.p_value, "sigma": self.sigma}


class ViewpointGrid:
    """5 deg elevation x 10 deg azimuth counts over the whole sphere.

    Rows are elevation bins from -90, columns azimuth bins from -180. Bins
    are lower-inclusive; elevation +90 folds into the top row and azimuth
    +180 wraps to -180.
    """

    def __init__(self):
        self.train = np.zeros((N_ELEV, N_AZIM), dtype=np.int64)
        self.test = np.zeros((N_ELEV, N_AZIM), dtype=np.int64)
        self.err_sum = np.zeros((N_ELEV, N_AZIM))

    @staticmethod
    def index(viewpoints):
        """Bin indices ``(ei, ai)`` for ``[N, 2]`` (elevation, azimuth) degrees."""
        vp = np.asarray(viewpoints, dtype=np.float64).reshape(-1, 2)
        ei = np.floor((vp[:, 0] + 90.0) / ELEV_STEP).astype(np.int64)
        ai = np.floor((vp[:, 1] + 180.0) / AZIM_STEP).astype(np.int64)
        return np.clip(ei, 0, N_ELEV - 1), np.mod(ai, N_AZIM)

    def add_train(self, viewpoints):
        vp = _defined(viewpoints)
        ei, ai = self.index(vp)
        np.add.at(self.train, (ei, ai), 1)
        return self

    def add_test(self, viewpoints, errors=None):
        vp = np.asarray(viewpoints, dtype=np.float64).reshape(-1, 2)
        ok = np.all(np.isfinite(vp), axis=1)
        if errors is not None:
            errors = np.asarray(errors, dtype=np.float64).reshape(-1)
            ok &= np.isfinite(errors)
        ei, ai = self.index(vp[ok])
        np.add.at(self.test, (ei, ai), 1)
        if errors is not None:
            np.add.at(self.err_sum, (ei, ai), errors[ok])
        return self

    def merge(self, other: "ViewpointGrid") -> "ViewpointGrid":
        out = ViewpointGrid()
        out.train = self.train + other.train
        out.test = self.test + other.test
        out.err_sum = self.err_sum + other.err_sum
        return out

    def mean_error(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.test > 0, self.err_sum / np.maximum(self.test, 1), np.nan)

    def bins(self, populated_only=True):
        """``ViewpointBin`` records in elevation-major order."""
        mean = self.mean_error()
        out = []
        for ei in range(N_ELEV):
            for ai in range(N_AZIM):
                tr, te = int(self.train[ei, ai]), int(self.test[ei, ai])
                if populated_only and tr == 0 and te == 0:
                    continue
                e_lo, a_lo = -90.0 + ei * ELEV_STEP, -180.0 + ai * AZIM_STEP
                out.append(
                    ViewpointBin(e_lo, e_lo + ELEV_STEP, a_lo, a_lo + AZIM_STEP, tr, te, float(mean[ei, ai]) if te else None)
                )
        return out


def _defined(viewpoints):
    vp = np.asarray(viewpoints, dtype=np.float64).reshape(-1, 2)
    return vp[np.all(np.isfinite(vp), axis=1)]


def bin_viewpoints(train_viewpoints=None, test_viewpoints=None, errors=None) -> ViewpointGrid:
    """Count viewpoints (rows with NaN are skipped) and average errors per bin."""
    g = ViewpointGrid()
    if train_viewpoints is not None:
        g.add_train(train_viewpoints)
    if test_viewpoints is not None:
        g.add_test(test_viewpoints, errors)
    return g


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def t_statistic(rho, n) -> float:
    if abs(rho) >= 1.0:
        return float("inf")
    return float(rho * np.sqrt((n - 2) / (1.0 - rho * rho)))


def spearman(x, y) -> CorrelationResult:
    """Tie-corrected Spearman correlation with a Student-t p-value.

    ``sigma`` is ``|t|`` with ``t = rho * sqrt((n - 2) / (1 - rho^2))``.

    Raises:
        UndefinedCorrelationError: Fewer than 3 pairs, mismatched lengths or
            a constant input.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(x) != len(y):
        raise UndefinedCorrelationError(f"length mismatch {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise UndefinedCorrelationError(f"need at least 3 pairs, got {n}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    rx, ry = average_ranks(x), average_ranks(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    rho = float(np.clip((dx @ dy) / np.sqrt((dx @ dx) * (dy @ dy)), -1.0, 1.0))
    t = t_statistic(rho, n)
    p = 0.0 if np.isinf(t) else float(2.0 * _st.t.sf(abs(t), n - 2))
    # a perfect correlation has p -> 0; keep it inside (0, 1] as a tiny positive number
    p = max(p, np.finfo(float).tiny)
    return CorrelationResult(num_bins=n, rho=rho, p_value=min(p, 1.0), sigma=abs(t))


def correlation_from_grid(grid: ViewpointGrid, min_train=5, min_test=5) -> CorrelationResult:
    mask = (grid.train >= min_train) & (grid.test >= min_test)
    n = int(mask.sum())
    if n < 3:
        raise UndefinedCorrelationError(f"only {n} bins pass min_train={min_train}, min_test={min_test}")
    return spearman(grid.train[mask], grid.mean_error()[mask])


def viewpoint_error_correlation(train_viewpoints, test_viewpoints, test_errors, min_train=5, min_test=5):
    """Spearman between per-bin train counts and mean test error.

    Returns:
        ``(CorrelationResult, ViewpointGrid)``.
    """
    grid = bin_viewpoints(train_viewpoints, test_viewpoints, test_errors)
    return correlation_from_grid(grid, min_train, min_test), grid


def export_contour(grid: ViewpointGrid) -> str:
    """CSV text with one row per populated bin, elevation-major."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONTOUR_HEADER)
    for b in grid.bins():
        w.writerow(
            [
                repr(b.azim_lo + AZIM_STEP / 2),
                repr(b.elev_lo + ELEV_STEP / 2),
                b.train_count,
                b.test_count,
                "" if b.mean_test_error_mm is None else repr(b.mean_test_error_mm),
            ]
        )
    return buf.getvalue()


def read_contour(text: str) -> ViewpointGrid:
    """Parse ``export_contour`` output back into a grid."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CONTOUR_HEADER:
        raise ValueError("not a contour CSV (header mismatch)")
    g = ViewpointGrid()
    for r in rows[1:]:
        ei, ai = ViewpointGrid.index([[float(r[1]), float(r[0])]])
        g.train[ei[0], ai[0]] = int(r[2])
        g.test[ei[0], ai[0]] = int(r[3])
        if r[4]:
            g.err_sum[ei[0], ai[0]] = float(r[4]) * int(r[3])
    return g
