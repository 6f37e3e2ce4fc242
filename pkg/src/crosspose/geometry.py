"""Camera math: the four world->camera conventions, projection, viewpoints.

All lengths are millimeters. The GPA translation arrives in centimeters and
is converted here; nothing else in the package deals with other units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, DegenerateFrameError, InvalidSampleError, ShapeError

CONVENTIONS = ("h36m", "gpa", "3dpw", "surreal")

CM_TO_MM = 10.0
M_TO_MM = 1000.0


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray  # world -> camera, 3x3
    translation: np.ndarray  # mm, X_cam = R @ X + translation
    convention: str = "h36m"

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown camera convention {self.convention!r}")
        check_rotation(rot)

    @property
    def intrinsics(self) -> np.ndarray:
        """``[fx, fy, cx, cy, width, height]``"""
        return np.array([self.fx, self.fy, self.cx, self.cy, self.width, self.height], dtype=np.float64)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def position_world(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @classmethod
    def from_intrinsics(cls, intr, rotation, translation, convention="h36m"):
        fx, fy, cx, cy, w, h = (float(v) for v in intr)
        return cls(fx, fy, cx, cy, int(round(w)), int(round(h)), rotation, translation, convention)


@dataclass(frozen=True)
class ViewpointAngles:
    elevation: float  # degrees, [-90, 90]
    azimuth: float  # degrees, (-180, 180]

    def __post_init__(self):
        if not (np.isfinite(self.elevation) and np.isfinite(self.azimuth)):
            raise ValueError("viewpoint angles must be finite")
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError(f"elevation {self.elevation} outside [-90, 90]")
        if not -180.0 < self.azimuth <= 180.0:
            raise ValueError(f"azimuth {self.azimuth} outside (-180, 180]")


def check_rotation(R, tol=1e-6):
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ShapeError(f"rotation must be 3x3, got {R.shape}")
    if not np.allclose(R @ R.T, np.eye(3), atol=tol) or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation is not orthonormal with det +1")


def _cross(a, b):
    # np.cross has heavy per-call overhead for single 3-vectors
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidSampleError("non-finite input")


def rodrigues(rvec) -> np.ndarray:
    """Axis-angle vector (radians) to rotation matrix."""
    r = np.asarray(rvec, dtype=np.float64).reshape(3)
    _finite(r)
    theta = np.linalg.norm(r)
    if theta < 1e-12:
        # first-order term keeps tiny rotations accurate
        k = np.array([[0, -r[2], r[1]], [r[2], 0, -r[0]], [-r[1], r[0], 0]])
        return np.eye(3) + k
    k = r / theta
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def rotation_to_rvec(R) -> np.ndarray:
    """Inverse of ``rodrigues`` (principal angle in [0, pi])."""
    R = np.asarray(R, dtype=np.float64)
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if theta < 1e-6:
        return w
    if np.pi - theta > 1e-2:
        return w * (theta / np.sin(theta))
    # near a half-turn sin(theta) vanishes; read k k^T off the symmetric part
    B = ((R + R.T) / 2.0 - cos_t * np.eye(3)) / (1.0 - cos_t)
    col = int(np.argmax(np.diag(B)))
    axis = B[:, col] / np.linalg.norm(B[:, col])
    if axis @ w < 0:
        axis = -axis
    return axis * theta


def world_to_camera_h36m(X, R, t) -> np.ndarray:
    """``(R (X^T - t))^T``; ``t`` is the camera center in world mm."""
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(3)
    _finite(X, R, t)
    return (R @ (X.T - t[:, None])).T if X.ndim == 2 else (X - t) @ R.T


def world_to_camera_gpa(X, rvec, t_cm) -> np.ndarray:
    """``R^T X^T + t`` with ``R`` from a rotation vector and ``t`` given in cm."""
    X = np.asarray(X, dtype=np.float64)
    t_mm = np.asarray(t_cm, dtype=np.float64).reshape(3) * CM_TO_MM
    R = rodrigues(rvec)
    _finite(X, t_mm)
    return X @ R + t_mm  # row form of R^T x


def world_to_camera_3dpw(X, E) -> np.ndarray:
    """Apply a 4x4 homogeneous extrinsic to row points."""
    X = np.asarray(X, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    if E.shape != (4, 4):
        raise ShapeError(f"extrinsic must be 4x4, got {E.shape}")
    if not np.allclose(E[3], [0, 0, 0, 1], atol=1e-9):
        raise ShapeError(f"extrinsic bottom row must be (0,0,0,1), got {E[3]}")
    _finite(X, E)
    Xh = np.concatenate([X, np.ones(X.shape[:-1] + (1,))], axis=-1)
    return (Xh @ E.T)[..., :3]


def world_to_camera_surreal(X, R, cam_loc) -> np.ndarray:
    """SURREAL stores a camera location; the transform has the H36M form."""
    return world_to_camera_h36m(X, R, cam_loc)


# World (z up) -> CV camera for SURREAL's fixed virtual camera, which looks
# along world -x. The renderer's own camera matrix has det -1 (a mirrored
# Blender frame), so the proper rotation with the same optical axis is used.
SURREAL_ROTATION = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [-1.0, 0.0, 0.0]])


def project(Xcam, cam: CameraModel) -> np.ndarray:
    """Pinhole projection of camera-space points (``[..., 3]`` mm) to pixels."""
    return project_points(Xcam, cam.fx, cam.fy, cam.cx, cam.cy)


def project_points(Xcam, fx, fy, cx, cy) -> np.ndarray:
    X = np.asarray(Xcam, dtype=np.float64)
    _finite(X)
    z = X[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError(f"{int(np.sum(z <= 0))} point(s) at or behind the camera plane")
    u = fx * X[..., 0] / z + cx
    v = fy * X[..., 1] / z + cy
    return np.stack([u, v], axis=-1)


def subject_frame(pose, hip=0, left_hip=4, right_hip=1, neck=8, eps=1e-9):
    """Right-handed subject axes ``(r, u, f)``.

    ``r`` points from the right hip to the left hip, ``u`` is the component of
    hip->neck orthogonal to ``r``, ``f = r x u`` is the facing direction.
    """
    pose = np.asarray(pose, dtype=np.float64)
    _finite(pose)
    lateral = pose[left_hip] - pose[right_hip]
    up0 = pose[neck] - pose[hip]
    nl, nu = np.linalg.norm(lateral), np.linalg.norm(up0)
    if nl < eps or nu < eps:
        raise DegenerateFrameError("coincident hips or neck at hip")
    r = lateral / nl
    u0 = up0 / nu
    f = _cross(r, u0)
    nf = np.linalg.norm(f)
    if nf < 1e-6:
        raise DegenerateFrameError("hip line and spine are collinear")
    f /= nf
    u = _cross(f, r)
    return r, u, f


def viewpoint_from_direction(d, r, u, f) -> ViewpointAngles:
    d = np.asarray(d, dtype=np.float64)
    n = np.linalg.norm(d)
    if n == 0:
        raise DegenerateFrameError("camera coincides with hip")
    elev = np.degrees(np.arcsin(np.clip(d @ u / n, -1.0, 1.0)))
    azim = np.degrees(np.arctan2(d @ r, d @ f))
    if azim <= -180.0:
        azim = 180.0
    return ViewpointAngles(float(elev), float(azim))


def subject_viewpoint(pose_world, camera_position_world, hip=0, left_hip=4, right_hip=1, neck=8) -> ViewpointAngles:
    """Elevation/azimuth of the camera seen from the subject's hip.

    Works in any frame as long as pose and camera share it; for camera-space
    poses pass ``camera_position_world=(0, 0, 0)``. Azimuth is 0 straight in
    front and grows toward the subject's left-hip side.
    """
    pose = np.asarray(pose_world, dtype=np.float64)
    r, u, f = subject_frame(pose, hip, left_hip, right_hip, neck)
    d = np.asarray(camera_position_world, dtype=np.float64).reshape(3) - pose[hip]
    return viewpoint_from_direction(d, r, u, f)


def viewpoints_camera_space(joints_cam, hip=0, left_hip=4, right_hip=1, neck=8) -> np.ndarray:
    """Vectorized viewpoints for ``[N, J, 3]`` camera-space poses.

    Returns ``[N, 2]`` (elevation, azimuth) in degrees; rows whose subject frame
    is degenerate are NaN.
    """
    P = np.asarray(joints_cam, dtype=np.float64)
    lateral = P[:, left_hip] - P[:, right_hip]
    up0 = P[:, neck] - P[:, hip]
    nl = np.linalg.norm(lateral, axis=1)
    nu = np.linalg.norm(up0, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = lateral / nl[:, None]
        u0 = up0 / nu[:, None]
        f = np.cross(r, u0)
        nf = np.linalg.norm(f, axis=1)
        f = f / nf[:, None]
        u = np.cross(f, r)
        d = -P[:, hip]
        dn = np.linalg.norm(d, axis=1)
        elev = np.degrees(np.arcsin(np.clip(np.einsum("ij,ij->i", d, u) / dn, -1, 1)))
        azim = np.degrees(np.arctan2(np.einsum("ij,ij->i", d, r), np.einsum("ij,ij->i", d, f)))
    azim = np.where(azim <= -180.0, 180.0, azim)
    bad = (nl < 1e-9) | (nu < 1e-9) | ~(nf >= 1e-6) | (dn == 0) | ~np.isfinite(elev) | ~np.isfinite(azim)
    out = np.stack([elev, azim], axis=1)
    out[bad] = np.nan
    return out


def look_at(camera_center, target, world_up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World->camera rotation for a CV camera (x right, y down, z forward)."""
    c = np.asarray(camera_center, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - c
    z /= np.linalg.norm(z)
    up = np.asarray(world_up, dtype=np.float64)
    x = _cross(z, up)
    if np.linalg.norm(x) < 1e-8:
        x = _cross(z, np.array([1.0, 0.0, 0.0]))
    x /= np.linalg.norm(x)
    y = _cross(z, x)
    return np.stack([x, y, z])
