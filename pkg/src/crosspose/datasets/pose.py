"""Canonical per-sample records and their archive layout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import geometry
from ..geometry import CameraModel, ViewpointAngles
from ..skeleton import CANONICAL_16, JointSet, joint_set_by_name
from .archive import DatasetArchive, make_archive

META_COLUMNS = ("subject", "action", "sequence", "camera", "frame", "split")
SPLITS = ("train", "test")

# Per-sample tensors every dataset archive carries.
KEYPOINTS_2D = "keypoints_2d"
JOINTS_3D_CAM = "joints_3d_cam"
JOINTS_3D_WORLD = "joints_3d_world"
INTRINSICS = "intrinsics"  # fx, fy, cx, cy, width, height
CAM_RVEC = "cam_rvec"  # convention-native rotation, axis-angle
CAM_T = "cam_t"  # convention-native translation, native units (see camera_from_native)
VIEWPOINT = "viewpoint"  # elevation, azimuth in degrees; NaN when undefined
META = "meta"


def camera_from_native(convention, rvec, t):
    """Native camera parameters -> ``(R, T)`` with ``X_cam = R X + T`` in mm.

    * h36m / surreal: ``rvec`` encodes the world->camera rotation, ``t`` is the
      camera center in world mm.
    * gpa: ``rvec`` encodes ``R`` where ``X_cam = R^T X + t``; ``t`` in cm.
    * 3dpw: ``rvec``/``t`` are the rotation block and translation (mm) of the
      4x4 extrinsic.
    """
    R = geometry.rodrigues(rvec)
    t = np.asarray(t, dtype=np.float64).reshape(3)
    if convention in ("h36m", "surreal"):
        return R, -R @ t
    if convention == "gpa":
        return R.T, t * geometry.CM_TO_MM
    if convention == "3dpw":
        return R, t
    raise ValueError(f"unknown convention {convention!r}")


def extrinsic_matrix(rvec, t) -> np.ndarray:
    E = np.eye(4)
    E[:3, :3] = geometry.rodrigues(rvec)
    E[:3, 3] = np.asarray(t, dtype=np.float64).reshape(3)
    return E


def world_to_camera_native(convention, X, rvec, t) -> np.ndarray:
    """Dispatch to the convention's own formula (not through ``camera_from_native``)."""
    if convention == "h36m":
        return geometry.world_to_camera_h36m(X, geometry.rodrigues(rvec), t)
    if convention == "surreal":
        return geometry.world_to_camera_surreal(X, geometry.rodrigues(rvec), t)
    if convention == "gpa":
        return geometry.world_to_camera_gpa(X, rvec, t)
    if convention == "3dpw":
        return geometry.world_to_camera_3dpw(X, extrinsic_matrix(rvec, t))
    raise ValueError(f"unknown convention {convention!r}")


@dataclass
class CanonicalPose:
    keypoints_2d: np.ndarray
    joints_3d_cam: np.ndarray
    camera: CameraModel
    subject_id: int
    action_id: int
    sequence_id: int
    frame_index: int
    split: str
    camera_id: int = 0
    sample_id: str = ""
    viewpoint: ViewpointAngles | None = None
    hip_centered: bool = False
    joints_3d_world: np.ndarray | None = field(default=None, repr=False)

    def validate(self, js: JointSet = CANONICAL_16):
        if self.keypoints_2d.shape != (js.count, 2) or self.joints_3d_cam.shape != (js.count, 3):
            raise ValueError(f"sample {self.sample_id}: shapes do not match {js.name}")
        if not (np.all(np.isfinite(self.keypoints_2d)) and np.all(np.isfinite(self.joints_3d_cam))):
            raise ValueError(f"sample {self.sample_id}: non-finite coordinates")
        if not self.hip_centered and np.any(self.joints_3d_cam[:, 2] <= 0):
            raise ValueError(f"sample {self.sample_id}: joint behind camera")
        if self.split not in SPLITS:
            raise ValueError(f"sample {self.sample_id}: bad split {self.split!r}")


def make_sample_id(dataset, subject, action, sequence, camera, frame) -> str:
    return f"{dataset}/s{subject}/a{action}/q{sequence}/c{camera}/f{frame}"


def build_dataset_archive(
    dataset: str,
    convention: str,
    blocks: list[dict],
    joint_set: JointSet = CANONICAL_16,
    vocab: dict | None = None,
    metadata: dict | None = None,
) -> DatasetArchive:
    """Assemble an archive from per-sequence blocks.

    Each block holds ``[n, ...]`` arrays under the tensor keys above except
    ``meta``/``viewpoint``, which are derived here from ``subject``, ``action``,
    ``sequence``, ``camera``, ``frame`` (int arrays or scalars) and ``split``.
    """
    J = joint_set.count
    shapes = {KEYPOINTS_2D: (J, 2), JOINTS_3D_CAM: (J, 3), JOINTS_3D_WORLD: (J, 3), INTRINSICS: (6,), CAM_RVEC: (3,), CAM_T: (3,)}
    cols = {k: [] for k in shapes}
    meta_rows = []
    for b in blocks:
        n = len(b[JOINTS_3D_CAM])
        if n == 0:
            continue
        for k in cols:
            # per-block constants (one camera for a whole sequence) broadcast to n rows
            cols[k].append(np.broadcast_to(np.asarray(b[k], dtype=np.float64), (n,) + shapes[k]))
        split = SPLITS.index(b["split"])
        m = np.zeros((n, len(META_COLUMNS)))
        for j, c in enumerate(META_COLUMNS[:-1]):
            m[:, j] = np.broadcast_to(np.asarray(b[c]), (n,))
        m[:, -1] = split
        meta_rows.append(m)
    tensors = {k: (np.concatenate(v) if v else np.zeros((0,) + shapes[k])) for k, v in cols.items()}
    tensors[META] = np.concatenate(meta_rows) if meta_rows else np.zeros((0, len(META_COLUMNS)))
    used = [b for b in blocks if len(b[JOINTS_3D_CAM])]
    if used and all(VIEWPOINT in b for b in used):
        # generator-supplied, construction-exact viewpoints
        tensors[VIEWPOINT] = np.concatenate([np.asarray(b[VIEWPOINT], dtype=np.float64) for b in used])
    elif joint_set.count == 16 and len(tensors[META]):
        tensors[VIEWPOINT] = geometry.viewpoints_camera_space(tensors[JOINTS_3D_CAM])
    else:
        tensors[VIEWPOINT] = np.full((len(tensors[META]), 2), np.nan)
    meta = tensors[META].astype(np.int64)
    ids = [make_sample_id(dataset, *row[:5]) for row in meta.tolist()]
    manifest = {
        "kind": "dataset",
        "dataset": dataset,
        "convention": convention,
        "joint_set": joint_set.name,
        "units": {"joints_3d": "mm", "keypoints_2d": "px", "cam_t": _native_t_unit(convention)},
        "meta_columns": list(META_COLUMNS),
        "count": len(ids),
        "sample_ids": ids,
        "vocab": vocab or {},
        "metadata": metadata or {},
    }
    return make_archive(manifest, tensors)


def _native_t_unit(convention):
    return "cm" if convention == "gpa" else "mm"


def archive_joint_set(archive: DatasetArchive) -> JointSet:
    return joint_set_by_name(archive.manifest.get("joint_set", CANONICAL_16.name))


def split_rows(archive: DatasetArchive, split: str) -> np.ndarray:
    return np.flatnonzero(archive[META][:, META_COLUMNS.index("split")] == SPLITS.index(split))


def camera_at(archive: DatasetArchive, i: int) -> CameraModel:
    conv = archive.manifest["convention"]
    R, T = camera_from_native(conv, archive[CAM_RVEC][i], archive[CAM_T][i])
    return CameraModel.from_intrinsics(archive[INTRINSICS][i], R, T, conv)


def iter_samples(archive: DatasetArchive, split: str | None = None):
    """Yield ``CanonicalPose`` records (slow path, for inspection and tests)."""
    ids = archive.sample_ids
    meta = archive[META].astype(np.int64)
    rows = range(archive.count) if split is None else split_rows(archive, split)
    for i in rows:
        vp = archive[VIEWPOINT][i]
        yield CanonicalPose(
            keypoints_2d=archive[KEYPOINTS_2D][i].astype(np.float64),
            joints_3d_cam=archive[JOINTS_3D_CAM][i].astype(np.float64),
            camera=camera_at(archive, i),
            subject_id=int(meta[i, 0]),
            action_id=int(meta[i, 1]),
            sequence_id=int(meta[i, 2]),
            camera_id=int(meta[i, 3]),
            frame_index=int(meta[i, 4]),
            split=SPLITS[int(meta[i, 5])],
            sample_id=ids[i],
            viewpoint=None if np.any(np.isnan(vp)) else ViewpointAngles(float(vp[0]), float(vp[1])),
            joints_3d_world=archive[JOINTS_3D_WORLD][i].astype(np.float64) if JOINTS_3D_WORLD in archive else None,
        )
