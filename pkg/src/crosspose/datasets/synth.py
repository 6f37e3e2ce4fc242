"""Deterministic synthetic pose datasets with dataset-like camera rigs.

Rig defaults mirror the published rig statistics of the four supported
datasets (camera distance/height in meters, focal length in pixels, image
size). Poses come from a 16-joint template whose bone directions are
perturbed inside per-limb cones, so bone lengths stay constant per subject.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .. import geometry
from ..errors import SynthSpecError
from ..skeleton import BONES_16, CANONICAL_16
from .archive import DatasetArchive
from .pose import JOINTS_3D_CAM, build_dataset_archive, world_to_camera_native

RIG_PRESETS = {
    "h36m": dict(distance_m=(5.2, 0.8), height_m=(1.6, 0.05), focal_px=(1146.8, 2.0), image_size=(1000, 1002)),
    "gpa": dict(distance_m=(5.1, 1.2), height_m=(1.0, 0.3), focal_px=(1172.4, 121.3), image_size=(1920, 1080)),
    "3dpw": dict(distance_m=(3.5, 0.7), height_m=(0.6, 0.8), focal_px=(1962.2, 1.5), image_size=(1920, 1080)),
    "surreal": dict(distance_m=(8.0, 1.0), height_m=(0.9, 0.1), focal_px=(600.0, 0.0), image_size=(320, 240)),
}

# Rest-pose bone lengths (mm) per canonical bone, in BONES_16 order.
REST_BONE_MM = (130.0, 450.0, 440.0, 130.0, 450.0, 440.0, 230.0, 250.0, 180.0, 170.0, 280.0, 250.0, 170.0, 280.0, 250.0)

# Body frame: +x toward the subject's left, +z up, facing -y.
REST_DIRS = np.array(
    [
        [-1, 0, 0], [0, 0, -1], [0, 0, -1],
        [1, 0, 0], [0, 0, -1], [0, 0, -1],
        [0, 0, 1], [0, 0, 1], [0, 0, 1],
        [1, 0, 0], [0, 0, -1], [0, 0, -1],
        [-1, 0, 0], [0, 0, -1], [0, 0, -1],
    ],
    dtype=np.float64,
)  # fmt: skip

# Max deviation (degrees) of each bone from its rest direction.
DEFAULT_LIMITS = {
    "pelvis": 10.0,
    "thigh": 45.0,
    "shin": 60.0,
    "spine": 20.0,
    "head": 30.0,
    "clavicle": 15.0,
    "upper_arm": 100.0,
    "forearm": 120.0,
}
_BONE_GROUP = (
    "pelvis", "thigh", "shin", "pelvis", "thigh", "shin",
    "spine", "spine", "head", "clavicle", "upper_arm", "forearm", "clavicle", "upper_arm", "forearm",
)  # fmt: skip


@dataclass
class RigSpec:
    convention: str = "h36m"
    kind: str = "random"  # "random" (distance/height sampled) or "ring" (fixed subject-relative elevation)
    distance_m: tuple = (5.2, 0.8)
    height_m: tuple = (1.6, 0.05)
    focal_px: tuple = (1146.8, 2.0)
    image_size: tuple = (1000, 1002)
    elevation_deg: float = 10.0
    azimuth_range_deg: tuple = (-180.0, 180.0)
    target_jitter_mm: float = 0.0

    @classmethod
    def preset(cls, dataset: str, **overrides) -> "RigSpec":
        base = dict(RIG_PRESETS[dataset])
        base["convention"] = dataset
        base.update(overrides)
        return cls(**base)


@dataclass
class SkeletonSpec:
    bone_scale_std: float = 0.06
    limits_deg: dict = field(default_factory=lambda: dict(DEFAULT_LIMITS))


@dataclass
class SynthSpec:
    count: int = 1000
    seed: int = 0
    dataset: str = "synthetic"
    rig: RigSpec = field(default_factory=RigSpec)
    skeleton: SkeletonSpec = field(default_factory=SkeletonSpec)
    subjects: tuple = (1, 5, 6, 7, 8, 9, 11)
    test_subjects: tuple = (9, 11)
    frames_per_sequence: int = 1

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise SynthSpecError(f"unknown synth spec keys: {sorted(unknown)}")
        rig = doc.pop("rig", {}) or {}
        skel = doc.pop("skeleton", {}) or {}
        try:
            if "preset" in rig:
                rig = dict(rig)
                name = rig.pop("preset")
                if name not in RIG_PRESETS:
                    raise SynthSpecError(f"unknown rig preset {name!r}")
                rig = asdict(RigSpec.preset(name, **rig))
            rig_spec = RigSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in rig.items()})
            skel_spec = SkeletonSpec(**skel)
        except TypeError as exc:
            raise SynthSpecError(str(exc)) from None
        for k in ("subjects", "test_subjects"):
            if k in doc:
                doc[k] = tuple(doc[k])
        return cls(rig=rig_spec, skeleton=skel_spec, **doc)

    def validate(self):
        r, s = self.rig, self.skeleton
        if self.count < 0:
            raise SynthSpecError("count must be >= 0")
        if self.frames_per_sequence < 1:
            raise SynthSpecError("frames_per_sequence must be >= 1")
        if r.convention not in geometry.CONVENTIONS:
            raise SynthSpecError(f"unknown convention {r.convention!r}")
        if r.kind not in ("random", "ring"):
            raise SynthSpecError(f"unknown rig kind {r.kind!r}")
        if r.distance_m[0] <= 0 or r.distance_m[1] < 0:
            raise SynthSpecError("camera distance mean must be > 0 and std >= 0")
        if r.focal_px[0] <= 0 or r.focal_px[1] < 0:
            raise SynthSpecError("focal mean must be > 0 and std >= 0")
        if min(r.image_size) <= 0:
            raise SynthSpecError("image size must be positive")
        if not -90 < r.elevation_deg < 90:
            raise SynthSpecError("ring elevation must be inside (-90, 90)")
        lo, hi = r.azimuth_range_deg
        if not -180 <= lo < hi <= 180:
            raise SynthSpecError(f"bad azimuth range {r.azimuth_range_deg}")
        missing = set(DEFAULT_LIMITS) - set(s.limits_deg)
        if missing:
            raise SynthSpecError(f"joint limits missing for {sorted(missing)}")
        for name, lim in s.limits_deg.items():
            if not 0 <= lim <= 180:
                raise SynthSpecError(f"joint limit {name}={lim} outside [0, 180] degrees")
        # a torso bent past horizontal makes the hip/neck frame meaningless
        if s.limits_deg["spine"] >= 80 or s.limits_deg["pelvis"] >= 80:
            raise SynthSpecError("spine/pelvis limits must stay below 80 degrees")
        if not 0 <= s.bone_scale_std < 0.5:
            raise SynthSpecError("bone_scale_std must be in [0, 0.5)")
        if not set(self.test_subjects) <= set(self.subjects):
            raise SynthSpecError("test_subjects must be a subset of subjects")
        if not self.subjects:
            raise SynthSpecError("need at least one subject")


def _cone_bases():
    a = REST_DIRS / np.linalg.norm(REST_DIRS, axis=1, keepdims=True)
    helper = np.where(np.abs(a[:, :1]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
    e1 = np.cross(a, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    return a, e1, np.cross(a, e1)


_AXES, _E1, _E2 = _cone_bases()


def _random_dirs(rng, limits):
    """One direction per bone, area-uniform on the cap of its limit cone."""
    cos_max = np.cos(np.radians([limits[g] for g in _BONE_GROUP]))
    u = rng.random((len(BONES_16), 2))
    cos_t = 1.0 - u[:, 0] * (1.0 - cos_max)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t**2))
    phi = 2 * np.pi * u[:, 1]
    return cos_t[:, None] * _AXES + sin_t[:, None] * (np.cos(phi)[:, None] * _E1 + np.sin(phi)[:, None] * _E2)


def _pose_from_dirs(dirs, bone_mm):
    P = np.zeros((CANONICAL_16.count, 3))
    for b, (p, c) in enumerate(BONES_16):
        P[c] = P[p] + bone_mm[b] * dirs[b]
    return P


def _yaw(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def _q(x):
    """Round to float32 (the archive's storage precision) and back."""
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def _native_params(convention, R_wc, C):
    if convention in ("h36m", "surreal"):
        return geometry.rotation_to_rvec(R_wc), C
    if convention == "gpa":
        return geometry.rotation_to_rvec(R_wc.T), (-R_wc @ C) / geometry.CM_TO_MM
    return geometry.rotation_to_rvec(R_wc), -R_wc @ C


def synth_generate(spec: SynthSpec) -> DatasetArchive:
    """Build a synthetic archive; identical specs give byte-identical archives."""
    spec.validate()
    rig = spec.rig
    rng = np.random.default_rng(spec.seed)
    subjects = list(spec.subjects)
    bone_scale = {s: np.clip(1.0 + spec.skeleton.bone_scale_std * rng.standard_normal(len(BONES_16)), 0.5, 1.5) for s in subjects}
    w, h = rig.image_size
    blocks = []
    n_seq = -(-spec.count // spec.frames_per_sequence) if spec.count else 0
    produced = 0
    for q in range(n_seq):
        subject = subjects[q % len(subjects)]
        bone_mm = np.asarray(REST_BONE_MM) * bone_scale[subject]
        n = min(spec.frames_per_sequence, spec.count - produced)
        produced += n
        d0 = _random_dirs(rng, spec.skeleton.limits_deg)
        d1 = _random_dirs(rng, spec.skeleton.limits_deg) if n > 1 else d0
        yaw = rng.uniform(-np.pi, np.pi)
        root = np.array([rng.uniform(-1000, 1000), rng.uniform(-1000, 1000), 0.0])
        rows = {k: [] for k in ("world", "rvec", "t", "intr", "vp")}
        for k in range(n):
            a = k / (n - 1) if n > 1 else 0.0
            dirs = (1 - a) * d0 + a * d1
            norms = np.linalg.norm(dirs, axis=1, keepdims=True)
            dirs = np.where(norms > 1e-3, dirs / np.maximum(norms, 1e-12), d0)
            body = _pose_from_dirs(dirs, bone_mm)
            hip_height = -body[:, 2].min() + 50.0
            world = _q(body @ _yaw(yaw).T + root + np.array([0, 0, hip_height]))
            r_ax, u_ax, f_ax = geometry.subject_frame(world)
            C, vp = _place_camera(rng, rig, world, r_ax, u_ax, f_ax)
            target = world[0] + rig.target_jitter_mm * rng.uniform(-1, 1, 3)
            R_wc = geometry.look_at(C, target)
            rvec, t = _native_params(rig.convention, R_wc, C)
            focal = max(1.0, rig.focal_px[0] + rig.focal_px[1] * rng.standard_normal())
            rows["world"].append(world)
            rows["rvec"].append(_q(rvec))
            rows["t"].append(_q(t))
            rows["intr"].append(_q([focal, focal, w / 2.0, h / 2.0, w, h]))
            rows["vp"].append(vp)
        world = np.stack(rows["world"])
        cam = np.stack([world_to_camera_native(rig.convention, X, rv, tt) for X, rv, tt in zip(world, rows["rvec"], rows["t"])])
        intr = np.stack(rows["intr"])
        if np.any(cam[..., 2] <= 0):
            raise SynthSpecError("rig places joints behind the camera; increase camera distance")
        kp = np.stack([geometry.project_points(c, *i[:4]) for c, i in zip(cam, intr)])
        blocks.append(
            {
                "keypoints_2d": kp,
                "joints_3d_cam": cam,
                "joints_3d_world": world,
                "intrinsics": intr,
                "cam_rvec": np.stack(rows["rvec"]),
                "cam_t": np.stack(rows["t"]),
                "viewpoint": np.stack(rows["vp"]),
                "subject": subject,
                "action": 0,
                "sequence": q,
                "camera": 0,
                "frame": np.arange(n),
                "split": "test" if subject in spec.test_subjects else "train",
            }
        )
    archive = build_dataset_archive(
        spec.dataset,
        rig.convention,
        blocks,
        metadata={"generator": "synth", "spec": _spec_dict(spec)},
    )
    assert archive[JOINTS_3D_CAM].shape[0] == spec.count
    return archive


def _place_camera(rng, rig, world, r_ax, u_ax, f_ax):
    hip = world[0]
    lo, hi = rig.azimuth_range_deg
    azim = np.radians(rng.uniform(lo, hi))
    dist = 1000.0 * max(1.5, rig.distance_m[0] + rig.distance_m[1] * rng.standard_normal())
    if rig.kind == "ring":
        elev = np.radians(rig.elevation_deg)
        d = np.cos(elev) * (np.cos(azim) * f_ax + np.sin(azim) * r_ax) + np.sin(elev) * u_ax
        C = hip + dist * d
        vp = (rig.elevation_deg, float(np.degrees(azim)) if np.degrees(azim) > -180 else 180.0)
        return C, vp
    height = 1000.0 * (rig.height_m[0] + rig.height_m[1] * rng.standard_normal())
    dz = height - hip[2]
    horiz = np.sqrt(max(dist**2 - dz**2, (0.3 * dist) ** 2))
    fh = np.array([f_ax[0], f_ax[1], 0.0])
    fh /= np.linalg.norm(fh)
    rh = np.array([-fh[1], fh[0], 0.0])  # horizontal left
    if rh @ r_ax < 0:
        rh = -rh
    C = hip + horiz * (np.cos(azim) * fh + np.sin(azim) * rh) + np.array([0, 0, dz])
    v = geometry.subject_viewpoint(world, C)
    return C, (v.elevation, v.azimuth)


def _spec_dict(spec: SynthSpec) -> dict:
    d = asdict(spec)
    return _jsonable(d)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x
