"""Canonical joint sets, per-dataset joint remapping and hip-centering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import InvalidSampleError, RemapError, ShapeError

CANONICAL_16_NAMES = (
    "hip",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "spine",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
)

# Indices into canonical-16 that canonical-14 drops.
SPINE = 7
HEAD = 9

# Joint counts of the raw skeletons each adapter reads.
SOURCE_JOINT_COUNTS = {"h36m": 38, "gpa": 34, "3dpw": 24, "surreal": 24}


@dataclass(frozen=True)
class JointSet:
    name: str
    joint_names: tuple[str, ...]
    root_index: int = 0

    def __post_init__(self):
        if len(set(self.joint_names)) != len(self.joint_names):
            raise ValueError(f"duplicate joint names in {self.name}")
        if not 0 <= self.root_index < len(self.joint_names):
            raise ValueError(f"root_index {self.root_index} out of range for {self.name}")

    @property
    def count(self) -> int:
        return len(self.joint_names)

    def __len__(self):
        return len(self.joint_names)

    def index(self, joint_name: str) -> int:
        return self.joint_names.index(joint_name)


CANONICAL_16 = JointSet("canonical16", CANONICAL_16_NAMES)
CANONICAL_14 = JointSet(
    "canonical14",
    tuple(n for i, n in enumerate(CANONICAL_16_NAMES) if i not in (SPINE, HEAD)),
)
CANONICAL_14_FROM_16 = tuple(i for i in range(16) if i not in (SPINE, HEAD))


def joint_set(num_joints: int) -> JointSet:
    if num_joints == 16:
        return CANONICAL_16
    if num_joints == 14:
        return CANONICAL_14
    raise ValueError(f"no canonical joint set with {num_joints} joints")


def joint_set_by_name(name: str) -> JointSet:
    for js in (CANONICAL_16, CANONICAL_14):
        if js.name == name:
            return js
    raise ValueError(f"unknown joint set {name!r}")


# (parent, child) pairs over canonical-16, root outward.
BONES_16 = (
    (0, 1), (1, 2), (2, 3),
    (0, 4), (4, 5), (5, 6),
    (0, 7), (7, 8), (8, 9),
    (8, 10), (10, 11), (11, 12),
    (8, 13), (13, 14), (14, 15),
)  # fmt: skip

BONES_14 = (
    (0, 1), (1, 2), (2, 3),
    (0, 4), (4, 5), (5, 6),
    (0, 7),
    (7, 8), (8, 9), (9, 10),
    (7, 11), (11, 12), (12, 13),
)  # fmt: skip


def bones_for(js: JointSet):
    return BONES_16 if js.count == 16 else BONES_14


# Left/right counterpart pairs in canonical-16.
LIMB_PAIRS_16 = ((4, 1), (5, 2), (6, 3), (10, 13), (11, 14), (12, 15))


def bone_lengths(joints: np.ndarray, bones=BONES_16) -> np.ndarray:
    """Bone lengths along the last two axes, shape ``[..., n_bones]``."""
    joints = np.asarray(joints, dtype=np.float64)
    parents = np.array([b[0] for b in bones])
    children = np.array([b[1] for b in bones])
    return np.linalg.norm(joints[..., children, :] - joints[..., parents, :], axis=-1)


@dataclass(frozen=True)
class JointRemap:
    """Maps a dataset's raw joint layout onto a canonical set.

    ``mapping[k]`` is either an ``int`` (copy that source row) or a
    ``(a, b)`` tuple (midpoint of two source rows).
    """

    source_dataset: str
    mapping: tuple
    source_joint_count: int | None = None
    source_joint_names: tuple[str, ...] | None = None

    def __post_init__(self):
        count = self.source_joint_count
        for target, rule in enumerate(self.mapping):
            idx = rule if isinstance(rule, tuple) else (rule,)
            if isinstance(rule, tuple) and len(rule) != 2:
                raise RemapError(f"{self.source_dataset}: target {target} midpoint needs 2 indices")
            for i in idx:
                if not isinstance(i, (int, np.integer)) or i < 0 or (count is not None and i >= count):
                    raise RemapError(
                        f"{self.source_dataset}: target {target} references source joint {i}"
                        f" outside 0..{count - 1 if count else '?'}"
                    )

    @classmethod
    def identity(cls, n: int, name: str = "identity") -> "JointRemap":
        return cls(name, tuple(range(n)), n)

    @classmethod
    def from_dict(cls, doc: dict) -> "JointRemap":
        ds = doc["source_dataset"]
        entries = sorted(doc["mapping"], key=lambda e: e["target"])
        targets = [e["target"] for e in entries]
        if targets != list(range(len(entries))):
            raise RemapError(f"{ds}: every canonical index must be mapped exactly once, got {targets}")
        mapping = []
        for e in entries:
            if "midpoint" in e:
                mapping.append(tuple(int(i) for i in e["midpoint"]))
            elif "source" in e:
                mapping.append(int(e["source"]))
            else:
                raise RemapError(f"{ds}: target {e['target']} has neither source nor midpoint")
        names = doc.get("source_joint_names")
        count = SOURCE_JOINT_COUNTS.get(ds, len(names) if names else None)
        return cls(ds, tuple(mapping), count, tuple(names) if names else None)

    def to_dict(self) -> dict:
        out = []
        for t, rule in enumerate(self.mapping):
            if isinstance(rule, tuple):
                out.append({"target": t, "midpoint": list(rule)})
            else:
                out.append({"target": t, "source": int(rule)})
        return {"source_dataset": self.source_dataset, "mapping": out}


def load_remap(dataset: str) -> JointRemap:
    """Load the bundled ``<dataset>_to_canonical16.json`` table."""
    ref = resources.files("crosspose.data.remaps") / f"{dataset}_to_canonical16.json"
    try:
        doc = json.loads(ref.read_text())
    except FileNotFoundError:
        raise RemapError(f"no remap table shipped for dataset {dataset!r}") from None
    return JointRemap.from_dict(doc)


def remap(source_joints, remap: JointRemap, target: JointSet = CANONICAL_16) -> np.ndarray:
    """Reorder/synthesize joints into ``target`` order. Works on ``[..., S, d]``."""
    x = np.asarray(source_joints, dtype=np.float64)
    if len(remap.mapping) != target.count:
        raise RemapError(
            f"{remap.source_dataset} remap has {len(remap.mapping)} targets, {target.name} needs {target.count}"
        )
    if remap.source_joint_count is not None and x.shape[-2] != remap.source_joint_count:
        raise ShapeError(
            f"{remap.source_dataset} expects {remap.source_joint_count} source joints, got {x.shape[-2]}"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidSampleError("non-finite source joints")
    n_src = x.shape[-2]
    out = np.empty(x.shape[:-2] + (target.count, x.shape[-1]))
    for k, rule in enumerate(remap.mapping):
        idx = rule if isinstance(rule, tuple) else (rule,)
        if max(idx) >= n_src:
            raise RemapError(f"{remap.source_dataset}: source index {max(idx)} >= {n_src}")
        if isinstance(rule, tuple):
            out[..., k, :] = 0.5 * (x[..., rule[0], :] + x[..., rule[1], :])
        else:
            out[..., k, :] = x[..., rule, :]
    return out


def hip_center(joints, root_index: int = 0) -> np.ndarray:
    joints = np.asarray(joints, dtype=np.float64)
    if not np.all(np.isfinite(joints)):
        raise InvalidSampleError("non-finite joints")
    if not 0 <= root_index < joints.shape[-2]:
        raise ShapeError(f"root_index {root_index} out of range for {joints.shape[-2]} joints")
    out = joints - joints[..., root_index : root_index + 1, :]
    # x - x is exactly zero for finite x; set explicitly anyway for -0.0 hygiene
    out[..., root_index, :] = 0.0
    return out


def select_joint_subset(joints, target: JointSet = CANONICAL_14) -> np.ndarray:
    """Drop spine and head from canonical-16 rows (``[..., 16, d]``)."""
    joints = np.asarray(joints)
    if joints.ndim < 2 or joints.shape[-2] != CANONICAL_16.count:
        raise ShapeError(f"expected 16 canonical joints, got shape {joints.shape}")
    if target == CANONICAL_16:
        return joints.copy()
    if target != CANONICAL_14:
        raise ValueError(f"cannot select {target.name} from canonical16")
    return joints[..., list(CANONICAL_14_FROM_16), :]


def to_joint_set(joints, target: JointSet) -> np.ndarray:
    """Canonical-16 rows -> rows of ``target`` (copy when already 16)."""
    return select_joint_subset(joints, target)


def names_of(js: JointSet, indices: Sequence[int]) -> list[str]:
    return [js.joint_names[i] for i in indices]
