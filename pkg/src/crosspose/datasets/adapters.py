"""Raw dataset readers -> canonical archives.

Each adapter reads one dataset's native annotation layout, remaps joints to
canonical-16, thins frames by motion, converts world coordinates with the
dataset's own camera convention, drops invalid samples and projects to 2D.

Native layouts read here:

H36M (``raw_root``)::

    cameras.json                 {"S1": {"54138969": {"R": 3x3, "t": [3] mm camera center,
                                          "f": [fx, fy], "c": [cx, cy], "res_w": int, "res_h": int}, ...}, ...}
    S<k>/<action>.npy            [F, 38, 3] world joints, mm

GPA (``raw_root``)::

    annotations.json             {"frames": [{"subject": int, "sequence": int|str, "frame": int,
                                   "split": "train"|"test", "joints_3d": [34][3] mm,
                                   "camera": {"rvec": [3], "t": [3] cm, "f": [fx, fy], "c": [cx, cy],
                                              "width": int, "height": int}}, ...]}

3DPW (``raw_root``)::

    sequenceFiles/{train,validation,test}/<seq>.pkl
        pickles with "sequence", "jointPositions" (per person [F, 72], m),
        "cam_poses" ([F, 4, 4], translation in m), "cam_intrinsics" (3x3),
        optional "campose_valid" (per person [F])

SURREAL (``raw_root``)::

    {train,val,test}/**/<clip>_info.mat
        "joints3D" [3, 24, F] (m), "camLoc" [3, 1] (m); the virtual camera is
        fixed at f=600, c=(160, 120), 320x240
"""

from __future__ import annotations

import glob
import json
import logging
import os
import pickle

import numpy as np

from .. import geometry
from ..errors import DataLoadError
from ..skeleton import BONES_16, bone_lengths, load_remap, remap
from .archive import DatasetArchive
from .filtering import DEFAULT_THRESHOLD_MM, filter_invalid_arrays, sample_frame_indices
from .pose import build_dataset_archive, world_to_camera_native

log = logging.getLogger(__name__)

H36M_TRAIN_SUBJECTS = (1, 5, 6, 7, 8)
H36M_TEST_SUBJECTS = (9, 11)

GPA_BONE_RANGE_MM = (50.0, 600.0)

SURREAL_INTRINSICS = (600.0, 600.0, 160.0, 120.0, 320, 240)


def _q(x):
    return np.asarray(x, dtype=np.float32).astype(np.float64)


class _Collector:
    """Accumulates per-sequence blocks and the filter report."""

    def __init__(self, convention):
        self.convention = convention
        self.blocks = []
        self.filter_counts = {}
        self.total = 0
        self.dropped = 0

    def add(self, world16, rvec, t, intr, split, subject, action, sequence, camera, frames):
        """``world16`` is ``[n, 16, 3]`` mm; camera params per row or shared."""
        world16 = _q(world16)
        n = len(world16)
        rvec = _q(np.broadcast_to(rvec, (n, 3)))
        t = _q(np.broadcast_to(t, (n, 3)))
        intr = _q(np.broadcast_to(intr, (n, 6)))
        cam = np.full((n, 16, 3), np.nan)
        for i in range(n):
            # non-finite rows stay NaN so the filter counts them
            if np.all(np.isfinite(world16[i])):
                cam[i] = world_to_camera_native(self.convention, world16[i], rvec[i], t[i])
        keep, report = filter_invalid_arrays(cam)
        self.total += report.total
        self.dropped += report.dropped
        for k, v in report.counts.items():
            self.filter_counts[k] = self.filter_counts.get(k, 0) + v
        if not keep.any():
            return
        cam, world16, rvec, t, intr = cam[keep], world16[keep], rvec[keep], t[keep], intr[keep]
        kp = np.stack([geometry.project_points(c, *i[:4]) for c, i in zip(cam, intr)])
        self.blocks.append(
            {
                "keypoints_2d": kp,
                "joints_3d_cam": cam,
                "joints_3d_world": world16,
                "intrinsics": intr,
                "cam_rvec": rvec,
                "cam_t": t,
                "subject": subject,
                "action": action,
                "sequence": sequence,
                "camera": camera,
                "frame": np.asarray(frames)[keep],
                "split": split,
            }
        )

    def filter_report(self):
        return {
            "total": self.total,
            "dropped": self.dropped,
            "fraction": self.dropped / self.total if self.total else 0.0,
            "counts": self.filter_counts,
        }


def _require_dir(raw_root):
    if not os.path.isdir(raw_root):
        raise DataLoadError("raw dataset directory not found", raw_root)
    if not os.listdir(raw_root):
        raise DataLoadError("raw dataset directory is empty", raw_root)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataLoadError("missing annotation file", path) from None
    except ValueError as exc:
        raise DataLoadError(f"unparseable annotation file ({exc})", path) from None


def adapt_h36m(raw_root, threshold_mm=DEFAULT_THRESHOLD_MM) -> DatasetArchive:
    _require_dir(raw_root)
    cameras = _load_json(os.path.join(raw_root, "cameras.json"))
    table = load_remap("h36m")
    col = _Collector("h36m")
    actions = []
    found = False
    for subject in H36M_TRAIN_SUBJECTS + H36M_TEST_SUBJECTS:
        sdir = os.path.join(raw_root, f"S{subject}")
        if not os.path.isdir(sdir):
            continue
        found = True
        cams = cameras.get(f"S{subject}")
        if not cams:
            raise DataLoadError(f"no cameras for S{subject} in cameras.json", os.path.join(raw_root, "cameras.json"))
        split = "train" if subject in H36M_TRAIN_SUBJECTS else "test"
        files = sorted(glob.glob(os.path.join(sdir, "*.npy")))
        if not files:
            raise DataLoadError(f"no action files for S{subject}", sdir)
        for path in files:
            action = os.path.splitext(os.path.basename(path))[0]
            if action not in actions:
                actions.append(action)
            world = remap(_load_npy(path), table)
            frames = sample_frame_indices(world, threshold_mm)
            for ci, cam_name in enumerate(sorted(cams)):
                c = cams[cam_name]
                try:
                    rvec = geometry.rotation_to_rvec(np.asarray(c["R"], dtype=np.float64))
                    intr = [c["f"][0], c["f"][1], c["c"][0], c["c"][1], c["res_w"], c["res_h"]]
                    t = np.asarray(c["t"], dtype=np.float64).reshape(3)
                except (KeyError, TypeError, ValueError) as exc:
                    raise DataLoadError(f"bad camera entry S{subject}/{cam_name} ({exc})", os.path.join(raw_root, "cameras.json")) from None
                col.add(world[frames], rvec, t, intr, split, subject, actions.index(action), actions.index(action), ci, frames)
    if not found:
        raise DataLoadError("no H36M subject directories (S1, S5, ..., S11) found", raw_root)
    return _finish("h36m", col, threshold_mm, {"action": actions})


def _load_npy(path):
    try:
        arr = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataLoadError(f"unreadable array ({exc})", path) from None
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataLoadError(f"expected [F, J, 3] joints, got {arr.shape}", path)
    return arr


def adapt_gpa(raw_root, threshold_mm=DEFAULT_THRESHOLD_MM) -> DatasetArchive:
    _require_dir(raw_root)
    path = os.path.join(raw_root, "annotations.json")
    doc = _load_json(path)
    frames = doc.get("frames") if isinstance(doc, dict) else None
    if not frames:
        raise DataLoadError("annotations.json has no frames", path)
    table = load_remap("gpa")
    groups: dict = {}
    for rec in frames:
        groups.setdefault((int(rec["subject"]), str(rec["sequence"])), []).append(rec)
    seq_names = sorted({k[1] for k in groups})
    col = _Collector("gpa")
    for (subject, seq), recs in sorted(groups.items()):
        recs.sort(key=lambda r: int(r["frame"]))
        try:
            world = remap(np.asarray([r["joints_3d"] for r in recs], dtype=np.float64), table)
            rvec = np.asarray([r["camera"]["rvec"] for r in recs], dtype=np.float64)
            t_cm = np.asarray([r["camera"]["t"] for r in recs], dtype=np.float64)
            intr = np.asarray(
                [[*r["camera"]["f"], *r["camera"]["c"], r["camera"]["width"], r["camera"]["height"]] for r in recs],
                dtype=np.float64,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataLoadError(f"malformed GPA record for subject {subject} sequence {seq} ({exc})", path) from None
        _check_gpa_units(world, path)
        keep = sample_frame_indices(world, threshold_mm)
        split = recs[0].get("split", "test")
        fidx = np.asarray([int(r["frame"]) for r in recs])
        col.add(world[keep], rvec[keep], t_cm[keep], intr[keep], split, subject, 0, seq_names.index(seq), 0, fidx[keep])
    return _finish("gpa", col, threshold_mm, {"sequence": seq_names})


def _check_gpa_units(world16, path):
    mean_bone = float(np.mean(bone_lengths(world16, BONES_16)))
    lo, hi = GPA_BONE_RANGE_MM
    if not lo <= mean_bone <= hi:
        raise DataLoadError(
            f"mean bone length {mean_bone:.1f} mm outside [{lo:.0f}, {hi:.0f}] mm; check the declared units", path
        )


def adapt_3dpw(raw_root, threshold_mm=DEFAULT_THRESHOLD_MM) -> DatasetArchive:
    _require_dir(raw_root)
    base = os.path.join(raw_root, "sequenceFiles")
    if not os.path.isdir(base):
        raise DataLoadError("missing sequenceFiles directory", base)
    table = load_remap("3dpw")
    col = _Collector("3dpw")
    seq_names = []
    for split_dir, split in (("train", "train"), ("test", "test")):
        for path in sorted(glob.glob(os.path.join(base, split_dir, "*.pkl"))):
            seq = _load_pickle(path)
            name = str(seq.get("sequence", os.path.splitext(os.path.basename(path))[0]))
            seq_names.append(name)
            q = len(seq_names) - 1
            try:
                poses = np.asarray(seq["cam_poses"], dtype=np.float64)
                K = np.asarray(seq["cam_intrinsics"], dtype=np.float64)
                people = seq["jointPositions"]
            except KeyError as exc:
                raise DataLoadError(f"3DPW sequence missing key {exc}", path) from None
            intr = [K[0, 0], K[1, 1], K[0, 2], K[1, 2], round(2 * K[0, 2]), round(2 * K[1, 2])]
            valid_all = seq.get("campose_valid")
            # each person in a sequence is an independent stream
            for person, jp in enumerate(people):
                world = remap(np.asarray(jp, dtype=np.float64).reshape(len(jp), 24, 3) * geometry.M_TO_MM, table)
                valid = np.ones(len(world), dtype=bool) if valid_all is None else np.asarray(valid_all[person], dtype=bool)
                idx = np.flatnonzero(valid)
                keep = idx[sample_frame_indices(world[idx], threshold_mm)]
                E = poses[keep]
                rvec = np.stack([geometry.rotation_to_rvec(e[:3, :3]) for e in E]) if len(E) else np.zeros((0, 3))
                t = E[:, :3, 3] * geometry.M_TO_MM
                col.add(world[keep], rvec, t, intr, split, person, 0, q, 0, keep)
    if not seq_names:
        raise DataLoadError("no 3DPW sequence pickles under sequenceFiles/{train,test}", base)
    return _finish("3dpw", col, threshold_mm, {"sequence": seq_names})


def _load_pickle(path):
    # the official sequence files are Python 2 pickles
    try:
        with open(path, "rb") as fh:
            return pickle.load(fh, encoding="latin1")
    except (OSError, pickle.UnpicklingError, EOFError) as exc:
        raise DataLoadError(f"unreadable sequence file ({exc})", path) from None


def adapt_surreal(raw_root, threshold_mm=DEFAULT_THRESHOLD_MM) -> DatasetArchive:
    from scipy.io import loadmat

    _require_dir(raw_root)
    table = load_remap("surreal")
    col = _Collector("surreal")
    rvec = geometry.rotation_to_rvec(geometry.SURREAL_ROTATION)
    clips = []
    for split_dir, split in (("train", "train"), ("test", "test")):
        for path in sorted(glob.glob(os.path.join(raw_root, split_dir, "**", "*_info.mat"), recursive=True)):
            try:
                mat = loadmat(path)
                joints = np.asarray(mat["joints3D"], dtype=np.float64)
                cam_loc = np.asarray(mat["camLoc"], dtype=np.float64).reshape(3) * geometry.M_TO_MM
            except KeyError as exc:
                raise DataLoadError(f"SURREAL clip missing key {exc}", path) from None
            except (OSError, ValueError) as exc:
                raise DataLoadError(f"unreadable clip ({exc})", path) from None
            if joints.ndim == 2:
                joints = joints[:, :, None]
            clips.append(os.path.relpath(path, raw_root))
            q = len(clips) - 1
            world_raw = np.transpose(joints, (2, 1, 0)) * geometry.M_TO_MM
            world = np.full((len(world_raw), 16, 3), np.nan)
            for i, w in enumerate(world_raw):
                if np.all(np.isfinite(w)):
                    world[i] = remap(w, table)
            finite = np.all(np.isfinite(world), axis=(1, 2))
            fidx = np.arange(len(world))
            # corrupted frames go straight to the filter so they are counted
            keep = fidx[finite][sample_frame_indices(world[finite], threshold_mm)]
            keep = np.sort(np.concatenate([keep, fidx[~finite]]))
            col.add(world[keep], rvec, cam_loc, SURREAL_INTRINSICS, split, 0, 0, q, 0, keep)
    if not clips:
        raise DataLoadError("no SURREAL *_info.mat clips under train/ or test/", raw_root)
    if col.dropped:
        log.info("SURREAL: excluded %d of %d samples (%.2f%%)", col.dropped, col.total, 100 * col.dropped / col.total)
    return _finish("surreal", col, threshold_mm, {"sequence": clips})


def _finish(dataset, col: _Collector, threshold_mm, vocab):
    meta = {"sample_frames_threshold_mm": threshold_mm, "filter": col.filter_report()}
    return build_dataset_archive(dataset, col.convention, col.blocks, vocab=vocab, metadata=meta)


ADAPTERS = {"h36m": adapt_h36m, "gpa": adapt_gpa, "3dpw": adapt_3dpw, "surreal": adapt_surreal}
