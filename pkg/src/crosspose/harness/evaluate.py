"""Run orchestration: load, normalize, predict, score, analyze."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import analytics, metrics, normalize
from ..datasets.archive import DTYPE, read_archive
from ..datasets.pose import (
    INTRINSICS,
    JOINTS_3D_CAM,
    KEYPOINTS_2D,
    META,
    META_COLUMNS,
    VIEWPOINT,
    archive_joint_set,
    split_rows,
)
from ..errors import CrossPoseError, DataError, StageError
from ..runner.predictions import collect_predictions, oracle_with_noise
from ..runner.session import ExternalSession, temporal_windows
from ..skeleton import CANONICAL_16, hip_center, joint_set, select_joint_subset
from .config import EvalConfig
from .report import LeaderboardRow, emit_report, write_files

log = logging.getLogger(__name__)

STAGES = ("load", "normalize", "predict", "metric", "analytics", "write")
EXECUTION_KEYS = ("num_workers", "output_dir")


@dataclass
class TestSplit:
    dataset: str
    sample_ids: list
    keypoints_2d: np.ndarray  # [N, J, 2] px
    joints_3d: np.ndarray  # [N, J, 3] mm, hip-centered
    image_size: np.ndarray  # [N, 2]
    viewpoints: np.ndarray  # [N, 2], NaN where undefined
    meta: np.ndarray  # [N, len(META_COLUMNS)]


@dataclass
class DatasetResult:
    dataset: str
    result: metrics.ProtocolResult
    sample_ids: list
    viewpoints: np.ndarray
    analytics: dict | None = None
    contour_csv: str | None = None


@dataclass
class MetricsReport:
    model_name: str
    variant: str
    config: dict
    datasets: dict = field(default_factory=dict)
    joint_names: tuple = ()

    def rows(self) -> list[LeaderboardRow]:
        out = []
        for proto, attr, pj in (
            ("mpjpe", "mpjpe_mm", "per_joint_mpjpe_mm"),
            ("pa_mpjpe", "pa_mpjpe_mm", "per_joint_pa_mpjpe_mm"),
        ):
            per = {d: getattr(r.result, attr) for d, r in self.datasets.items()}
            joint = np.mean([getattr(r.result, pj) for r in self.datasets.values()], axis=0) if self.datasets else []
            out.append(LeaderboardRow(self.model_name, per, proto, self.variant, [float(v) for v in joint]))
        return out

    def bundles(self) -> list[dict]:
        return [r.to_bundle() for r in self.rows()]

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "variant": self.variant,
            "config": self.config,
            "joint_names": list(self.joint_names),
            "bundles": self.bundles(),
            "datasets": {
                d: {"result": r.result.as_dict(), "analytics": r.analytics} for d, r in sorted(self.datasets.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _stage(name):
    def wrap(fn):
        def inner(*a, **k):
            try:
                return fn(*a, **k)
            except StageError:
                raise
            except CrossPoseError as exc:
                raise StageError(name, exc) from exc
            except (ValueError, KeyError, OSError) as exc:
                raise StageError(name, exc) from exc

        return inner

    return wrap


@_stage("load")
def load_test_split(path, dataset, js) -> TestSplit:
    arc = read_archive(path)
    src_js = archive_joint_set(arc)
    rows = split_rows(arc, "test")
    ids_all = arc.sample_ids
    # fixed order regardless of how the archive was written
    rows = np.array(sorted(rows, key=lambda i: ids_all[i]), dtype=np.int64)
    ids = [ids_all[i] for i in rows]
    gt = arc[JOINTS_3D_CAM][rows].astype(np.float64)
    kp = arc[KEYPOINTS_2D][rows].astype(np.float64)
    if js.count != src_js.count:
        if src_js is not CANONICAL_16 and src_js.count != 16:
            raise DataError(f"cannot select {js.name} from an archive stored as {src_js.name}")
        gt = select_joint_subset(gt, js)
        kp = select_joint_subset(kp, js)
    vp = arc[VIEWPOINT][rows].astype(np.float64) if VIEWPOINT in arc else np.full((len(rows), 2), np.nan)
    if len(gt):
        # score at archive precision so a ground-truth prediction file reproduces it exactly
        gt = hip_center(gt).astype(DTYPE).astype(np.float64)
    return TestSplit(
        dataset=dataset,
        sample_ids=ids,
        keypoints_2d=kp,
        joints_3d=gt,
        image_size=arc[INTRINSICS][rows][:, 4:6].astype(np.float64),
        viewpoints=vp,
        meta=arc[META][rows].astype(np.int64),
    )


def _stats_cache_path(archive_path, split, js, kind):
    return f"{archive_path}.{split}.{js.name}.{kind}.stats.json"


def dataset_stats(archive_path, split, js, kind) -> normalize.ZScoreStats:
    """2D or 3D z-score stats for one split, cached next to the archive."""
    cache = _stats_cache_path(archive_path, split, js, kind)
    if os.path.exists(cache) and os.path.getmtime(cache) >= os.path.getmtime(archive_path):
        try:
            return normalize.ZScoreStats.load(cache)
        except (OSError, ValueError, KeyError):
            pass
    arc = read_archive(archive_path)
    rows = split_rows(arc, split)
    X = arc[KEYPOINTS_2D if kind == "2d" else JOINTS_3D_CAM][rows].astype(np.float64)
    if js.count != archive_joint_set(arc).count:
        X = select_joint_subset(X, js)
    if kind == "3d":
        X = hip_center(X)
    stats = normalize.compute_stats([X], dataset=arc.manifest.get("dataset", ""), joint_set=js.name, batched=True)
    try:
        stats.save(cache)
    except OSError:
        log.info("stats cache not writable: %s", cache)
    return stats


@_stage("normalize")
def model_inputs(cfg: EvalConfig, split: TestSplit, dataset_path, js):
    """2D inputs as the model expects them and the 3D output de-normalizer."""
    if not cfg.trained_on_normalized_data:
        return normalize.screen_normalize_batch(split.keypoints_2d, split.image_size), None
    if cfg.stats_source == "test_dataset":
        src, src_split = dataset_path, "test"
    else:
        src, src_split = cfg.resolve(cfg.train_archive), "train"
    if cfg.normalize_2d:
        x = normalize.zscore(split.keypoints_2d, dataset_stats(src, src_split, js, "2d"))
    else:
        x = normalize.screen_normalize_batch(split.keypoints_2d, split.image_size)
    s3 = dataset_stats(src, src_split, js, "3d") if cfg.normalize_3d else None
    return x, s3


def _sequence_windows(inputs, meta, num_frames):
    """Centered windows within each (subject, action, sequence, camera) stream."""
    if num_frames == 1:
        return inputs[:, None]
    out = np.empty((len(inputs), num_frames) + inputs.shape[1:])
    keys = [tuple(r) for r in meta[:, :4].tolist()]
    groups = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)
    frame = meta[:, META_COLUMNS.index("frame")]
    for idx in groups.values():
        idx = np.array(sorted(idx, key=lambda i: frame[i]))
        out[idx] = temporal_windows(inputs[idx], num_frames)
    return out


def _chunks(n, k):
    bounds = np.linspace(0, n, min(k, max(n, 1)) + 1).astype(int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


@_stage("predict")
def predict(cfg: EvalConfig, split: TestSplit, dataset_path, js, dataset_index):
    src = cfg.prediction_source
    kind = src["type"]
    if kind == "file":
        path = src["path"]
        if isinstance(path, dict):
            if split.dataset not in path:
                raise DataError(f"no prediction file configured for dataset {split.dataset}")
            path = path[split.dataset]
        return collect_predictions(cfg.resolve(path), split.sample_ids, js)
    if kind == "oracle":
        seed = int(src.get("seed", cfg.seed)) + dataset_index
        return oracle_with_noise(split.joints_3d, float(src.get("sigma_mm", 0.0)), seed)
    x, s3 = model_inputs(cfg, split, dataset_path, js)
    windows = _sequence_windows(x, split.meta, cfg.num_frames)
    out = np.empty(split.joints_3d.shape)

    def run(bounds):
        a, b = bounds
        with ExternalSession(
            src["command"],
            num_joints=js.count,
            video_mode=cfg.video_mode,
            num_frames=cfg.num_frames,
            trained_on_normalized_data=cfg.trained_on_normalized_data,
            timeout=float(src.get("timeout_s", 30.0)),
            cwd=cfg.base_dir,
        ) as s:
            out[a:b] = s.infer_many(windows[a:b])

    chunks = _chunks(len(windows), cfg.num_workers)
    if len(chunks) <= 1:
        for c in chunks:
            run(c)
    else:
        with ThreadPoolExecutor(len(chunks)) as ex:
            list(ex.map(run, chunks))
    if s3 is not None:
        out = normalize.zscore_inverse(out, s3)
    # models emit root-relative poses by convention; pin the root exactly
    return hip_center(out) if len(out) else out


@_stage("metric")
def score(pred, gt, cfg: EvalConfig):
    metrics.check_centered(pred, 0, "prediction")
    metrics.check_centered(gt, 0, "ground truth")
    chunks = _chunks(len(gt), cfg.num_workers)

    def run(bounds):
        a, b = bounds
        return metrics.joint_errors(pred[a:b], gt[a:b]), metrics.pa_joint_errors(pred[a:b], gt[a:b], cfg.with_scale)

    if len(chunks) > 1:
        with ThreadPoolExecutor(len(chunks)) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    J = gt.shape[1]
    e1 = np.concatenate([p[0] for p in parts]) if parts else np.zeros((0, J))
    e2 = np.concatenate([p[1] for p in parts]) if parts else np.zeros((0, J))
    return metrics.result_from_errors(e1, e2)


@_stage("analytics")
def viewpoint_analytics(cfg: EvalConfig, split: TestSplit, result):
    if not cfg.train_archive:
        return None, None
    arc = read_archive(cfg.resolve(cfg.train_archive))
    train_vp = arc[VIEWPOINT][split_rows(arc, "train")].astype(np.float64)
    grid = analytics.bin_viewpoints(train_vp, split.viewpoints, result.per_sample["mpjpe_mm"])
    contour = analytics.export_contour(grid)
    try:
        corr = analytics.correlation_from_grid(grid, cfg.min_train, cfg.min_test)
    except CrossPoseError as exc:
        return {"error": str(exc), "min_train": cfg.min_train, "min_test": cfg.min_test}, contour
    return dict(corr.as_dict(), min_train=cfg.min_train, min_test=cfg.min_test), contour


def sample_errors_csv(dr: DatasetResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "elevation_deg", "azimuth_deg", "mpjpe_mm", "pa_mpjpe_mm"])
    ps = dr.result.per_sample
    for i, sid in enumerate(dr.sample_ids):
        e, a = dr.viewpoints[i]
        w.writerow([sid, repr(float(e)), repr(float(a)), repr(float(ps["mpjpe_mm"][i])), repr(float(ps["pa_mpjpe_mm"][i]))])
    return buf.getvalue()


def read_sample_errors(path):
    """Parse ``errors_<dataset>.csv`` -> ``(ids, viewpoints [N,2], mpjpe [N], pa_mpjpe [N])``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ids = [r["sample_id"] for r in rows]
    vp = np.array([[float(r["elevation_deg"]), float(r["azimuth_deg"])] for r in rows]).reshape(-1, 2)
    e1 = np.array([float(r["mpjpe_mm"]) for r in rows])
    e2 = np.array([float(r["pa_mpjpe_mm"]) for r in rows])
    return ids, vp, e1, e2


def run_evaluation(cfg: EvalConfig) -> MetricsReport:
    """Evaluate the configured prediction source on every configured dataset.

    Output is identical for any ``num_workers`` and any archive row order.

    Raises:
        StageError: Wraps the underlying error with its stage label.
    """
    js = joint_set(cfg.num_joints)
    # execution-only settings stay out of the report so it is identical across them
    echo = {k: v for k, v in cfg.to_dict().items() if k not in EXECUTION_KEYS}
    report = MetricsReport(cfg.model_name, cfg.variant, echo, joint_names=js.joint_names)
    for k, name in enumerate(sorted(cfg.datasets)):
        path = cfg.resolve(cfg.datasets[name])
        split = load_test_split(path, name, js)
        pred = predict(cfg, split, path, js, k)
        result = score(pred, split.joints_3d, cfg)
        ana, contour = viewpoint_analytics(cfg, split, result)
        report.datasets[name] = DatasetResult(name, result, split.sample_ids, split.viewpoints, ana, contour)
    if cfg.output_dir:
        write_outputs(report, cfg.resolve(cfg.output_dir))
    return report


@_stage("write")
def write_outputs(report: MetricsReport, out_dir):
    files = {"report.json": report.to_json()}
    for b in report.bundles():
        files[f"results_{b['protocol']}.json"] = json.dumps(b, indent=2, sort_keys=True) + "\n"
    for name, dr in report.datasets.items():
        files[f"errors_{name}.csv"] = sample_errors_csv(dr)
        if dr.contour_csv is not None:
            files[f"contour_{name}.csv"] = dr.contour_csv
    files.update(emit_report(report.rows(), "csv", joint_names=list(report.joint_names)))
    write_files(out_dir, files)
