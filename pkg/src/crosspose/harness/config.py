"""YAML run configuration.

Every key is validated; unknown keys are errors. Keys and defaults:

=============================  ==============================================
model_type                     required; identifier of the prediction model
num_workers                    1
trained_on_normalized_data     false; true -> z-scored inputs/outputs
output_3d                      "camera_mm" (only supported value)
video_mode                     false
num_joints                     16 (14 or 16)
num_frames                     1 (must be 1 unless video_mode)
datasets                       required; {h36m|gpa|3dpw|surreal: archive path}
prediction_source              required; see ``SOURCE_TYPES``
with_scale                     true (similarity Procrustes)
stats_source                   "test_dataset" or "train_dataset"
train_archive                  null; needed for stats_source=train_dataset
                               and for viewpoint analytics
normalize_2d                   true (z-score 2D when trained_on_normalized_data)
normalize_3d                   true (inverse z-score 3D outputs likewise)
sample_frames_threshold_mm     40.0 (recorded; used by preprocess)
min_train, min_test            5, 5 (analytics bin filter)
model_name                     defaults to model_type
variant                        "retrained"; one of ``VARIANTS``
seed                           0
output_dir                     null; write results here when set
=============================  ==============================================
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field

import yaml

from ..errors import ConfigError
from ..geometry import CONVENTIONS

VARIANTS = ("optimized", "unoptimized", "retrained", "reported")
SOURCE_TYPES = ("file", "oracle", "external")
STATS_SOURCES = ("test_dataset", "train_dataset")
OUTPUT_3D = ("camera_mm",)


@dataclass
class EvalConfig:
    model_type: str
    datasets: dict
    prediction_source: dict
    num_workers: int = 1
    trained_on_normalized_data: bool = False
    output_3d: str = "camera_mm"
    video_mode: bool = False
    num_joints: int = 16
    num_frames: int = 1
    with_scale: bool = True
    stats_source: str = "test_dataset"
    train_archive: str | None = None
    normalize_2d: bool = True
    normalize_3d: bool = True
    sample_frames_threshold_mm: float = 40.0
    min_train: int = 5
    min_test: int = 5
    model_name: str | None = None
    variant: str = "retrained"
    seed: int = 0
    output_dir: str | None = None
    base_dir: str = field(default=".", repr=False, compare=False)

    def __post_init__(self):
        if self.model_name is None:
            self.model_name = self.model_type

    def resolve(self, path):
        """Paths in the config are relative to the config file."""
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self.base_dir, path))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


REQUIRED = ("model_type", "datasets", "prediction_source")
_FIELDS = {k for k in EvalConfig.__dataclass_fields__ if k != "base_dir"}

_TYPES = {
    "model_type": str,
    "num_workers": int,
    "trained_on_normalized_data": bool,
    "output_3d": str,
    "video_mode": bool,
    "num_joints": int,
    "num_frames": int,
    "datasets": dict,
    "prediction_source": dict,
    "with_scale": bool,
    "stats_source": str,
    "train_archive": (str, type(None)),
    "normalize_2d": bool,
    "normalize_3d": bool,
    "sample_frames_threshold_mm": (int, float),
    "min_train": int,
    "min_test": int,
    "model_name": (str, type(None)),
    "variant": str,
    "seed": int,
    "output_dir": (str, type(None)),
}


def _type_ok(value, want):
    wants = want if isinstance(want, tuple) else (want,)
    if isinstance(value, bool) and bool not in wants:
        return False  # YAML true is not an int here
    return isinstance(value, wants)


def _type_name(want):
    wants = want if isinstance(want, tuple) else (want,)
    return " or ".join("null" if w is type(None) else w.__name__ for w in wants)


def _key_lines(text):
    """Top-level key -> 1-based line, from the YAML node tree."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value if isinstance(k, yaml.ScalarNode)}


def parse_config_text(text, base_dir=".") -> EvalConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {exc}", line=mark.line + 1 if mark else None) from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a YAML mapping")
    lines = _key_lines(text)
    for key in doc:
        if key not in _FIELDS:
            raise ConfigError("unknown key", key=key, line=lines.get(key))
    for key in REQUIRED:
        if key not in doc:
            raise ConfigError("missing required key", key=key)
    for key, value in doc.items():
        if not _type_ok(value, _TYPES[key]):
            raise ConfigError(f"expected {_type_name(_TYPES[key])}, got {type(value).__name__}", key=key, line=lines.get(key))
    if "sample_frames_threshold_mm" in doc:
        doc["sample_frames_threshold_mm"] = float(doc["sample_frames_threshold_mm"])
    cfg = EvalConfig(**doc, base_dir=base_dir)
    _validate(cfg, lines)
    return cfg


def _validate(cfg: EvalConfig, lines):
    def bad(key, msg):
        raise ConfigError(msg, key=key, line=lines.get(key))

    if cfg.num_joints not in (14, 16):
        bad("num_joints", f"must be 14 or 16, got {cfg.num_joints}")
    if cfg.num_frames < 1:
        bad("num_frames", "must be >= 1")
    if cfg.num_frames > 1 and not cfg.video_mode:
        bad("num_frames", "num_frames > 1 requires video_mode: true")
    if cfg.num_workers < 1:
        bad("num_workers", "must be >= 1")
    if cfg.output_3d not in OUTPUT_3D:
        bad("output_3d", f"unsupported value {cfg.output_3d!r}; only 'camera_mm' is implemented")
    if cfg.stats_source not in STATS_SOURCES:
        bad("stats_source", f"must be one of {', '.join(STATS_SOURCES)}")
    if cfg.stats_source == "train_dataset" and cfg.trained_on_normalized_data and not cfg.train_archive:
        bad("train_archive", "stats_source: train_dataset needs train_archive")
    if cfg.variant not in VARIANTS:
        bad("variant", f"must be one of {', '.join(VARIANTS)}")
    if cfg.sample_frames_threshold_mm < 0:
        bad("sample_frames_threshold_mm", "must be >= 0")
    if cfg.min_train < 0 or cfg.min_test < 0:
        bad("min_train" if cfg.min_train < 0 else "min_test", "must be >= 0")
    if not cfg.datasets:
        bad("datasets", "at least one dataset is required")
    for name, path in cfg.datasets.items():
        if name not in CONVENTIONS:
            bad("datasets", f"unknown dataset {name!r}; expected one of {', '.join(CONVENTIONS)}")
        if not isinstance(path, str):
            bad("datasets", f"path for {name} must be a string")
    _validate_source(cfg.prediction_source, bad)


def _validate_source(src, bad):
    kind = src.get("type")
    if kind not in SOURCE_TYPES:
        bad("prediction_source", f"type must be one of {', '.join(SOURCE_TYPES)}, got {kind!r}")
    allowed = {
        "file": {"type", "path"},
        "oracle": {"type", "sigma_mm", "seed"},
        "external": {"type", "command", "timeout_s"},
    }[kind]
    extra = set(src) - allowed
    if extra:
        bad("prediction_source", f"unknown {kind} source field(s): {', '.join(sorted(extra))}")
    if kind == "file" and not isinstance(src.get("path"), (str, dict)):
        bad("prediction_source", "file source needs 'path' (string or per-dataset mapping)")
    if kind == "oracle":
        sigma = src.get("sigma_mm", 0.0)
        if isinstance(sigma, bool) or not isinstance(sigma, (int, float)) or sigma < 0:
            bad("prediction_source", "sigma_mm must be a number >= 0")
    if kind == "external":
        cmd = src.get("command")
        if not (isinstance(cmd, list) and cmd and all(isinstance(c, str) for c in cmd)):
            bad("prediction_source", "external source needs 'command' as a list of strings")
        t = src.get("timeout_s", 30.0)
        if isinstance(t, bool) or not isinstance(t, (int, float)) or t <= 0:
            bad("prediction_source", "timeout_s must be a positive number")


def parse_config(path) -> EvalConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, base_dir=os.path.dirname(os.path.abspath(path)))
