"""Leaderboards, percentage annotations and report emission."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from ..errors import CrossPoseError, ValidationError

DATASET_ORDER = ("h36m", "gpa", "3dpw", "surreal")
DATASET_LABELS = {"h36m": "H36M", "gpa": "GPA", "3dpw": "3DPW", "surreal": "SURREAL"}
PROTOCOLS = ("mpjpe", "pa_mpjpe")
PROTOCOL_LABELS = {"mpjpe": "MPJPE", "pa_mpjpe": "PA-MPJPE"}
VARIANT_MARKERS = {"optimized": "†", "unoptimized": "⋄", "retrained": "•", "reported": "‡"}
FORMATS = ("csv", "json", "markdown")


class ReportError(CrossPoseError):
    """Unwritable destination or unusable results input."""

    exit_code = 2


@dataclass
class LeaderboardRow:
    model_name: str
    per_dataset: dict
    protocol: str = "mpjpe"
    variant: str = "retrained"
    per_joint: list = field(default_factory=list)

    @property
    def average(self) -> float:
        vals = [v for v in self.per_dataset.values() if v is not None]
        return sum(vals) / len(vals) if vals else float("nan")

    @property
    def label(self) -> str:
        marker = VARIANT_MARKERS.get(self.variant, "")
        return f"{self.model_name} {marker}".strip()

    def to_bundle(self) -> dict:
        return {
            "model": self.model_name,
            "variant": self.variant,
            "protocol": self.protocol,
            "per_dataset": dict(self.per_dataset),
            "per_joint": list(self.per_joint),
        }

    @classmethod
    def from_bundle(cls, b: dict) -> "LeaderboardRow":
        try:
            return cls(
                model_name=str(b["model"]),
                per_dataset={k: (None if v is None else float(v)) for k, v in b["per_dataset"].items()},
                protocol=b.get("protocol", "mpjpe"),
                variant=b.get("variant", "retrained"),
                per_joint=[float(v) for v in b.get("per_joint", [])],
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ValidationError(f"malformed results bundle ({exc!r})") from None


def build_leaderboard(rows) -> list[LeaderboardRow]:
    """Rows sorted by decreasing average error, ties by model name."""
    rows = [r if isinstance(r, LeaderboardRow) else LeaderboardRow.from_bundle(r) for r in rows]
    return sorted(rows, key=lambda r: (-r.average, r.model_name))


def round_half_away(x, places=1) -> Decimal:
    q = Decimal(1).scaleb(-places)
    return Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class Improvement:
    """Signed change relative to a baseline; positive means lower error."""

    percent: float
    direction: str  # "↓" improvement, "↑" degradation, "" unchanged

    @property
    def display(self) -> str:
        mag = abs(round_half_away(self.percent))
        return f"{self.direction} {mag}%".strip() if self.direction else f"{mag}%"


def percent_improvement(baseline_mm, value_mm) -> Improvement:
    """``100 * (baseline - value) / baseline`` with an arrow for its sign.

    Raises:
        ValidationError: ``baseline_mm`` is not positive.
    """
    if not baseline_mm > 0:
        raise ValidationError(f"baseline must be positive, got {baseline_mm}")
    pct = 100.0 * (baseline_mm - value_mm) / baseline_mm
    r = round_half_away(pct)
    direction = "↓" if r > 0 else "↑" if r < 0 else ""
    return Improvement(pct, direction)


def _datasets_in(rows):
    present = {k for r in rows for k in r.per_dataset}
    return [d for d in DATASET_ORDER if d in present] + sorted(present - set(DATASET_ORDER))


def _fmt(v):
    return "" if v is None else f"{v:.2f}"


def leaderboard_markdown(rows, protocol="mpjpe", baseline: LeaderboardRow | None = None, datasets=None) -> str:
    rows = build_leaderboard(rows)
    ds = datasets or (_datasets_in(rows) or list(DATASET_ORDER))
    head = ["Model"] + [DATASET_LABELS.get(d, d) for d in ds] + [f"Average ({PROTOCOL_LABELS.get(protocol, protocol)})"]
    out = ["| " + " | ".join(head) + " |", "|" + "|".join(["---"] + ["---:"] * (len(head) - 1)) + "|"]
    for r in rows:
        cells = [r.label]
        for d in ds:
            v = r.per_dataset.get(d)
            cell = _fmt(v)
            if baseline is not None and v is not None and baseline.per_dataset.get(d) and r is not baseline:
                cell += f" ({percent_improvement(baseline.per_dataset[d], v).display})"
            cells.append(cell)
        avg = r.average
        cell = _fmt(avg)
        if baseline is not None and r is not baseline:
            cell += f" ({percent_improvement(baseline.average, avg).display})"
        cells.append(cell)
        out.append("| " + " | ".join(cells) + " |")
    return "\n".join(out) + "\n"


def leaderboard_csv(rows, datasets=None) -> str:
    rows = build_leaderboard(rows)
    ds = datasets or (_datasets_in(rows) or list(DATASET_ORDER))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "variant", "protocol"] + list(ds) + ["average"])
    for r in rows:
        vals = [r.per_dataset.get(d) for d in ds]
        w.writerow([r.model_name, r.variant, r.protocol] + ["" if v is None else repr(v) for v in vals] + [repr(r.average)])
    return buf.getvalue()


def parse_leaderboard_csv(text) -> list[LeaderboardRow]:
    rows = list(csv.reader(io.StringIO(text)))
    head = rows[0]
    ds = head[3:-1]
    out = []
    for r in rows[1:]:
        per = {d: float(v) for d, v in zip(ds, r[3:-1]) if v != ""}
        out.append(LeaderboardRow(r[0], per, protocol=r[2], variant=r[1]))
    return out


def per_joint_csv(rows, joint_names) -> str:
    """One row per joint with each result's per-joint error (Fig. 6 style data)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    rows = [r for r in rows if r.per_joint]
    w.writerow(["joint"] + [f"{r.model_name}:{r.protocol}" for r in rows])
    for j, name in enumerate(joint_names):
        w.writerow([name] + [repr(r.per_joint[j]) if j < len(r.per_joint) else "" for r in rows])
    return buf.getvalue()


def load_bundles(paths) -> list[dict]:
    """Read results bundles from JSON files (single bundle, list, or evaluate report)."""
    out = []
    for p in paths:
        try:
            with open(p) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ReportError(f"cannot read results file {p}: {exc.strerror}") from None
        except ValueError as exc:
            raise ValidationError(f"results file {p} is not JSON ({exc})") from None
        if isinstance(doc, dict) and "bundles" in doc:
            out.extend(doc["bundles"])
        elif isinstance(doc, list):
            out.extend(doc)
        else:
            out.append(doc)
    return out


def emit_report(bundles, fmt, out_path=None, baseline=None, joint_names=None) -> dict:
    """Render bundles grouped by protocol.

    Args:
        bundles: Results bundles or ``LeaderboardRow`` objects.
        fmt: One of ``csv``, ``json``, ``markdown``.
        out_path: Directory to write into; ``None`` returns text only.
        baseline: Model name whose rows anchor percentage annotations.
        joint_names: Labels for the per-joint CSV.

    Returns:
        ``{filename: text}`` for everything rendered.

    Raises:
        ReportError: Destination not writable.
    """
    if fmt not in FORMATS:
        raise ValidationError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")
    rows = [b if isinstance(b, LeaderboardRow) else LeaderboardRow.from_bundle(b) for b in bundles]
    by_proto = {p: [r for r in rows if r.protocol == p] for p in PROTOCOLS}
    for r in rows:
        by_proto.setdefault(r.protocol, [])
        if r.protocol not in PROTOCOLS:
            by_proto[r.protocol].append(r)
    files = {}
    for proto, prs in by_proto.items():
        if fmt == "markdown":
            base = next((r for r in prs if r.model_name == baseline and r.variant == "unoptimized"), None)
            if base is None and baseline is not None:
                base = next((r for r in prs if r.model_name == baseline), None)
            files[f"leaderboard_{proto}.md"] = leaderboard_markdown(prs, proto, base)
        elif fmt == "csv":
            files[f"leaderboard_{proto}.csv"] = leaderboard_csv(prs)
            if joint_names is not None or any(r.per_joint for r in prs):
                names = joint_names or [str(j) for j in range(max((len(r.per_joint) for r in prs), default=0))]
                files[f"per_joint_{proto}.csv"] = per_joint_csv(prs, names)
        else:
            board = build_leaderboard(prs)
            doc = [dict(r.to_bundle(), average=r.average) for r in board]
            files[f"leaderboard_{proto}.json"] = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out_path is not None:
        write_files(out_path, files)
    return files


def write_files(out_dir, files: dict):
    try:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in files.items():
            with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except OSError as exc:
        raise ReportError(f"cannot write report to {out_dir}: {exc.strerror or exc}") from None
