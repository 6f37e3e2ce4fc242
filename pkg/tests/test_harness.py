import json
import sys

import numpy as np
import pytest
import yaml

from crosspose.datasets.archive import read_archive, write_archive
from crosspose.datasets.pose import JOINTS_3D_CAM, split_rows
from crosspose.datasets.synth import SynthSpec, synth_generate
from crosspose.errors import ConfigError, StageError, ValidationError
from crosspose.harness import (
    LeaderboardRow,
    build_leaderboard,
    emit_report,
    parse_config,
    parse_config_text,
    percent_improvement,
    run_evaluation,
)
from crosspose.harness.cli import main
from crosspose.harness.report import parse_leaderboard_csv
from crosspose.runner import write_prediction_file
from crosspose.skeleton import hip_center
from tests import golden

ECHO = [sys.executable, "-m", "crosspose.runner.echo_model"]


@pytest.fixture(scope="module")
def archive_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("arc")
    p = d / "h36m.zip"
    write_archive(synth_generate(SynthSpec.from_dict({"count": 140, "seed": 2, "rig": {"preset": "h36m"}})), p)
    return p


def _cfg_text(archive, source, **extra):
    doc = {"model_type": "probe", "datasets": {"h36m": str(archive)}, "prediction_source": source}
    doc.update(extra)
    return yaml.safe_dump(doc)


def _gt_file(archive_path, out):
    a = read_archive(archive_path)
    rows = split_rows(a, "test")
    ids = [a.sample_ids[i] for i in rows]
    write_prediction_file(out, ids, hip_center(a[JOINTS_3D_CAM][rows].astype(np.float64)))
    return out


def test_defaults():
    cfg = parse_config_text("model_type: m\ndatasets: {h36m: a.zip}\nprediction_source: {type: oracle}\n")
    assert cfg.num_workers == 1 and cfg.with_scale is True
    assert cfg.sample_frames_threshold_mm == 40.0
    assert cfg.num_joints == 16 and cfg.num_frames == 1
    assert cfg.model_name == "m" and cfg.min_train == 5


def test_num_joints_15_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config_text("model_type: m\ndatasets: {h36m: a}\nprediction_source: {type: oracle}\nnum_joints: 15\n")
    assert info.value.key == "num_joints" and info.value.line == 4


def test_unknown_key_names_key_and_line():
    text = "model_type: m\ndatasets: {h36m: a}\nprediction_source: {type: oracle}\nnum_wrokers: 4\n"
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == "num_wrokers" and info.value.line == 4
    assert "num_wrokers" in str(info.value) and "line 4" in str(info.value)


@pytest.mark.parametrize(
    "text,key",
    [
        ("datasets: {h36m: a}\nprediction_source: {type: oracle}\n", "model_type"),
        ("model_type: m\ndatasets: {h36m: a}\nprediction_source: {type: oracle}\nnum_workers: two\n", "num_workers"),
        ("model_type: m\ndatasets: {h36m: a}\nprediction_source: {type: oracle}\nnum_frames: 27\n", "num_frames"),
        ("model_type: m\ndatasets: {mpii: a}\nprediction_source: {type: oracle}\n", "datasets"),
        ("model_type: m\ndatasets: {h36m: a}\nprediction_source: {type: magic}\n", "prediction_source"),
    ],
)
def test_config_errors(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == key


def test_config_round_trip(tmp_path):
    text = _cfg_text("a.zip", {"type": "oracle", "sigma_mm": 5.0}, num_workers=3, video_mode=True, num_frames=27)
    cfg = parse_config_text(text, tmp_path)
    again = parse_config_text(cfg.to_yaml(), tmp_path)
    assert again == cfg
    p = tmp_path / "c.yaml"
    p.write_text(text)
    assert parse_config(p) == cfg


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "none.yaml")


def test_ground_truth_file_gives_zero(archive_path, tmp_path):
    pred = _gt_file(archive_path, tmp_path / "gt.zip")
    cfg = parse_config_text(_cfg_text(archive_path, {"type": "file", "path": str(pred)}))
    r = run_evaluation(cfg).datasets["h36m"].result
    assert r.mpjpe_mm <= 1e-9 and r.pa_mpjpe_mm <= 1e-9


def test_worker_count_does_not_change_report(archive_path):
    texts = [_cfg_text(archive_path, {"type": "oracle", "sigma_mm": 10.0}, num_workers=w) for w in (1, 8)]
    a, b = (run_evaluation(parse_config_text(t)).to_json() for t in texts)
    assert a == b


def test_external_model_workers(archive_path):
    src = {"type": "external", "command": ECHO + ["--mode", "planar"]}
    texts = [_cfg_text(archive_path, src, num_workers=w) for w in (1, 3)]
    a, b = (run_evaluation(parse_config_text(t)).to_json() for t in texts)
    assert a == b


def test_stage_labels(archive_path, tmp_path):
    cfg = parse_config_text(_cfg_text(tmp_path / "missing.zip", {"type": "oracle"}))
    with pytest.raises(StageError) as info:
        run_evaluation(cfg)
    assert info.value.stage == "load"
    cfg = parse_config_text(_cfg_text(archive_path, {"type": "file", "path": str(tmp_path / "none.zip")}))
    with pytest.raises(StageError) as info:
        run_evaluation(cfg)
    assert info.value.stage == "predict" and info.value.exit_code == 3


def test_outputs_written(archive_path, tmp_path):
    out = tmp_path / "out"
    cfg = parse_config_text(
        _cfg_text(archive_path, {"type": "oracle", "sigma_mm": 10.0}, train_archive=str(archive_path), output_dir=str(out))
    )
    run_evaluation(cfg)
    names = {p.name for p in out.iterdir()}
    assert {"report.json", "errors_h36m.csv", "contour_h36m.csv", "leaderboard_mpjpe.csv", "per_joint_mpjpe.csv"} <= names
    doc = json.loads((out / "report.json").read_text())
    assert "num_workers" not in doc["config"]


def test_leaderboard_examples():
    rows = build_leaderboard(golden.bundles(golden.MPJPE_ROWS, "mpjpe"))
    assert rows[0].model_name == "GraFormer" and rows[0].average == pytest.approx(188.74, abs=0.005)
    assert rows[-1].model_name == "Manzur" and rows[-1].average == pytest.approx(71.82, abs=0.005)
    single = LeaderboardRow("x", {"h36m": 12.5})
    assert build_leaderboard([single])[0].average == 12.5


def test_ties_break_by_name():
    rows = build_leaderboard([LeaderboardRow("b", {"h36m": 1.0}), LeaderboardRow("a", {"h36m": 1.0})])
    assert [r.model_name for r in rows] == ["a", "b"]


def test_percent_improvement():
    assert percent_improvement(41.42, 39.11).display == "↓ 5.6%"
    assert percent_improvement(41.42, 52.37).display == "↑ 26.4%"
    assert percent_improvement(41.42, 41.42).display == "0.0%"
    with pytest.raises(ValidationError):
        percent_improvement(0.0, 1.0)


def test_empty_model_set_gives_headers():
    for fmt in ("csv", "markdown", "json"):
        files = emit_report([], fmt)
        for text in files.values():
            assert text.count("\n") <= 2
    md = emit_report([], "markdown")["leaderboard_mpjpe.md"]
    assert md.startswith("| Model |")


def test_reports_are_deterministic_and_cross_format():
    b = golden.bundles(golden.MPJPE_ROWS, "mpjpe")
    assert emit_report(b, "markdown") == emit_report(list(b), "markdown")
    parsed = parse_leaderboard_csv(emit_report(b, "csv")["leaderboard_mpjpe.csv"])
    as_json = json.loads(emit_report(b, "json")["leaderboard_mpjpe.json"])
    assert [r.model_name for r in parsed] == [d["model"] for d in as_json]
    for r, d in zip(parsed, as_json):
        for k, v in d["per_dataset"].items():
            assert abs(r.per_dataset[k] - v) <= 1e-9


def test_markdown_baseline_annotations():
    b = golden.bundles(golden.MPJPE_ROWS, "mpjpe")
    md = emit_report(b, "markdown", baseline="Martinez")["leaderboard_mpjpe.md"]
    line = next(line for line in md.splitlines() if line.startswith("| Martinez †"))
    assert "39.11 (↓ 5.6%)" in line and "110.50 (↓ 24.2%)" in line


def test_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    from crosspose.harness.report import ReportError

    with pytest.raises(ReportError):
        emit_report(golden.bundles(golden.MPJPE_ROWS, "mpjpe"), "csv", blocker / "sub")


def test_cli_exit_codes(archive_path, tmp_path, capsys):
    assert main([]) == 1
    assert main(["evaluate", "--config", str(tmp_path / "nope.yaml")]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text(_cfg_text(tmp_path / "missing.zip", {"type": "oracle"}))
    assert main(["evaluate", "--config", str(bad)]) == 2
    src = tmp_path / "src.yaml"
    src.write_text(_cfg_text(archive_path, {"type": "file", "path": str(tmp_path / "none.zip")}))
    assert main(["evaluate", "--config", str(src)]) == 3
    good = tmp_path / "good.yaml"
    good.write_text(_cfg_text(archive_path, {"type": "oracle", "sigma_mm": 10.0}, train_archive=str(archive_path)))
    out = tmp_path / "out"
    assert main(["evaluate", "--config", str(good), "--out", str(out)]) == 0
    assert main(["analyze", "--train", str(archive_path), "--errors", str(out / "errors_h36m.csv"), "--min-train", "1", "--min-test", "1"]) == 0
    assert main(["report", "--in", str(out / "report.json"), "--format", "markdown"]) == 0
    assert "probe" in capsys.readouterr().out
    spec = tmp_path / "spec.yaml"
    spec.write_text("count: 10\nrig: {preset: gpa}\n")
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s.zip")]) == 0
    assert read_archive(tmp_path / "s.zip").count == 10
    spec.write_text("count: 10\nrig: {preset: gpa, kind: spiral}\n")
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "t.zip")]) == 1


def test_cli_preprocess(tmp_path):
    from tests import raw_fixtures as fx

    fx.write_h36m(tmp_path / "raw")
    assert main(["preprocess", "h36m", "--raw", str(tmp_path / "raw"), "--out", str(tmp_path / "h.zip")]) == 0
    assert main(["preprocess", "h36m", "--raw", str(tmp_path / "none"), "--out", str(tmp_path / "x.zip")]) == 2
