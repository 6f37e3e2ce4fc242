import json

import numpy as np
import pytest

from crosspose.datasets.adapters import ADAPTERS, adapt_3dpw, adapt_gpa, adapt_h36m, adapt_surreal
from crosspose.datasets.pose import camera_at, split_rows, world_to_camera_native
from crosspose.errors import DataLoadError
from crosspose.geometry import project
from tests import raw_fixtures as fx


def _reprojection_px(archive):
    conv = archive.manifest["convention"]
    worst = 0.0
    for i in range(archive.count):
        cam = camera_at(archive, i)
        X = archive["joints_3d_world"][i].astype(np.float64)
        Xc = world_to_camera_native(conv, X, archive["cam_rvec"][i], archive["cam_t"][i])
        uv = project(Xc, cam)
        worst = max(worst, float(np.abs(uv - archive["keypoints_2d"][i]).max()))
    return worst


def test_h36m_split_rule(tmp_path):
    fx.write_h36m(tmp_path, subjects=(1, 9), frames=4, cams=2)
    a = adapt_h36m(tmp_path, threshold_mm=0)
    assert a.count == 2 * 4 * 2
    subj = a["meta"][:, 0].astype(int)
    assert set(subj[split_rows(a, "train")]) == {1}
    assert set(subj[split_rows(a, "test")]) == {9}


def test_h36m_projection_oracle(tmp_path):
    cams = fx.write_h36m(tmp_path, subjects=(1,), frames=3, cams=1)
    a = adapt_h36m(tmp_path, threshold_mm=0)
    c = cams["S1"]["cam0"]
    R, C = np.array(c["R"], np.float32).astype(float), np.array(c["t"], np.float32).astype(float)
    for i in range(a.count):
        X = a["joints_3d_world"][i].astype(np.float64)
        Xc = (X - C) @ R.T
        u = c["f"][0] * Xc[:, 0] / Xc[:, 2] + c["c"][0]
        v = c["f"][1] * Xc[:, 1] / Xc[:, 2] + c["c"][1]
        np.testing.assert_allclose(a["keypoints_2d"][i], np.stack([u, v], 1), atol=1e-3)
        np.testing.assert_allclose(a["joints_3d_cam"][i], Xc, atol=1e-2)


def test_h36m_missing_and_empty(tmp_path):
    with pytest.raises(DataLoadError):
        adapt_h36m(tmp_path / "nope")
    (tmp_path / "empty").mkdir()
    with pytest.raises(DataLoadError):
        adapt_h36m(tmp_path / "empty")


def test_h36m_missing_camera_entry(tmp_path):
    fx.write_h36m(tmp_path, subjects=(1, 9), frames=2, cams=1)
    doc = json.loads((tmp_path / "cameras.json").read_text())
    del doc["S9"]
    (tmp_path / "cameras.json").write_text(json.dumps(doc))
    with pytest.raises(DataLoadError):
        adapt_h36m(tmp_path)


def test_gpa_cm_translation(tmp_path):
    fx.write_gpa(tmp_path, frames=4)
    a = adapt_gpa(tmp_path, threshold_mm=0)
    assert a.count == 8
    assert a.manifest["units"]["cam_t"] == "cm"
    assert _reprojection_px(a) <= 1e-3
    depth = a["joints_3d_cam"][:, 0, 2]
    assert np.all((depth > 3000) & (depth < 6000))


def test_gpa_wrong_joint_unit_rejected(tmp_path):
    fx.write_gpa(tmp_path, frames=2)
    doc = json.loads((tmp_path / "annotations.json").read_text())
    for r in doc["frames"]:
        r["joints_3d"] = (np.array(r["joints_3d"]) / 1000.0).tolist()  # metres
    (tmp_path / "annotations.json").write_text(json.dumps(doc))
    with pytest.raises(DataLoadError):
        adapt_gpa(tmp_path)


def test_3dpw_two_people_two_streams(tmp_path):
    fx.write_3dpw(tmp_path, people=2, frames=5)
    a = adapt_3dpw(tmp_path, threshold_mm=0)
    assert a.count == 10
    assert sorted(set(a["meta"][:, 0].astype(int))) == [0, 1]
    assert len(set(a.sample_ids)) == 10
    assert set(split_rows(a, "test")) == set(range(10))


def test_surreal_corrupt_clip_excluded(tmp_path):
    fx.write_surreal(tmp_path, clips=3, frames=5, corrupt_clip=1)
    a = adapt_surreal(tmp_path, threshold_mm=0)
    assert a.count == 10
    f = a.manifest["metadata"]["filter"]
    assert f["total"] == 15 and f["dropped"] == 5
    assert f["fraction"] == pytest.approx(1 / 3)
    assert f["counts"]["non-finite"] == 5


def test_thinning_is_applied(tmp_path):
    fx.write_h36m(tmp_path, subjects=(1,), frames=5, cams=1)
    seq = np.load(tmp_path / "S1" / "Walking.npy")
    np.save(tmp_path / "S1" / "Walking.npy", np.repeat(seq[:1], 5, axis=0))
    assert adapt_h36m(tmp_path, threshold_mm=40).count == 1
    assert adapt_h36m(tmp_path, threshold_mm=0).count == 5


@pytest.mark.parametrize("name", sorted(ADAPTERS))
def test_every_adapter_reprojects(tmp_path, name):
    writer = {"h36m": fx.write_h36m, "gpa": fx.write_gpa, "3dpw": fx.write_3dpw, "surreal": fx.write_surreal}[name]
    writer(tmp_path)
    a = ADAPTERS[name](tmp_path, threshold_mm=0)
    assert a.count > 0
    assert _reprojection_px(a) <= 1e-3
    assert np.all(a["joints_3d_cam"][..., 2] > 0)
