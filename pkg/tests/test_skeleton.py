import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosspose.errors import InvalidSampleError, RemapError, ShapeError
from crosspose.skeleton import (
    BONES_14,
    CANONICAL_14,
    CANONICAL_16,
    JointRemap,
    JointSet,
    bones_for,
    hip_center,
    load_remap,
    remap,
    select_joint_subset,
)


def test_canonical16_order():
    assert CANONICAL_16.joint_names == (
        "hip", "right_hip", "right_knee", "right_ankle", "left_hip", "left_knee", "left_ankle",
        "spine", "neck", "head", "left_shoulder", "left_elbow", "left_wrist",
        "right_shoulder", "right_elbow", "right_wrist",
    )  # fmt: skip
    assert CANONICAL_16.root_index == 0


def test_canonical14_drops_spine_and_head_keeping_order():
    expected = tuple(n for n in CANONICAL_16.joint_names if n not in ("spine", "head"))
    assert CANONICAL_14.joint_names == expected
    assert CANONICAL_14.count == 14


def test_jointset_rejects_duplicates():
    with pytest.raises(ValueError):
        JointSet("bad", ("a", "a"))


def test_bones14_reference_valid_rows():
    assert max(max(b) for b in BONES_14) == 13
    assert bones_for(CANONICAL_14) is BONES_14


def test_identity_remap_returns_input():
    x = np.arange(48, dtype=float).reshape(16, 3)
    np.testing.assert_array_equal(remap(x, JointRemap.identity(16)), x)


def test_midpoint_rule():
    src = np.zeros((3, 3))
    src[1] = (-100, 0, 0)
    src[2] = (100, 0, 0)
    table = JointRemap("toy", ((1, 2), 1, 2), 3)
    out = remap(src, table, JointSet("toy3", ("hip", "l", "r")))
    np.testing.assert_array_equal(out[0], [0, 0, 0])


def test_permutation_remap_matches_loop():
    rng = np.random.default_rng(0)
    src = rng.normal(size=(24, 3))
    perm = tuple(int(i) for i in rng.permutation(24)[:16])
    out = remap(src, JointRemap("perm", perm, 24))
    for k in range(16):
        for c in range(3):
            assert out[k, c] == src[perm[k], c]


def test_remap_out_of_range_index_is_definition_error():
    with pytest.raises(RemapError):
        JointRemap("bad", tuple(range(15)) + (30,), 24)


def test_remap_nonfinite_is_invalid_sample():
    x = np.zeros((16, 3))
    x[3, 1] = np.nan
    with pytest.raises(InvalidSampleError):
        remap(x, JointRemap.identity(16))


def test_remap_wrong_source_count():
    with pytest.raises(ShapeError):
        remap(np.zeros((20, 3)), load_remap("3dpw"))


@pytest.mark.parametrize("ds,n", [("h36m", 38), ("gpa", 34), ("3dpw", 24), ("surreal", 24)])
def test_shipped_tables_cover_every_canonical_joint_once(ds, n):
    t = load_remap(ds)
    assert t.source_joint_count == n
    assert len(t.mapping) == 16
    again = JointRemap.from_dict(t.to_dict() | {"source_dataset": ds})
    assert again.mapping == t.mapping


def test_remap_works_on_2d_and_batches():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5, 24, 2))
    out = remap(x, load_remap("3dpw"))
    assert out.shape == (5, 16, 2)


def test_from_dict_rejects_double_mapping():
    doc = {"source_dataset": "toy", "mapping": [{"target": 0, "source": 0}, {"target": 0, "source": 1}]}
    with pytest.raises(RemapError):
        JointRemap.from_dict(doc)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=48, max_size=48))
def test_hip_center_root_exactly_zero(vals):
    x = np.array(vals).reshape(16, 3)
    out = hip_center(x)
    assert np.all(out[0] == 0.0)
    np.testing.assert_allclose(out[5], x[5] - x[0])


def test_hip_center_rejects_nonfinite():
    x = np.zeros((16, 3))
    x[0, 0] = np.inf
    with pytest.raises(InvalidSampleError):
        hip_center(x)


def test_select_subset():
    x = np.arange(16 * 3).reshape(16, 3)
    out = select_joint_subset(x)
    assert out.shape == (14, 3)
    assert 7 * 3 not in out[:, 0] and 9 * 3 not in out[:, 0]
    with pytest.raises(ShapeError):
        select_joint_subset(np.zeros((14, 3)))
