import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from crosspose.analytics import (
    ViewpointGrid,
    average_ranks,
    bin_viewpoints,
    correlation_from_grid,
    export_contour,
    read_contour,
    spearman,
    t_statistic,
    viewpoint_error_correlation,
)
from crosspose.datasets.synth import SynthSpec, synth_generate
from crosspose.errors import UndefinedCorrelationError


def rank_definition_rho(x, y):
    """Spearman for distinct values: 1 - 6 sum d^2 / (n (n^2 - 1)), exact."""
    n = len(x)
    rx = {v: i + 1 for i, v in enumerate(sorted(x))}
    ry = {v: i + 1 for i, v in enumerate(sorted(y))}
    d2 = sum((rx[a] - ry[b]) ** 2 for a, b in zip(x, y))
    return Fraction(1) - Fraction(6 * d2, n * (n * n - 1))


def test_hand_examples():
    assert spearman([1, 2, 3, 4, 5], [5, 4, 3, 2, 1]).rho == -1.0
    assert spearman([1, 2, 3], [1, 3, 2]).rho == pytest.approx(0.5, abs=1e-15)


def test_all_permutations_of_five():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    for perm in itertools.permutations(x):
        assert spearman(x, perm).rho == float(rank_definition_rho(x, perm))


def test_average_ranks_with_ties():
    np.testing.assert_array_equal(average_ranks([10, 20, 20, 30]), [1, 2.5, 2.5, 4])


def test_matches_scipy_with_ties():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 6, 40).astype(float)
    y = x + rng.integers(0, 4, 40)
    r = spearman(x, y)
    ref = stats.spearmanr(x, y)
    assert r.rho == pytest.approx(ref.statistic, abs=1e-12)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)


@pytest.mark.parametrize("rho,n,printed", [(-0.45, 377, 9.78), (-0.19, 380, 3.70), (-0.68, 751, 25.50)])
def test_sigma_is_abs_t(rho, n, printed):
    assert abs(t_statistic(rho, n)) == pytest.approx(printed, abs=0.15)


def test_undefined_cases():
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 2], [2, 1])
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 2, 3], [1, 2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(-1000, 1000), st.integers(-1000, 1000)), min_size=4, max_size=40))
def test_monotone_invariance_and_symmetry(pairs):
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return
    r = spearman(x, y).rho
    assert spearman(np.exp(x / 200.0), y**3).rho == pytest.approx(r, abs=1e-12)
    assert spearman(y, x).rho == pytest.approx(r, abs=1e-12)
    assert spearman(x, x).rho == pytest.approx(1.0)
    assert -1.0 <= r <= 1.0


def test_single_point_bin():
    g = bin_viewpoints(np.tile([10.0, 0.0], (7, 1)))
    assert np.count_nonzero(g.train) == 1 and g.train.sum() == 7


def test_edges_are_lower_inclusive():
    ei, ai = ViewpointGrid.index([[10.0, 10.0], [-90.0, -180.0], [90.0, 180.0]])
    assert (ei[0], ai[0]) == (20, 19)  # elevation [10,15), azimuth [10,20)
    assert (ei[1], ai[1]) == (0, 0)
    assert (ei[2], ai[2]) == (35, 0)  # top edge folds in, azimuth wraps


def test_ring_counts_uniform():
    a = synth_generate(SynthSpec.from_dict({"count": 7200, "seed": 3, "rig": {"preset": "h36m", "kind": "ring"}}))
    g = bin_viewpoints(a["viewpoint"])
    rows = np.flatnonzero(g.train.sum(axis=1))
    assert rows.tolist() == [20]  # elevation 10 deg
    counts = g.train[20]
    expected = 7200 / 36
    assert np.all(np.abs(counts - expected) <= 3 * np.sqrt(expected))


def _inverse_fixture():
    train, test, err = [], [], []
    for k, azim in enumerate(range(-175, 180, 10)):
        n_train = 5 + k
        train += [[2.5, azim]] * n_train
        test += [[2.5, azim]] * 5
        err += [1.0 / n_train] * 5
    return np.array(train, float), np.array(test, float), np.array(err)


def test_inverse_fixture_rho_minus_one():
    tr, te, err = _inverse_fixture()
    res, grid = viewpoint_error_correlation(tr, te, err)
    assert res.rho == -1.0 and res.num_bins == 36
    assert grid.train.sum() == len(tr) and grid.test.sum() == len(te)


def test_threshold_drops_a_bin():
    tr, te, err = _inverse_fixture()
    keep = ~((tr[:, 1] == -175.0))
    tr = np.concatenate([tr[keep], [[2.5, -175.0]] * 4])
    res, _ = viewpoint_error_correlation(tr, te, err)
    assert res.num_bins == 35


def test_641_bin_fixture():
    cells = [(e, a) for e in range(-85, 90, 5) for a in range(-175, 180, 10)][:641]
    rng = np.random.default_rng(4)
    train, test, err = [], [], []
    for k, (e, a) in enumerate(cells):
        vp = [e + 2.5, a]  # bin centers (elev step 5, azim step 10)
        train += [vp] * (5 + k % 11)
        test += [vp] * 5
        err += list(rng.uniform(20, 80, 5))
    res, _ = viewpoint_error_correlation(np.array(train), np.array(test), np.array(err))
    assert res.num_bins == 641


def test_order_independent():
    tr, te, err = _inverse_fixture()
    rng = np.random.default_rng(5)
    p = rng.permutation(len(te))
    a, _ = viewpoint_error_correlation(tr, te, err)
    b, _ = viewpoint_error_correlation(tr[rng.permutation(len(tr))], te[p], err[p])
    assert a == b


def test_nan_viewpoints_not_counted():
    vp = np.array([[0.0, 0.0], [np.nan, np.nan], [5.0, 5.0]])
    g = bin_viewpoints(vp, vp, [1.0, 2.0, 3.0])
    assert g.train.sum() == 2 and g.test.sum() == 2


def test_correlation_needs_three_bins():
    g = bin_viewpoints([[0, 0]] * 10, [[0, 0]] * 10, [1.0] * 10)
    with pytest.raises(UndefinedCorrelationError):
        correlation_from_grid(g)


def test_contour_export():
    assert export_contour(ViewpointGrid()).strip().count("\n") == 0
    one = bin_viewpoints([[12.0, 33.0]], [[12.0, 33.0]], [7.5])
    lines = export_contour(one).strip().split("\n")
    assert len(lines) == 2
    assert lines[1] == "35.0,12.5,1,1,7.5"


def test_contour_round_trip():
    tr, te, err = _inverse_fixture()
    g = bin_viewpoints(tr, te, err)
    back = read_contour(export_contour(g))
    np.testing.assert_array_equal(back.train, g.train)
    np.testing.assert_array_equal(back.test, g.test)
    np.testing.assert_allclose(back.mean_error(), g.mean_error(), rtol=1e-15, equal_nan=True)
    assert export_contour(back) == export_contour(g)
