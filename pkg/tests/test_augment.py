import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trailgate.augment import AugmentConfig, adasyn, apportion, class_counts
from trailgate.dataset import BINARY, BINARY_CLASSES, CONTINUOUS, MULTI5, MULTI5_CLASSES
from trailgate.dataset import FeatureTable, LabelVector, Schema


def _table(X):
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    schema = Schema(tuple(f"f{j}" for j in range(d)), (CONTINUOUS,) * d, {}, ((0.0, 1.0),) * d)
    return FeatureTable(schema, X)


def _labels(y, scheme=MULTI5):
    names = MULTI5_CLASSES if scheme == MULTI5 else BINARY_CLASSES
    return LabelVector(scheme, np.asarray(y), names)


def test_apportion_largest_remainder():
    assert list(apportion(5, [0.5, 0.3, 0.2])) == [3, 1, 1]
    assert list(apportion(7, [1, 1, 1])) == [3, 2, 2]
    assert list(apportion(4, [0, 0])) == [2, 2]
    assert apportion(0, [1, 2]).sum() == 0


@given(st.integers(0, 500), st.lists(st.floats(0, 10), min_size=1, max_size=20))
def test_apportion_sums_exactly(total, weights):
    assert apportion(total, weights).sum() == total


def test_class_counts():
    assert class_counts([]) == {}
    a, b = [0, 1, 1], [1, 2]
    merged = class_counts(a + b)
    ca, cb = class_counts(a), class_counts(b)
    assert merged == {k: ca.get(k, 0) + cb.get(k, 0) for k in merged}


def test_balanced_input_unchanged():
    X = np.random.default_rng(0).random((10, 3))
    t, y = _table(X), _labels([0] * 5 + [1] * 5, BINARY)
    out, out_y, rep = adasyn(t, y)
    assert out.n_rows == 10 and np.array_equal(out.data, X)
    assert rep.synthetic == {0: 0, 1: 0}


def test_toy_points_lie_between_parents():
    X = [[0, 0], [1, 1]] + [[0.2 + 0.01 * i, 0.9 - 0.01 * i] for i in range(8)]
    y = [1, 1] + [0] * 8
    out, out_y, rep = adasyn(_table(X), _labels(y, BINARY), AugmentConfig(k_neighbors=1))
    new = out.data[10:]
    assert new.shape[0] == 6
    # the only minority partner pair is (0,0)-(1,1): every point sits on that segment
    assert np.allclose(new[:, 0], new[:, 1])
    assert np.all((new >= 0) & (new <= 1))


def test_full_scale_counts_reach_majority():
    counts = {0: 67343, 1: 45927, 2: 11656, 3: 52, 4: 995}
    rng = np.random.default_rng(1)
    y = np.concatenate([np.full(n, c) for c, n in counts.items()])
    centres = rng.random((5, 2))
    X = np.clip(centres[y] + rng.normal(0, 0.05, (y.size, 2)), 0, 1)
    _, out_y, rep = adasyn(_table(X), _labels(y))
    assert class_counts(out_y) == {c: 67343 for c in range(5)}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.5, 0.7, 0.8, 0.9, 1.0]),
       st.lists(st.integers(1, 25), min_size=2, max_size=4))
def test_post_counts_equal_targets(seed, ratio, sizes):
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.full(n, c) for c, n in enumerate(sizes)])
    X = rng.random((y.size, 3))
    t, lv = _table(X), _labels(y)
    out, out_y, rep = adasyn(t, lv, AugmentConfig(target_ratio=ratio, seed=seed))
    m_maj = max(sizes)
    majority = sizes.index(m_maj)
    target = math.floor(ratio * m_maj)
    for c, n in enumerate(sizes):
        expect = n if c == majority else max(n, target)
        assert rep.final[c] == expect == int(np.count_nonzero(out_y.labels == c))
    # originals untouched, new rows inside the unit box
    assert np.array_equal(out.data[:y.size], X)
    assert np.all((out.data >= 0) & (out.data <= 1))


def test_synthetic_rows_within_class_bounds_and_deterministic():
    rng = np.random.default_rng(4)
    X = rng.random((60, 4))
    y = np.array([0] * 40 + [1] * 15 + [2] * 5)
    t, lv = _table(X), _labels(y)
    out1, y1, _ = adasyn(t, lv, AugmentConfig(seed=9))
    out2, y2, _ = adasyn(t, lv, AugmentConfig(seed=9))
    assert np.array_equal(out1.data, out2.data) and np.array_equal(y1.labels, y2.labels)
    for c in (1, 2):
        members = X[y == c]
        new = out1.data[60:][y1.labels[60:] == c]
        assert np.all(new >= members.min(axis=0) - 1e-15)
        assert np.all(new <= members.max(axis=0) + 1e-15)


def test_single_sample_class_is_replicated():
    X = np.random.default_rng(0).random((7, 2))
    y = [0] * 6 + [1]
    out, out_y, rep = adasyn(_table(X), _labels(y, BINARY))
    assert np.all(out.data[7:] == X[6])
    assert rep.notes and "one sample" in rep.notes[0]


def test_report_csv(tmp_path):
    X = np.random.default_rng(0).random((12, 2))
    _, _, rep = adasyn(_table(X), _labels([0] * 9 + [1] * 3, BINARY))
    rep.write_csv(tmp_path / "a.csv")
    text = (tmp_path / "a.csv").read_text().splitlines()
    assert text == ["class,before,synthetic,after", "normal,9,0,9", "attack,3,6,9"]


def test_config_validation():
    with pytest.raises(Exception):
        AugmentConfig(target_ratio=0)
    with pytest.raises(Exception):
        AugmentConfig(k_neighbors=0)
