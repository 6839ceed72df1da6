import itertools

import numpy as np
import pytest

from ddac.metrics import acc, ari, contingency, evaluate, nmi


def brute_acc(pred, truth):
    labels_p = np.unique(pred)
    labels_t = np.unique(truth)
    size = max(len(labels_p), len(labels_t))
    best = 0
    for perm in itertools.permutations(range(size), len(labels_p)):
        mapping = dict(zip(labels_p, perm))
        mapped = np.array([mapping[p] for p in pred])
        truth_idx = np.searchsorted(labels_t, truth)
        best = max(best, int(np.sum(mapped == truth_idx)))
    return best / len(pred)


def test_worked_values():
    t, p = [0, 0, 1, 1], [0, 1, 0, 1]
    assert acc(t, t) == 1.0
    assert acc([1, 1, 0, 0], t) == 1.0
    assert acc(p, t) == 0.5
    assert nmi(t, t) == pytest.approx(1.0, abs=1e-15)
    assert nmi([0, 0, 0, 0], t) == 0.0
    assert nmi(p, t) == pytest.approx(0.0, abs=1e-15)
    assert ari(t, t) == 1.0
    assert ari(p, t) == pytest.approx(-0.5, abs=1e-12)
    assert ari([0, 0, 0], [1, 1, 1]) == 1.0


def test_acc_matches_brute_force(rng):
    for _ in range(30):
        n = int(rng.integers(1, 15))
        pred, truth = rng.integers(0, 4, n), rng.integers(0, 3, n)
        assert acc(pred, truth) == brute_acc(pred, truth)


def test_more_clusters_than_classes():
    assert acc([0, 1, 2, 3], [0, 0, 1, 1]) == 0.5


def test_relabeling_invariance(rng):
    pred, truth = rng.integers(0, 4, 40), rng.integers(0, 4, 40)
    perm = np.array([2, 0, 3, 1])
    base = evaluate(pred, truth)
    for a, b in ((perm[pred], truth), (pred, perm[truth]), (pred + 10, truth)):
        for key, v in evaluate(a, b).items():
            assert v == pytest.approx(base[key], abs=1e-12)


def test_ranges(rng):
    for _ in range(20):
        pred, truth = rng.integers(0, 3, 12), rng.integers(0, 3, 12)
        m = evaluate(pred, truth)
        assert 0 <= m["acc"] <= 1 and 0 <= m["nmi"] <= 1 and -1 <= m["ari"] <= 1


def test_nmi_matches_sklearn(rng):
    from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

    for _ in range(10):
        pred, truth = rng.integers(0, 4, 50), rng.integers(0, 3, 50)
        assert nmi(pred, truth) == pytest.approx(normalized_mutual_info_score(truth, pred), abs=1e-12)
        assert ari(pred, truth) == pytest.approx(adjusted_rand_score(truth, pred), abs=1e-12)


def test_contingency_counts():
    np.testing.assert_array_equal(contingency([0, 0, 1], [1, 1, 1]), [[2], [1]])


def test_errors():
    with pytest.raises(ValueError):
        acc([0, 1], [0])
    with pytest.raises(ValueError):
        nmi([], [])
    with pytest.raises(ValueError):
        ari([0], [0])
