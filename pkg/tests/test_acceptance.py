"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that the terminal summary prints.
"""

import itertools
import json
import time

import numpy as np
import pytest

from ddac import diffmat as dm
from ddac.autoencoder import AutoencoderParams, decode, encoder_activations, reconstruction_loss
from ddac.cli import main
from ddac.datasets import embedded_rings, gaussian_blobs, stochastic_block_model
from ddac.gcn import DdacgConfig, g_clus_loss, gcn_forward, init_gcn, train_ddacg
from ddac.graph import SparseAdjacency, knn_graph, normalize_adjacency
from ddac.io import save_features
from ddac.kmeans import kmeans_fit
from ddac.losses import (
    clus_loss,
    confidence_mask,
    disc_loss,
    orth_loss,
    soft_assign,
    target_distribution,
    total_loss,
)
from ddac.metrics import acc, ari
from ddac.model import DdacConfig, train_ddac

RING_ARCH = (64, 64, 128)
RING_SEEDS = range(5)


# -- 1. gradient suite -------------------------------------------------------


def random_state(r):
    n, k, d_prime = int(r.integers(6, 31)), int(r.integers(2, 5)), int(r.integers(1, 6))
    d = int(r.integers(2, 6))
    widths = (d, int(r.integers(2, 7)), d_prime)
    ae = AutoencoderParams.init(widths, r)
    params = dict(ae.weights)
    for name in params:
        if name.endswith(".b"):
            params[name] = 0.1 * r.standard_normal(params[name].shape)
    params["mu"] = r.standard_normal((k, d_prime))
    gcn = init_gcn(widths, k, r)
    params.update(gcn)
    X = r.standard_normal((n, d))
    A = normalize_adjacency(knn_graph(X, min(3, n - 1)))
    return X, A, params, ae.depth, len(gcn)


def objectives(X, A, depth, n_gcn, P, t):
    """Every loss as a function of the parameter leaves, with P and t frozen."""

    def parts(v):
        acts = encoder_activations(X, v, depth)
        z = acts[-1]
        Q = soft_assign(z, v["mu"])
        return acts, z, Q

    def recon(v):
        z = parts(v)[1]
        return reconstruction_loss(X, decode(z, v, depth))

    def clus(v):
        return clus_loss(parts(v)[2], P, t)

    def disc(v):
        return disc_loss(parts(v)[1], v["mu"], P, t)

    def orth(v):
        return orth_loss(parts(v)[1], t)

    def g_clus(v):
        acts, _, Q = parts(v)
        Y = gcn_forward(X, A, acts, [v[f"gcn{i}.W"] for i in range(n_gcn)]).Y
        return g_clus_loss(P, Q, Y, t, 0.1, 0.01)

    def total(v):
        return total_loss(recon(v), clus(v), disc(v), orth(v), 0.1, 0.01, 1e-5)

    def total_graph(v):
        return dm.add(dm.add(recon(v), g_clus(v)), dm.add(dm.scale(disc(v), 0.01), dm.scale(orth(v), 1e-5)))

    return {"recon": recon, "clus": clus, "disc": disc, "orth": orth, "g_clus": g_clus,
            "total": total, "total_graph": total_graph}


def test_criterion_01_gradient_suite(criterion):
    start = time.perf_counter()
    worst = {}
    for seed in range(20):
        r = np.random.default_rng(1000 + seed)
        X, A, params, depth, n_gcn = random_state(r)
        Z = encoder_activations(X, {k: dm.Tape().leaf(v) for k, v in params.items()}, depth)[-1].value
        P = target_distribution(soft_assign(Z, params["mu"]))
        t = confidence_mask(P, 1.0 / P.shape[1] + 0.05)
        for name, f in objectives(X, A, depth, n_gcn, P, t).items():
            err = max(dm.grad_check_params(f, params, step=1e-6).values())
            worst[name] = max(worst.get(name, 0.0), err)
    elapsed = time.perf_counter() - start
    top = max(worst.values())
    ok = top < 1e-4 and elapsed < 120
    criterion(ok, f"max rel err {top:.2e} over {sorted(worst)}, {elapsed:.0f}s")
    assert top < 1e-4, worst
    assert elapsed < 120


# -- 2. distribution invariants ----------------------------------------------


def equalize_columns(Q, iters=500):
    """Sinkhorn scaling to unit row sums and equal column sums."""
    n, k = Q.shape
    for _ in range(iters):
        Q = Q * (n / k) / Q.sum(axis=0)
        Q = Q / Q.sum(axis=1, keepdims=True)
    return Q


def entropy(rows):
    return -np.sum(np.where(rows > 0, rows * np.log(np.where(rows > 0, rows, 1.0)), 0.0), axis=1)


def test_criterion_02_distribution_invariants(criterion):
    r = np.random.default_rng(2)
    grid = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]
    worst_sum, sharpening, agreement, monotone = 0.0, True, True, True
    for _ in range(1000):
        n, k, d = int(r.integers(2, 30)), int(r.integers(2, 6)), int(r.integers(1, 6))
        scale = float(r.uniform(0.3, 5))
        Q = soft_assign(scale * r.standard_normal((n, d)), scale * r.standard_normal((k, d)))
        P = target_distribution(Q)
        worst_sum = max(worst_sum, np.abs(Q.sum(1) - 1).max(), np.abs(P.sum(1) - 1).max())
        counts = [confidence_mask(P, delta).sum() for delta in grid]
        monotone &= all(a >= b for a, b in zip(counts, counts[1:]))

        Qe = equalize_columns(Q)
        Pe = target_distribution(Qe)
        sharpening &= bool(np.all(entropy(Pe) <= entropy(Qe) + 1e-12))
        # rows whose top two entries are numerically tied have no well-defined argmax
        top2 = np.sort(Qe, axis=1)[:, -2:]
        clear = top2[:, 1] - top2[:, 0] > 1e-9
        agreement &= bool(np.all(Pe.argmax(1)[clear] == Qe.argmax(1)[clear]))
    ok = worst_sum <= 1e-10 and sharpening and agreement and monotone
    criterion(ok, f"row-sum err {worst_sum:.1e}, entropy {sharpening}, argmax {agreement}, mask {monotone}")
    assert worst_sum <= 1e-10
    assert sharpening and agreement and monotone


# -- 3. worked values --------------------------------------------------------


def test_criterion_03_worked_values(criterion):
    checks = [
        np.abs(soft_assign([[0.0]], [[0.0], [1.0]]) - [[2 / 3, 1 / 3]]).max(),
        np.abs(target_distribution([[2 / 3, 1 / 3], [1 / 3, 2 / 3]]) - [[0.8, 0.2], [0.2, 0.8]]).max(),
        np.abs(normalize_adjacency(SparseAdjacency.from_edges(2, [(0, 1)])).toarray() - 0.5).max(),
        abs(ari([0, 1, 0, 1], [0, 0, 1, 1]) + 0.5),
    ]
    worst = float(max(checks))
    criterion(worst <= 1e-12, f"max deviation {worst:.1e}")
    assert worst <= 1e-12


# -- 4. metric oracles -------------------------------------------------------


def brute_acc(pred, truth):
    p_ids, t_ids = np.unique(pred), np.unique(truth)
    size = max(len(p_ids), len(t_ids))
    p_idx, t_idx = np.searchsorted(p_ids, pred), np.searchsorted(t_ids, truth)
    best = 0
    for perm in itertools.permutations(range(size)):
        best = max(best, int(np.sum(np.asarray(perm)[p_idx] == t_idx)))
    return best / len(pred)


def test_criterion_04_metric_oracles(criterion):
    r = np.random.default_rng(4)
    mismatches = 0
    for _ in range(200):
        n, k = int(r.integers(1, 41)), int(r.integers(1, 7))
        pred, truth = r.integers(0, k, n), r.integers(0, int(r.integers(1, 7)), n)
        mismatches += acc(pred, truth) != brute_acc(pred, truth)
    mean_ari = float(np.mean([ari(r.integers(0, 3, 100), r.integers(0, 3, 100)) for _ in range(1000)]))
    ok = mismatches == 0 and abs(mean_ari) <= 0.02
    criterion(ok, f"acc mismatches {mismatches}/200, mean random ARI {mean_ari:+.4f}")
    assert mismatches == 0
    assert abs(mean_ari) <= 0.02


# -- 5. k-means oracle -------------------------------------------------------


def best_two_partition(X):
    best = np.inf
    for mask in itertools.product([0, 1], repeat=len(X) - 1):
        labels = np.array((0,) + mask)
        if labels.max() == 0:
            continue
        best = min(best, sum(((X[labels == c] - X[labels == c].mean(0)) ** 2).sum() for c in (0, 1)))
    return best


def test_criterion_05_kmeans_oracle(criterion):
    r = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        X = r.standard_normal((int(r.integers(2, 11)), int(r.integers(1, 4))))
        oracle = best_two_partition(X)
        worst = max(worst, abs(kmeans_fit(X, 2).inertia - oracle) / max(oracle, 1e-300))
    criterion(worst <= 1e-9, f"max relative inertia gap {worst:.1e}")
    assert worst <= 1e-9


# -- 6. end-to-end DDAC ------------------------------------------------------


@pytest.fixture(scope="module")
def ring_baselines():
    return {s: acc(kmeans_fit(embedded_rings(seed=s)[0], 2, seed=s).labels, embedded_rings(seed=s)[1])
            for s in RING_SEEDS}


@pytest.mark.slow
def test_criterion_06_end_to_end_ddac(criterion, ring_baselines):
    X, y = gaussian_blobs(n=1000, d=20, k=4, separation=10.0, seed=0)
    start = time.perf_counter()
    blob_acc = acc(train_ddac(X, DdacConfig(k=4, train_epochs=50, seed=0)).labels, y)
    elapsed = time.perf_counter() - start

    ring_acc = []
    for s in RING_SEEDS:
        X, y = embedded_rings(seed=s)
        ring_acc.append(acc(train_ddac(X, DdacConfig(k=2, hidden_dims=RING_ARCH, seed=s)).labels, y))
    km = float(np.mean(list(ring_baselines.values())))
    dd = float(np.mean(ring_acc))
    ok = blob_acc == 1.0 and elapsed < 300 and dd >= km + 0.10
    criterion(ok, f"blobs ACC {blob_acc:.3f} in {elapsed:.0f}s; rings DDAC {dd:.3f} vs k-means {km:.3f}")
    assert blob_acc == 1.0
    assert elapsed < 300
    assert dd >= km + 0.10


# -- 7. end-to-end DDAC-G ----------------------------------------------------


@pytest.mark.slow
def test_criterion_07_end_to_end_ddacg(criterion):
    scores, times = [], []
    for s in range(5):
        X, y, A = stochastic_block_model(sizes=(200, 200, 200), p_in=0.2, p_out=0.01, feature_noise=1.0, seed=s)
        start = time.perf_counter()
        scores.append(acc(train_ddacg(X, A, DdacgConfig(k=3, seed=s)).labels, y))
        times.append(time.perf_counter() - start)
    mean = float(np.mean(scores))
    ok = mean >= 0.9 and max(times) < 300
    criterion(ok, f"mean ACC {mean:.3f} {[round(a, 3) for a in scores]}, slowest run {max(times):.0f}s")
    assert mean >= 0.9
    assert max(times) < 300


# -- 8. invariance -----------------------------------------------------------


def test_criterion_08_disc_invariance(criterion):
    r = np.random.default_rng(8)
    worst = 0.0
    # states at scale 10 keep the 1e-8 denominator guard far below double precision of the ratio
    for _ in range(50):
        n, k, d = int(r.integers(3, 30)), int(r.integers(2, 5)), int(r.integers(2, 6))
        Z, mu = 10 * r.standard_normal((n, d)), 10 * r.standard_normal((k, d))
        P = target_distribution(soft_assign(Z, mu))
        t = confidence_mask(P, 0.3)
        if t.sum() == 0:
            continue
        base = disc_loss(Z, mu, P, t).value[0, 0]
        R, _ = np.linalg.qr(r.standard_normal((d, d)))
        variants = [disc_loss(c * Z, c * mu, P, t).value[0, 0] for c in (0.5, 2.0, 10.0)]
        variants.append(disc_loss(Z @ R, mu @ R, P, t).value[0, 0])
        worst = max(worst, max(abs(v - base) / abs(base) for v in variants))
    criterion(worst < 1e-10, f"max relative change {worst:.1e}")
    assert worst < 1e-10


# -- 9. determinism ----------------------------------------------------------


def test_criterion_09_cli_determinism(criterion, tmp_path):
    X, y = gaussian_blobs(n=200, d=10, k=2, seed=7)
    save_features(tmp_path / "blobs.csv", X, y)
    small = ["--hidden-dims", "32,32,64", "--pretrain-epochs", "10"]
    identical = {}
    for command in ("train", "train-graph"):
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / f"{command}-{run}"
            argv = [command, "--data", str(tmp_path / "blobs.csv"), "--k", "2", "--epochs", "50", "--seed", "7",
                    "--out", str(out), *small]
            assert main(argv) == 0
            outputs.append((out / "labels.csv").read_bytes())
        identical[command] = outputs[0] == outputs[1]
    ok = all(identical.values())
    criterion(ok, json.dumps(identical))
    assert ok


# -- 10. ablation direction --------------------------------------------------


@pytest.mark.slow
def test_criterion_10_ablation_direction(criterion):
    enabled = dict(beta=0.01, gamma=1e-5, delta=0.6)
    # delta must be positive; any value below 1/k masks nothing, as delta = 0 would
    ablated = dict(beta=0.0, gamma=0.0, delta=1e-9)
    scores = {"enabled": [], "ablated": []}
    for s in RING_SEEDS:
        X, y = embedded_rings(seed=s)
        for name, extra in (("enabled", enabled), ("ablated", ablated)):
            cfg = DdacConfig(k=2, hidden_dims=RING_ARCH, seed=s, **extra)
            scores[name].append(acc(train_ddac(X, cfg).labels, y))
    full, abl = float(np.mean(scores["enabled"])), float(np.mean(scores["ablated"]))
    criterion(full >= abl, f"enabled {full:.3f} {scores['enabled']} vs ablated {abl:.3f} {scores['ablated']}")
    assert full >= abl
