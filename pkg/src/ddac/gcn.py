"""DDAC-G: a GCN branch fused with autoencoder features, trained with a dual KL target."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array

from . import diffmat as dm
from .autoencoder import AutoencoderParams, decode, encoder_activations, glorot, leaves_for, reconstruction_loss
from .diffmat import Node, ShapeError, Tape
from .graph import SparseAdjacency, knn_graph, normalize_adjacency
from .losses import (
    LossTerms,
    confidence_mask,
    disc_loss,
    masked_kl,
    orth_loss,
    soft_assign,
    target_distribution,
    warn_if_empty,
)
from .metrics import evaluate
from .model import DdacConfig, TrainResult, _emit, initial_state, seeds
from .optim import Adam


@dataclass
class DdacgConfig(DdacConfig):
    alpha1: float = 0.1
    alpha2: float = 0.01
    epsilon: float = 0.5
    k_neighbors: int = 3
    pretrain_epochs: int = 30

    def validate(self) -> None:
        super().validate()
        if not 0 <= self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if min(self.alpha1, self.alpha2) < 0:
            raise ValueError("alpha1 and alpha2 must be non-negative")


@dataclass
class GcnActivations:
    hidden: list
    fused: list
    Y: Node


def init_gcn(widths, k: int, rng) -> dict:
    """One bias-free weight per layer: the encoder widths, then latent -> k."""
    dims = (*widths, k)
    return {f"gcn{i}.W": glorot(a, b, rng) for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))}


def gcn_forward(X, norm_adj, ae_acts, weights, epsilon: float = 0.5) -> GcnActivations:
    """Propagate ``X`` through the GCN, mixing in ``ae_acts`` before every layer after the first.

    ``weights`` is the ordered list of layer weights (nodes or arrays) and
    ``ae_acts`` the encoder activations with matching widths, one per
    non-final layer.
    """
    L = len(weights)
    if len(ae_acts) != L - 1:
        raise ShapeError(f"{L} GCN layers need {L - 1} autoencoder activations, got {len(ae_acts)}")
    hidden, fused = [], []
    h = dm.relu(dm.spmm(norm_adj, dm.matmul(X, weights[0])))
    for layer in range(1, L):
        z = ae_acts[layer - 1]
        if z.shape != h.shape:
            raise ShapeError(f"fusion at layer {layer}: GCN features {h.shape} vs autoencoder {z.shape}")
        hidden.append(h)
        mixed = dm.add(dm.scale(h, 1.0 - epsilon), dm.scale(z, epsilon))
        fused.append(mixed)
        h = dm.spmm(norm_adj, dm.matmul(mixed, weights[layer]))
        if layer < L - 1:
            h = dm.relu(h)
    return GcnActivations(hidden, fused, dm.softmax_rows(h))


def g_clus_loss(P, Q, Y, t, alpha1: float = 0.1, alpha2: float = 0.01) -> Node:
    """``alpha1 KL(P||Q) + alpha2 KL(P||Y)`` over the confident rows."""
    return dm.add(dm.scale(masked_kl(P, Q, t), alpha1), dm.scale(masked_kl(P, Y, t), alpha2))


def ddacg_terms(X, norm_adj, leaves, depth, n_gcn, config, P=None, t=None):
    """Build the DDAC-G objective on the tape holding ``leaves``.

    When ``P`` is omitted the targets and mask come from this forward pass.
    Returns the loss terms, ``Q``, ``Y``, ``P`` and ``t``.
    """
    acts = encoder_activations(X, leaves, depth)
    z = acts[-1]
    mu = leaves["mu"]
    Q = soft_assign(z, mu)
    if P is None:
        P = target_distribution(Q)
        t = confidence_mask(P, config.delta)
    gcn = gcn_forward(X, norm_adj, acts, [leaves[f"gcn{i}.W"] for i in range(n_gcn)], config.epsilon)
    recon = reconstruction_loss(X, decode(z, leaves, depth))
    clus = g_clus_loss(P, Q, gcn.Y, t, config.alpha1, config.alpha2)
    disc = disc_loss(z, mu, P, t)
    orth = orth_loss(z, t)
    total = dm.add(dm.add(recon, clus), dm.add(dm.scale(disc, config.beta), dm.scale(orth, config.gamma)))
    return LossTerms(recon, clus, disc, orth, total), Q, gcn.Y, P, t


def _predict(X, norm_adj, variables, depth, n_gcn, epsilon):
    tape = Tape()
    leaves = leaves_for(tape, variables)
    acts = encoder_activations(X, leaves, depth)
    Q = soft_assign(acts[-1], leaves["mu"])
    Y = gcn_forward(X, norm_adj, acts, [leaves[f"gcn{i}.W"] for i in range(n_gcn)], epsilon).Y
    return Q.value, Y.value


def train_ddacg(X, adjacency: SparseAdjacency, config: DdacgConfig, y=None,
                params: AutoencoderParams | None = None, log_stream=None) -> TrainResult:
    """Full-batch DDAC-G training; labels are the argmax of the GCN prediction."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    if adjacency.n != n:
        raise ValueError(f"graph has {adjacency.n} nodes but data has {n} rows")
    norm_adj = normalize_adjacency(adjacency).to_scipy()
    init_rng, pretrain_rng, gcn_rng = seeds(config.seed, 3)
    params, mu = initial_state(X, config, params, (init_rng, pretrain_rng))
    variables = dict(params.weights)
    variables["mu"] = mu
    variables.update(init_gcn(params.widths, config.k, gcn_rng))
    n_gcn = params.depth + 1
    depth = params.depth
    opt = Adam(lr=config.lr)
    history = []

    for epoch in range(config.train_epochs):
        tape = Tape()
        leaves = leaves_for(tape, variables)
        terms, _, Y, _, t = ddacg_terms(X, norm_adj, leaves, depth, n_gcn, config)
        warn_if_empty(t, epoch)
        vals = terms.values()
        if not np.isfinite(vals["total"]):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        tape.backward(terms.total)
        opt.step(variables, {k: v.grad for k, v in leaves.items()})
        record = {"epoch": epoch, **vals, "confident_count": int(t.sum()), "gcn": True}
        if y is not None:
            record.update(evaluate(Y.value.argmax(axis=1), y))
        _emit(record, history, log_stream)

    _, Y = _predict(X, norm_adj, variables, depth, n_gcn, config.epsilon)
    gcn_weights = [variables[f"gcn{i}.W"] for i in range(n_gcn)]
    return TrainResult(Y.argmax(axis=1), params, mu, history, gcn_weights, Y)


class DDACG(ClusterMixin, BaseEstimator):
    """Graph-aware DDAC.

    Transductive: ``fit`` clusters the nodes of one graph. When no
    ``adjacency`` is passed to ``fit``, a kNN graph over ``X`` is built with
    ``k_neighbors`` neighbors.
    """

    def __init__(self, n_clusters=2, *, alpha1=0.1, alpha2=0.01, beta=0.01, gamma=1e-5, delta=0.3,
                 epsilon=0.5, k_neighbors=3, d_prime=10, hidden_dims=(500, 500, 2000), lr=1e-3,
                 pretrain_epochs=30, train_epochs=200, batch_size=512, kmeans_restarts=20,
                 random_state=0, pretrained=None, log_stream=None):
        self.n_clusters = n_clusters
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.beta = beta
        self.gamma = gamma
        self.delta = delta
        self.epsilon = epsilon
        self.k_neighbors = k_neighbors
        self.d_prime = d_prime
        self.hidden_dims = hidden_dims
        self.lr = lr
        self.pretrain_epochs = pretrain_epochs
        self.train_epochs = train_epochs
        self.batch_size = batch_size
        self.kmeans_restarts = kmeans_restarts
        self.random_state = random_state
        self.pretrained = pretrained
        self.log_stream = log_stream

    def _config(self) -> DdacgConfig:
        return DdacgConfig(
            k=self.n_clusters, alpha1=self.alpha1, alpha2=self.alpha2, beta=self.beta, gamma=self.gamma,
            delta=self.delta, epsilon=self.epsilon, k_neighbors=self.k_neighbors, d_prime=self.d_prime,
            hidden_dims=self.hidden_dims, lr=self.lr, pretrain_epochs=self.pretrain_epochs,
            train_epochs=self.train_epochs, batch_size=self.batch_size,
            kmeans_restarts=self.kmeans_restarts, seed=self.random_state or 0,
        )

    def fit(self, X, y=None, adjacency=None):
        X = check_array(X, dtype=np.float64)
        if adjacency is None:
            adjacency = knn_graph(X, self.k_neighbors)
        elif not isinstance(adjacency, SparseAdjacency):
            adjacency = SparseAdjacency.from_scipy(adjacency)
        result = train_ddacg(X, adjacency, self._config(), y=y, params=self.pretrained,
                             log_stream=self.log_stream)
        self.labels_ = result.labels
        self.autoencoder_ = result.params
        self.cluster_centers_ = result.centroids
        self.gcn_weights_ = result.gcn_weights
        self.predictions_ = result.predictions
        self.history_ = result.history
        self.adjacency_ = adjacency
        self.n_features_in_ = X.shape[1]
        return self
