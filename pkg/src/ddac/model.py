"""DDAC: autoencoder clustering with discriminant and orthogonality regularizers."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .autoencoder import (
    AutoencoderParams,
    batches,
    decode,
    encode,
    encoder_activations,
    leaves_for,
    pretrain,
    reconstruction_loss,
)
from .diffmat import Tape
from .kmeans import kmeans_fit
from .losses import (
    LossTerms,
    clus_loss,
    confidence_mask,
    disc_loss,
    orth_loss,
    soft_assign,
    target_distribution,
    total_loss,
    warn_if_empty,
)
from .metrics import evaluate
from .optim import Adam

logger = logging.getLogger(__name__)

PRESETS = {
    "mnist": {"beta": 0.01, "gamma": 1e-5, "hidden_dims": (500, 500, 1000)},
    "fashion": {"beta": 0.005, "gamma": 1e-3, "hidden_dims": (500, 500, 2000)},
    "usps": {"beta": 1e-3, "gamma": 1e-2, "lr": 1e-3, "k_neighbors": 3, "hidden_dims": (500, 500, 2000)},
}


@dataclass
class DdacConfig:
    k: int = 2
    alpha: float = 0.1
    beta: float = 0.01
    gamma: float = 1e-5
    delta: float = 0.3
    d_prime: int = 10
    hidden_dims: tuple = (500, 500, 2000)
    lr: float = 1e-3
    pretrain_epochs: int = 50
    train_epochs: int = 200
    batch_size: int = 512
    kmeans_restarts: int = 20
    full_batch_max: int = 10000
    seed: int = 0

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        self.validate()

    def validate(self) -> None:
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights alpha, beta, gamma must be non-negative")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.k < 2:
            raise ValueError("need at least two clusters")
        if self.train_epochs < 1:
            raise ValueError("train_epochs must be at least 1")
        if self.pretrain_epochs < 0 or self.batch_size < 1 or self.d_prime < 1:
            raise ValueError("pretrain_epochs, batch_size and d_prime must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def field_names(cls) -> list:
        return [f.name for f in fields(cls)]


@dataclass
class TrainResult:
    labels: np.ndarray
    params: AutoencoderParams
    centroids: np.ndarray
    history: list = field(default_factory=list)
    gcn_weights: list | None = None
    predictions: np.ndarray | None = None


def seeds(seed: int, count: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def initial_state(X, config: DdacConfig, params: AutoencoderParams | None, rngs):
    """Pretrained autoencoder and k-means centroids on its latent codes."""
    init_rng, pretrain_rng = rngs
    if params is None:
        params = AutoencoderParams.init((X.shape[1], *config.hidden_dims, config.d_prime), init_rng)
        if config.pretrain_epochs > 0:
            params = pretrain(X, params, config.pretrain_epochs, config.batch_size, config.lr, pretrain_rng)
    elif params.input_dim != X.shape[1]:
        raise ValueError(f"pretrained autoencoder expects {params.input_dim} features, data has {X.shape[1]}")
    Z = encode(X, params)
    km = kmeans_fit(Z, config.k, restarts=config.kmeans_restarts, seed=config.seed)
    return params.copy(), km.centroids.copy()


def ddac_terms(X, leaves, depth, config, P=None, t=None):
    """Build the full DDAC objective on the tape holding ``leaves``.

    When ``P`` is omitted the targets and mask come from this forward pass.
    Returns the loss terms, ``Q``, ``P`` and ``t``.
    """
    z = encoder_activations(X, leaves, depth)[-1]
    mu = leaves["mu"]
    Q = soft_assign(z, mu)
    if P is None:
        P = target_distribution(Q)
        t = confidence_mask(P, config.delta)
    recon = reconstruction_loss(X, decode(z, leaves, depth))
    clus = clus_loss(Q, P, t)
    disc = disc_loss(z, mu, P, t)
    orth = orth_loss(z, t)
    total = total_loss(recon, clus, disc, orth, config.alpha, config.beta, config.gamma)
    return LossTerms(recon, clus, disc, orth, total), Q, P, t


def _emit(record, history, log_stream):
    history.append(record)
    if log_stream is not None:
        log_stream.write(json.dumps(record, sort_keys=True) + "\n")
        log_stream.flush()


def train_ddac(X, config: DdacConfig, y=None, params: AutoencoderParams | None = None,
               log_stream=None) -> TrainResult:
    """Pretrain (unless ``params`` is given), seed centroids, then run the DDAC loop.

    Each epoch recomputes ``Q``, ``P`` and the mask from the current model.
    Up to ``full_batch_max`` rows an epoch is one full-batch Adam step;
    beyond that ``P`` and ``t`` are fixed for the epoch and Adam runs over
    mini-batches of ``batch_size``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < config.k:
        raise ValueError(f"cannot form {config.k} clusters from {n} samples")
    init_rng, pretrain_rng, batch_rng = seeds(config.seed, 3)
    params, mu = initial_state(X, config, params, (init_rng, pretrain_rng))
    variables = dict(params.weights)
    variables["mu"] = mu
    opt = Adam(lr=config.lr)
    depth = params.depth
    history = []

    for epoch in range(config.train_epochs):
        if n <= config.full_batch_max:
            tape = Tape()
            leaves = leaves_for(tape, variables)
            terms, Q, _, t = ddac_terms(X, leaves, depth, config)
            warn_if_empty(t, epoch)
            steps = [(tape, leaves, terms, n)]
        else:
            Q = soft_assign(encode(X, params), mu)
            P = target_distribution(Q)
            t = confidence_mask(P, config.delta)
            warn_if_empty(t, epoch)
            steps = _minibatch_steps(X, variables, depth, config, P, t, batch_rng)
        sums = dict.fromkeys(("recon", "clus", "disc", "orth", "total"), 0.0)
        for tape, leaves, terms, size in steps:
            vals = terms.values()
            if not np.isfinite(vals["total"]):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            tape.backward(terms.total)
            opt.step(variables, {k: v.grad for k, v in leaves.items()})
            for key in sums:
                sums[key] += vals[key] * size / n
        record = {"epoch": epoch, **sums, "confident_count": int(t.sum())}
        if y is not None:
            record.update(evaluate(_value(Q).argmax(axis=1), y))
        _emit(record, history, log_stream)

    labels = soft_assign(encode(X, params), mu).argmax(axis=1)
    return TrainResult(labels, params, mu, history)


def _value(x):
    return x.value if hasattr(x, "value") else x


def _minibatch_steps(X, variables, depth, config, P, t, rng):
    """Lazily build one tape per mini-batch, after the previous update has landed."""
    for idx in batches(X.shape[0], config.batch_size, rng):
        tape = Tape()
        leaves = leaves_for(tape, variables)
        terms = ddac_terms(X[idx], leaves, depth, config, P[idx], t[idx])[0]
        yield tape, leaves, terms, len(idx)


class DDAC(ClusterMixin, TransformerMixin, BaseEstimator):
    """Deep discriminant-analysis clustering.

    An autoencoder is pretrained on reconstruction, centroids are seeded by
    k-means on its latent codes, and then encoder, decoder and centroids are
    trained jointly on reconstruction + self-training KL + discriminant ratio
    + latent orthogonality. Labels are the argmax of the soft assignment.

    Parameters mirror :class:`DdacConfig`; ``n_clusters`` is its ``k``.
    ``pretrained`` may hold an :class:`AutoencoderParams` to skip pretraining.
    """

    def __init__(self, n_clusters=2, *, alpha=0.1, beta=0.01, gamma=1e-5, delta=0.3, d_prime=10,
                 hidden_dims=(500, 500, 2000), lr=1e-3, pretrain_epochs=50, train_epochs=200,
                 batch_size=512, kmeans_restarts=20, full_batch_max=10000, random_state=0,
                 pretrained=None, log_stream=None):
        self.n_clusters = n_clusters
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.delta = delta
        self.d_prime = d_prime
        self.hidden_dims = hidden_dims
        self.lr = lr
        self.pretrain_epochs = pretrain_epochs
        self.train_epochs = train_epochs
        self.batch_size = batch_size
        self.kmeans_restarts = kmeans_restarts
        self.full_batch_max = full_batch_max
        self.random_state = random_state
        self.pretrained = pretrained
        self.log_stream = log_stream

    def _config(self) -> DdacConfig:
        return DdacConfig(
            k=self.n_clusters, alpha=self.alpha, beta=self.beta, gamma=self.gamma, delta=self.delta,
            d_prime=self.d_prime, hidden_dims=self.hidden_dims, lr=self.lr,
            pretrain_epochs=self.pretrain_epochs, train_epochs=self.train_epochs,
            batch_size=self.batch_size, kmeans_restarts=self.kmeans_restarts,
            full_batch_max=self.full_batch_max, seed=self.random_state or 0,
        )

    def fit(self, X, y=None):
        """Train on ``X``. ``y``, if given, is only used for per-epoch metrics."""
        X = check_array(X, dtype=np.float64)
        result = train_ddac(X, self._config(), y=y, params=self.pretrained, log_stream=self.log_stream)
        self.labels_ = result.labels
        self.autoencoder_ = result.params
        self.cluster_centers_ = result.centroids
        self.history_ = result.history
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        return encode(check_array(X, dtype=np.float64), self.autoencoder_)

    def predict_proba(self, X):
        return soft_assign(self.transform(X), self.cluster_centers_)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)
