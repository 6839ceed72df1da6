"""Fully connected autoencoder: ReLU hidden layers, linear bottleneck and output."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import diffmat as dm
from .diffmat import Node, ShapeError, Tape
from .optim import Adam

logger = logging.getLogger(__name__)


@dataclass
class AutoencoderParams:
    """Encoder and decoder weights.

    ``widths`` lists the encoder widths from input to latent, e.g.
    ``(784, 500, 500, 2000, 10)``; the decoder mirrors them.
    """

    widths: tuple
    weights: dict

    @classmethod
    def init(cls, widths, rng: np.random.Generator) -> "AutoencoderParams":
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2:
            raise ValueError("need at least an input and a latent width")
        weights = {}
        for prefix, ws in (("enc", widths), ("dec", widths[::-1])):
            for i, (fan_in, fan_out) in enumerate(zip(ws[:-1], ws[1:])):
                weights[f"{prefix}{i}.W"] = glorot(fan_in, fan_out, rng)
                weights[f"{prefix}{i}.b"] = np.zeros((1, fan_out))
        return cls(widths, weights)

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def latent_dim(self) -> int:
        return self.widths[-1]

    def copy(self) -> "AutoencoderParams":
        return AutoencoderParams(self.widths, {k: v.copy() for k, v in self.weights.items()})

    def save(self, path) -> None:
        np.savez(path, widths=np.array(self.widths), **self.weights)

    @classmethod
    def load(cls, path) -> "AutoencoderParams":
        with np.load(path) as f:
            widths = tuple(int(w) for w in f["widths"])
            weights = {k: f[k].astype(np.float64) for k in f.files if k != "widths"}
        return cls(widths, weights)


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _linear(x, W: Node, b: Node) -> Node:
    return dm.add(dm.matmul(x, W), dm.broadcast_row(b, x.shape[0]))


def _stack(x, leaves, prefix, depth):
    acts = []
    h = x
    for i in range(depth):
        h = _linear(h, leaves[f"{prefix}{i}.W"], leaves[f"{prefix}{i}.b"])
        if i < depth - 1:
            h = dm.relu(h)
        acts.append(h)
    return acts


def leaves_for(tape: Tape, weights: dict) -> dict:
    return {name: tape.leaf(value, name=name) for name, value in weights.items()}


def encoder_activations(X, leaves: dict, depth: int) -> list:
    """Outputs of every encoder layer; the last entry is the latent ``Z``."""
    x = X.value if isinstance(X, Node) else np.asarray(X)
    width = leaves["enc0.W"].shape[0]
    if x.shape[1] != width:
        raise ShapeError(f"encoder expects {width} input columns, got {x.shape[1]}")
    return _stack(X, leaves, "enc", depth)


def decode(Z: Node, leaves: dict, depth: int) -> Node:
    return _stack(Z, leaves, "dec", depth)[-1]


def encode(X, params: AutoencoderParams) -> np.ndarray:
    """Latent codes for the rows of ``X``."""
    tape = Tape()
    leaves = leaves_for(tape, params.weights)
    return encoder_activations(dm.as_matrix(X), leaves, params.depth)[-1].value


def reconstruction_loss(X, Xhat: Node) -> Node:
    """``(1/2n) sum_i ||x_i - xhat_i||^2``."""
    n = Xhat.shape[0]
    return dm.scale(dm.sqfrob(dm.sub(X, Xhat)), 0.5 / n)


def reconstruct_loss(X, params: AutoencoderParams) -> float:
    tape = Tape()
    leaves = leaves_for(tape, params.weights)
    X = dm.as_matrix(X)
    z = encoder_activations(X, leaves, params.depth)[-1]
    return float(reconstruction_loss(X, decode(z, leaves, params.depth)).value[0, 0])


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index blocks covering ``range(n)`` exactly once."""
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def pretrain(X, params: AutoencoderParams, epochs: int, batch_size: int = 512, lr: float = 1e-3,
             rng: np.random.Generator | None = None) -> AutoencoderParams:
    """Minimize the reconstruction loss alone with mini-batch Adam.

    Returns a trained copy of ``params``.
    """
    if epochs < 1:
        raise ValueError("pretraining needs at least one epoch")
    rng = rng if rng is not None else np.random.default_rng(0)
    X = np.asarray(X, dtype=np.float64)
    params = params.copy()
    opt = Adam(lr=lr)
    for epoch in range(epochs):
        total = 0.0
        for idx in batches(X.shape[0], batch_size, rng):
            tape = Tape()
            leaves = leaves_for(tape, params.weights)
            xb = X[idx]
            z = encoder_activations(xb, leaves, params.depth)[-1]
            loss = reconstruction_loss(xb, decode(z, leaves, params.depth))
            value = float(loss.value[0, 0])
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite reconstruction loss in pretraining epoch {epoch}")
            tape.backward(loss)
            opt.step(params.weights, {k: v.grad for k, v in leaves.items()})
            total += value * len(idx)
        logger.debug("pretrain epoch %d recon %.6f", epoch, total / X.shape[0])
    return params
