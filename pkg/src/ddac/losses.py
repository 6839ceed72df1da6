"""Soft assignments, self-training targets and the DDAC loss terms.

The differentiable terms take tape nodes (or plain arrays, which become
constants) and return 1x1 nodes. Targets ``P`` and the mask ``t`` are always
treated as constants.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import diffmat as dm
from .diffmat import Node

logger = logging.getLogger(__name__)

EPS_DIV = 1e-8


class EmptyConfidentSetWarning(UserWarning):
    """No sample passed the confidence threshold; masked losses are zero."""


class DegenerateClusterError(ValueError):
    """A cluster has zero total soft assignment."""


def _value(x) -> np.ndarray:
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def soft_assign(Z, mu):
    """Student-t kernel assignment of the rows of ``Z`` to the centroids ``mu``.

    Returns a node when either argument is a node, otherwise an array.
    """
    k = _value(mu).shape[0]
    kernel = dm.reciprocal(dm.add_scalar(dm.pairwise_sqdist(Z, mu), 1.0))
    Q = dm.mul(kernel, dm.broadcast_col(dm.reciprocal(dm.row_sum(kernel)), k))
    if isinstance(Z, Node) or isinstance(mu, Node):
        return Q
    return Q.value


def target_distribution(Q) -> np.ndarray:
    """Square-and-renormalize ``Q`` by column frequency."""
    Q = _value(Q)
    f = Q.sum(axis=0)
    if np.any(f <= 0):
        raise DegenerateClusterError(f"cluster(s) {np.flatnonzero(f <= 0).tolist()} have zero frequency")
    w = Q**2 / f
    return w / w.sum(axis=1, keepdims=True)


def confidence_mask(P, delta: float) -> np.ndarray:
    """1.0 where a row's largest target probability exceeds ``delta``."""
    return (_value(P).max(axis=1) > delta).astype(np.float64)


def disc_loss(Z, mu, P, t, eps_div: float = EPS_DIV) -> Node:
    """Confident intra-cluster spread over (confident count x inter-centroid spread)."""
    P = _value(P)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    count = t.sum()
    if count == 0:
        return dm.scale(dm.total_sum(dm.pairwise_sqdist(Z, mu)), 0.0)
    intra = dm.total_sum(dm.mul(dm.pairwise_sqdist(Z, mu), P * t[:, None]))
    inter = dm.total_sum(dm.pairwise_sqdist(mu, mu))
    return dm.mul(intra, dm.reciprocal(dm.add_scalar(dm.scale(inter, count), eps_div)))


def orth_loss(Z, t) -> Node:
    """Squared off-diagonal Gram mass of the confident rows of ``Z``, per confident sample."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    count = t.sum()
    d = _value(Z).shape[1]
    Zhat = dm.mul(Z, np.repeat(t[:, None], d, axis=1))
    if count == 0:
        return dm.scale(dm.sqfrob(Zhat), 0.0)
    gram = dm.matmul(dm.transpose(Zhat), Zhat)
    off = dm.mul(gram, np.ones((d, d)) - np.eye(d))
    return dm.scale(dm.sqfrob(off), 1.0 / count)


def masked_kl(P, Q, t) -> Node:
    """``sum_i t_i KL(p_i || q_i)`` with ``0 log 0 = 0``."""
    P = _value(P)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    q = _value(Q)
    weight = P * t[:, None]
    live = weight > 0
    if np.any(q[live] <= 0):
        raise ValueError("KL divergence is infinite: zero prediction where the target is positive")
    entropy_part = float(np.sum(weight[live] * np.log(P[live])))
    if not np.any(live):
        return dm.scale(dm.total_sum(Q), 0.0)
    # only live entries are guaranteed positive; others get a harmless 1
    safe = dm.add(dm.mul(Q, live.astype(np.float64)), (~live).astype(np.float64))
    cross = dm.total_sum(dm.mul(dm.log(safe), weight))
    return dm.add_scalar(dm.scale(cross, -1.0), entropy_part)


def clus_loss(Q, P, t) -> Node:
    return masked_kl(P, Q, t)


def warn_if_empty(t, step=None) -> bool:
    if np.sum(t) == 0:
        msg = "no confident samples" + (f" at step {step}" if step is not None else "")
        msg += "; masked losses contribute 0"
        warnings.warn(msg, EmptyConfidentSetWarning, stacklevel=2)
        logger.warning(msg)
        return True
    return False


@dataclass
class LossTerms:
    recon: Node
    clus: Node
    disc: Node
    orth: Node
    total: Node

    def values(self) -> dict:
        return {k: float(getattr(self, k).value[0, 0]) for k in ("recon", "clus", "disc", "orth", "total")}


def total_loss(recon, clus, disc, orth, alpha: float, beta: float, gamma: float):
    """``recon + alpha*clus + beta*disc + gamma*orth``; works on nodes or floats."""
    if not any(isinstance(x, Node) for x in (recon, clus, disc, orth)):
        return recon + alpha * clus + beta * disc + gamma * orth
    out = recon
    for w, term in ((alpha, clus), (beta, disc), (gamma, orth)):
        out = dm.add(out, dm.scale(term, w))
    return out
