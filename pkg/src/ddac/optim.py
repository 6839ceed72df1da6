"""Adam with bias correction, over a name -> array parameter mapping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffmat import NonFiniteError, ShapeError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


class Adam:
    """Adam optimizer.

    Parameters are updated in place. Each parameter's moments are keyed by
    its name, so the order in which parameters are passed does not matter.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps_stab: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps_stab=eps_stab)

    def step(self, params: dict, grads: dict) -> None:
        st = self.state
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter {name!r}")

        st.step_count += 1
        t = st.step_count
        bc1 = 1.0 - st.beta1**t
        bc2 = 1.0 - st.beta2**t
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            m = st.first_moment.setdefault(name, np.zeros_like(p))
            v = st.second_moment.setdefault(name, np.zeros_like(p))
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * (g * g)
            p -= st.lr * (m / bc1) / (np.sqrt(v / bc2) + st.eps_stab)
