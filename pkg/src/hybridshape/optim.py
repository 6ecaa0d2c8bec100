"""Adam with bias correction, over single arrays or lists of arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step", "Adam"]


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(
    params,
    grads,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update; returns new params and the advanced state.

    `params`/`grads` may be a single ndarray or a matching list of ndarrays.
    p <- p - lr * m_hat / (sqrt(v_hat) + eps).
    """
    single = isinstance(params, np.ndarray)
    plist = [params] if single else list(params)
    glist = [grads] if single else list(grads)
    if len(plist) != len(glist) or any(p.shape != g.shape for p, g in zip(plist, glist)):
        raise ValueError("parameter/gradient shapes do not match")
    if not state.m:
        state.m = [np.zeros_like(p) for p in plist]
        state.v = [np.zeros_like(p) for p in plist]

    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    out = []
    for i, (p, g) in enumerate(zip(plist, glist)):
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g**2
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
    return (out[0], state) if single else (out, state)


class Adam:
    """Stateful convenience wrapper around adam_step."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def update(self, params, grads):
        new, self.state = adam_step(
            params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps
        )
        return new
