"""Adam optimizer with bias correction and non-finite-gradient batch skipping."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["Adam"]


class Adam:
    """Standard Adam. A step with any non-finite gradient entry is rejected
    wholesale and counted in ``skipped_steps`` instead of poisoning the
    parameters."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.skipped_steps = 0

    def step(self) -> bool:
        """Apply one update from the accumulated ``.grad`` buffers.

        Returns False (and increments ``skipped_steps``) if any gradient
        entry is non-finite; parameters and moments are left untouched.
        """
        grads = []
        for p in self.params:
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                self.skipped_steps += 1
                return False
            grads.append(g)

        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            mhat = m / bc1
            vhat = v / bc2
            p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(np.float32)
        return True

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment buffers and step counter, keyed for checkpointing."""
        out = {"t": np.array([self.t], dtype=np.float32),
               "hyper": np.array([self.lr, self.beta1, self.beta2, self.eps],
                                 dtype=np.float32)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    def load_state_arrays(self, state: dict[str, np.ndarray]):
        self.t = int(state["t"][0])
        hyper = state["hyper"]
        self.lr, self.beta1, self.beta2, self.eps = (float(h) for h in hyper)
        for i in range(len(self.params)):
            self.m[i] = np.asarray(state[f"m{i}"], dtype=np.float32).reshape(self.m[i].shape)
            self.v[i] = np.asarray(state[f"v{i}"], dtype=np.float32).reshape(self.v[i].shape)
