"""Adam, Nadam, and the LookAhead wrapper.

All optimizers mutate the ``.data`` arrays of a flat name -> Tensor
parameter dict in place, between backward passes. Update rules, with
g the gradient, t the 1-based step count, and hats the bias-corrected
moments m_hat = m / (1 - beta1^t), v_hat = v / (1 - beta2^t):

  Adam:   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
          theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
  Nadam:  same moments; Nesterov lookahead on the first-moment term:
          theta <- theta - lr * (b1 m_hat + (1-b1) g / (1-b1^t))
                            / (sqrt(v_hat) + eps)
  LookAhead: every k inner steps, slow <- slow + alpha (fast - slow)
          and fast resets to slow.
"""

from __future__ import annotations

import numpy as np

from .tensor import NonFiniteError

__all__ = ["Adam", "Nadam", "Lookahead", "make_optimizer"]


class _AdamBase:
    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm=None):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def _prepare(self, grads):
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for {name!r}")
        if self.clip_norm is not None:
            total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if total > self.clip_norm:
                scale = self.clip_norm / total
                grads = {k: g * scale for k, g in grads.items()}
        return grads

    def step(self, grads):
        grads = self._prepare(grads)
        self.t += 1
        for name, g in grads.items():
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            self.params[name].data -= self.lr * self._numerator(m_hat, g) \
                / (np.sqrt(v_hat) + self.eps)

    def _numerator(self, m_hat, g):
        raise NotImplementedError


class Adam(_AdamBase):
    def _numerator(self, m_hat, g):
        return m_hat


class Nadam(_AdamBase):
    def _numerator(self, m_hat, g):
        return self.beta1 * m_hat + (1 - self.beta1) * g \
            / (1 - self.beta1 ** self.t)


class Lookahead:
    """Slow/fast weight wrapper; synchronizes every ``sync_period`` steps."""

    def __init__(self, inner, sync_period=3, alpha=0.5):
        if sync_period < 1:
            raise ValueError("sync_period must be >= 1")
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        self.inner = inner
        self.params = inner.params
        self.sync_period = sync_period
        self.alpha = alpha
        self.counter = 0
        self.slow = {k: p.data.copy() for k, p in inner.params.items()}

    def step(self, grads):
        self.inner.step(grads)
        self.counter += 1
        if self.counter % self.sync_period == 0:
            for name, p in self.params.items():
                # (1-a) slow + a fast: exactly fast when alpha == 1
                slow = (1.0 - self.alpha) * self.slow[name] + self.alpha * p.data
                self.slow[name] = slow
                p.data[...] = slow


def make_optimizer(params, kind="lookahead_nadam", lr=0.0005, sync_period=3,
                   alpha=0.5, clip_norm=None):
    if kind == "adam":
        return Adam(params, lr=lr, clip_norm=clip_norm)
    if kind == "nadam":
        return Nadam(params, lr=lr, clip_norm=clip_norm)
    if kind == "lookahead_nadam":
        inner = Nadam(params, lr=lr, clip_norm=clip_norm)
        return Lookahead(inner, sync_period=sync_period, alpha=alpha)
    raise ValueError(f"unknown optimizer kind {kind!r}")
