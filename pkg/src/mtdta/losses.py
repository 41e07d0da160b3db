"""Batch losses under massively missing labels.

Two modes:

* ``mask``: missing positions are excluded from the loss; their gradient
  is exactly zero.
* ``lode`` (last-observed discounted error): when a batch has no labels
  at all for a task, the objective receives gamma times the most recent
  observed loss for that task as a detached constant. Batches with any
  present label behave exactly like masking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

__all__ = [
    "TaskBatchLabels",
    "LodeState",
    "masked_mse",
    "masked_bce",
    "lode_loss",
    "composite_loss",
]

BCE_CLAMP = 1e-12


@dataclass
class TaskBatchLabels:
    """Labels for one task over a batch; values at masked-out positions
    are never read."""
    values: np.ndarray
    present_mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.present_mask = np.asarray(self.present_mask, dtype=np.float64)
        if self.values.shape != self.present_mask.shape:
            raise T.ShapeError("labels and mask shapes differ")

    @property
    def n_present(self):
        return int(self.present_mask.sum())

    def filled(self):
        """Values with missing positions replaced by 0 (never read anyway,
        but NaN placeholders must not poison arithmetic)."""
        return np.where(self.present_mask > 0, self.values, 0.0)


def masked_mse(pred, labels):
    """Mean squared error over present positions; 0 (no gradient) if none."""
    n = labels.n_present
    if n == 0:
        return T.Tensor(0.0)
    mask = T.Tensor(labels.present_mask)
    diff = (pred - T.Tensor(labels.filled())) * mask
    return (diff * diff).sum().scale(1.0 / n)


def masked_bce(pred, labels):
    """Mean binary cross-entropy over present positions, clamped at 1e-12."""
    n = labels.n_present
    if n == 0:
        return T.Tensor(0.0)
    mask = T.Tensor(labels.present_mask)
    y = T.Tensor(labels.filled())
    p = pred.clip_min(BCE_CLAMP)
    q = (1.0 - pred).clip_min(BCE_CLAMP)
    per = y * p.log() + (1.0 - y) * q.log()
    return (per * mask).sum().scale(-1.0 / n)


@dataclass
class LodeState:
    """Per-task memory of the last observed loss."""
    gamma: float = 0.5
    last_error: float = 0.0
    observed_once: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")


def lode_loss(pred, labels, state, kind="mse"):
    """Masked loss when any label is present; otherwise a detached
    gamma-discounted copy of the last observed loss.

    Returns the loss Tensor; mutates ``state``.
    """
    loss_fn = masked_bce if kind == "bce" else masked_mse
    if labels.n_present > 0:
        loss = loss_fn(pred, labels)
        state.last_error = float(loss.data)  # detached from the tape
        state.observed_once = True
        return loss
    if not state.observed_once:
        return T.Tensor(0.0)
    return T.Tensor(state.gamma * state.last_error)


def composite_loss(task_losses, weights=None):
    """Weighted sum of per-task losses; default weights all 1."""
    if weights is None:
        weights = {task: 1.0 for task in task_losses}
    if set(weights) != set(task_losses):
        raise ValueError("weights and task losses name different tasks")
    total = T.Tensor(0.0)
    for task in task_losses:
        total = total + task_losses[task].scale(weights[task])
    return total
