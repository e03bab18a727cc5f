"""Training losses: time-frequency alignment, classification, redundancy.

``align_loss`` is the self-supervised pretext objective (predictive distance
between L2-normalized branch projections, no negative pairs).
``cross_corr_loss`` is an optional extra regularizer that drives the batch
cross-correlation of the two projection matrices toward the identity; it is
off by default. ``final_loss`` combines everything with configurable
weights.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .errors import ContractError, DimensionError

import numpy as np


@dataclass
class LossWeights:
    """Weights for the combined objective (all must be finite and >= 0)."""

    cls_time: float = 1.0
    cls_freq: float = 1.0
    meta: float = 1.0
    use_cross_corr: bool = False
    cross_corr_off_diag: float = 5e-3
    stop_target: bool = False

    def __post_init__(self):
        vals = (self.cls_time, self.cls_freq, self.meta, self.cross_corr_off_diag)
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise ContractError("loss weights must be finite and >= 0")


def l2_normalize_rows(z: T.Tensor, eps: float = 1e-12) -> T.Tensor:
    norms = T.sqrt(T.add(T.reduce_sum(T.mul(z, z), axis=-1, keepdims=True), T.Tensor(eps)))
    return T.div(z, norms)


def align_loss(z_time: T.Tensor, z_freq: T.Tensor, stop_target: bool = False) -> T.Tensor:
    """Mean squared distance between L2-normalized projection rows.

    The frequency branch predicts the time branch's embedding; with
    ``stop_target`` the time branch is treated as a fixed target and receives
    no gradient from this loss.
    """
    if z_time.shape != z_freq.shape:
        raise DimensionError(f"alignment shapes differ: {z_time.shape} vs {z_freq.shape}")
    target = z_time.detach() if stop_target else z_time
    diff = T.sub(l2_normalize_rows(z_freq), l2_normalize_rows(target))
    per_row = T.reduce_sum(T.mul(diff, diff), axis=-1)
    return T.mean(per_row)


def cls_loss(logits: T.Tensor, labels) -> T.Tensor:
    """Mean cross-entropy of integer labels against logits rows."""
    return T.cross_entropy(logits, labels)


def cross_corr_loss(
    z_a: T.Tensor, z_b: T.Tensor, off_diag_weight: float = 5e-3
) -> T.Tensor:
    """Penalty that is zero exactly when the batch cross-correlation is I.

    Columns are batch-normalized first, so the diagonal penalty measures
    per-feature decorrelation from perfect (unit) correlation and the
    off-diagonal penalty measures redundancy between features.
    """
    if z_a.shape != z_b.shape:
        raise DimensionError(f"shapes differ: {z_a.shape} vs {z_b.shape}")
    if z_a.ndim != 2 or z_a.shape[0] < 2:
        raise ContractError("cross-correlation needs a batch of at least 2 rows")
    b, d = z_a.shape

    def normalize(z):
        mu = T.mean(z, axis=0, keepdims=True)
        centered = T.sub(z, mu)
        var = T.mean(T.mul(centered, centered), axis=0, keepdims=True)
        return T.div(centered, T.sqrt(T.add(var, T.Tensor(1e-12))))

    c = T.scale(T.matmul(T.transpose(normalize(z_a)), normalize(z_b)), 1.0 / b)
    eye = T.Tensor(np.eye(d))
    diag = T.reduce_sum(T.mul(c, eye), axis=-1)
    on_term = T.reduce_sum(T.mul(T.sub(diag, T.Tensor(np.ones(d))), T.sub(diag, T.Tensor(np.ones(d)))))
    off = T.mul(c, T.Tensor(1.0 - np.eye(d)))
    off_term = T.reduce_sum(T.mul(off, off))
    return T.add(on_term, T.scale(off_term, off_diag_weight))


def final_loss(
    align: T.Tensor,
    cls_time: T.Tensor,
    cls_freq: T.Tensor,
    meta: T.Tensor,
    weights: LossWeights,
) -> T.Tensor:
    """align + w1*cls_time + w2*cls_freq + w3*meta."""
    total = T.add(align, T.scale(cls_time, weights.cls_time))
    total = T.add(total, T.scale(cls_freq, weights.cls_freq))
    return T.add(total, T.scale(meta, weights.meta))
