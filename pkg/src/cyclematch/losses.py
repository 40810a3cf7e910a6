"""Cycle-consistency reconstruction loss and epipolar side loss.

Both terms are normalized by n^2 so scalars are comparable across graph
sizes and one geometric weight transfers between instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .geometry import GeometricPrior


@dataclass(frozen=True)
class LossConfig:
    lambda_geom: float = 1.0
    metric: str = "L1"

    def __post_init__(self):
        if self.lambda_geom < 0:
            raise ValueError("lambda_geom must be nonnegative")
        if self.metric != "L1":
            raise ValueError("only the L1 metric is supported")


def cycle_loss(A: np.ndarray, E: np.ndarray):
    """Mean absolute reconstruction error of the adjacency by EE^T.

    loss = (1/n^2) sum_ij |(EE^T)_ij - A_ij|. The gradient uses the
    subgradient sign(0) = 0 at kinks: dL/dE = (D + D^T) E / n^2 with
    D = sign(EE^T - A).
    """
    A = np.asarray(A, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch("A must be square")
    if E.ndim != 2 or E.shape[0] != n:
        raise DimensionMismatch("E must have one row per node")
    R = E @ E.T - A
    loss = np.abs(R).sum() / (n * n)
    D = np.sign(R)
    grad = ((D + D.T) @ E) / (n * n)
    return loss, grad


def geometric_loss(prior: GeometricPrior, E: np.ndarray):
    """Epipolar penalty (1/n^2) sum_ij G_ij (E_i . E_j) = tr(G^T EE^T)/n^2.

    Gradient 2 G E / n^2 (G symmetric). Low wherever high similarity is
    assigned only to pairs with small epipolar residual.
    """
    G = prior.G
    E = np.asarray(E, dtype=np.float64)
    n = G.shape[0]
    if E.ndim != 2 or E.shape[0] != n:
        raise DimensionMismatch("E must have one row per prior node")
    loss = float(np.einsum("ij,ij->", G, E @ E.T)) / (n * n)
    grad = (2.0 / (n * n)) * (G @ E)
    return loss, grad


def combined_loss(A: np.ndarray, prior, E: np.ndarray, cfg: LossConfig | None = None):
    """cycle_loss plus lambda_geom * geometric_loss when a prior is given.

    Test-time graphs carry no poses; pass prior=None to get the pure
    reconstruction loss.
    """
    if cfg is None:
        cfg = LossConfig()
    loss, grad = cycle_loss(A, E)
    if prior is not None and cfg.lambda_geom > 0.0:
        gl, gg = geometric_loss(prior, E)
        loss = loss + cfg.lambda_geom * gl
        grad = grad + cfg.lambda_geom * gg
    return loss, grad
