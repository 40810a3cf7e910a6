"""Non-learned matching baselines: spectral embedding, ridge-regularized
alternating least squares, and projected gradient ascent with doubly
stochastic projection. All emit soft match matrices in [0, 1].
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import (ConvergenceFailure, DimensionMismatch, SingularSystem,
                     SinkhornNoConverge)
from .synthgen import STREAM_SOLVER, make_rng

EIG_TOL = 1e-8
SINKHORN_TOL = 1e-6
SINKHORN_CAP = 1000
MATCHALS_MU = 1e-2

# Relative mass floor for the pgdds projection retry. Clamped spectral blocks
# on outlier-heavy instances can have rows with no support, or contract so
# slowly that Sinkhorn exhausts its sweep cap; when the bare projection fails
# we retry once on the block plus 1e-3 of its max, which converges in ~200
# sweeps. Well-posed blocks never take the floored path, so clean instances
# keep their exact projections.
PGDDS_FLOOR = 1e-3


@dataclass(frozen=True)
class SoftMatchMatrix:
    """Soft correspondence scores plus solver bookkeeping.

    objective: per-half-step ALS objective values (matchals only).
    ds_residuals: per-outer-iteration worst row/col sum deviation (pgdds only).
    """

    S: np.ndarray
    method: str
    iterations: int
    wall_time: float
    objective: tuple = ()
    ds_residuals: tuple = ()

    def __post_init__(self):
        S = np.ascontiguousarray(np.asarray(self.S, dtype=np.float64))
        S.flags.writeable = False
        object.__setattr__(self, "S", S)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("S must be square")
        if np.abs(S - S.T).max() > 1e-9:
            raise ValueError("S must be symmetric to 1e-9")
        if S.min() < 0.0 or S.max() > 1.0:
            raise ValueError("S entries must lie in [0, 1]")


def topk_eig(A: np.ndarray, k: int, tol: float = EIG_TOL):
    """k leading eigenpairs of a symmetric matrix, eigenvalues descending.

    Eigenvector signs are fixed (largest-magnitude entry positive) so results
    are reproducible. The solver contract is checked: per-pair residual
    ||Av - lambda v|| <= tol * ||A||_2 and pairwise orthogonality <= 1e-8.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch("A must be square")
    if not 1 <= k <= n:
        raise DimensionMismatch("need 1 <= k <= n")
    if np.abs(A - A.T).max() > 1e-9:
        raise DimensionMismatch("A must be symmetric")
    w, V = np.linalg.eigh(A)
    w, V = w[::-1][:k], V[:, ::-1][:, :k]
    for j in range(k):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    norm_a = np.abs(w).max() if k == n else np.abs(np.linalg.eigvalsh(A)).max()
    resid = np.linalg.norm(A @ V - V * w, axis=0)
    if (resid > tol * max(norm_a, np.finfo(float).tiny)).any():
        raise ConvergenceFailure("eigenpair residual %.3e exceeds %.1e * ||A||"
                                 % (resid.max(), tol))
    ortho = np.abs(V.T @ V - np.eye(k)).max()
    if ortho > 1e-8:
        raise ConvergenceFailure("eigenvectors not orthonormal: %.3e" % ortho)
    return w, V


def spectral(A: np.ndarray, d: int) -> SoftMatchMatrix:
    """Top-d spectral embedding; scores are clamped cosines of U sqrt(L+)."""
    t0 = time.perf_counter()
    w, V = topk_eig(A, d)
    U = V * np.sqrt(np.clip(w, 0.0, None))
    norms = np.linalg.norm(U, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    U = U / safe[:, None]
    S = np.clip(U @ U.T, 0.0, 1.0)
    S = (S + S.T) / 2.0
    return SoftMatchMatrix(S=S, method="spectral", iterations=0,
                           wall_time=time.perf_counter() - t0)


def matchals(A: np.ndarray, d: int, iters: int,
             mu: float = MATCHALS_MU) -> SoftMatchMatrix:
    """Alternating ridge least squares on A ~ U V^T.

    Each half-step exactly minimizes ||A - UV^T||_F^2 + mu(||U||^2 + ||V||^2)
    in one factor, so the recorded objective sequence is non-increasing. V is
    initialized from a fixed internal stream, making runs reproducible.
    """
    t0 = time.perf_counter()
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch("A must be square")
    if iters < 1:
        raise DimensionMismatch("iters must be >= 1")
    if mu <= 0:
        raise DimensionMismatch("mu must be positive")
    rng = make_rng(0, STREAM_SOLVER)
    V = rng.standard_normal((n, d))
    U = np.zeros((n, d))

    def objective():
        R = A - U @ V.T
        return float((R * R).sum() + mu * ((U * U).sum() + (V * V).sum()))

    def ridge(B):
        # argmin_Z ||A - Z B^T||^2 + mu ||Z||^2  =  A B (B^T B + mu I)^-1
        try:
            return np.linalg.solve(B.T @ B + mu * np.eye(d), B.T @ A).T
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("normal equations singular: %s" % exc)

    obj = [objective()]
    for _ in range(iters):
        U = ridge(V)
        obj.append(objective())
        V = ridge(U)
        obj.append(objective())
    S = np.clip((U @ V.T + V @ U.T) / 2.0, 0.0, 1.0)
    return SoftMatchMatrix(S=S, method="matchals", iterations=iters,
                           wall_time=time.perf_counter() - t0,
                           objective=tuple(obj))


def sinkhorn_project(M: np.ndarray, tol: float = SINKHORN_TOL,
                     max_sweeps: int = SINKHORN_CAP) -> np.ndarray:
    """Nearest-in-spirit doubly stochastic matrix: clamp negatives, then
    alternate row and column normalization until every row and column sum is
    within tol of 1. Raises SinkhornNoConverge at the sweep cap or when a row
    or column has (near-)zero mass, which makes the scaling ill-posed."""
    P = np.maximum(np.asarray(M, dtype=np.float64), 0.0)
    for _ in range(max_sweeps):
        r = P.sum(axis=1)
        if (r < 1e-12).any():
            raise SinkhornNoConverge("row with no mass")
        P = P / r[:, None]
        c = P.sum(axis=0)
        if (c < 1e-12).any():
            raise SinkhornNoConverge("column with no mass")
        P = P / c[None, :]
        err = max(np.abs(P.sum(axis=1) - 1.0).max(),
                  np.abs(P.sum(axis=0) - 1.0).max())
        if err <= tol:
            return P
    raise SinkhornNoConverge("no convergence in %d sweeps" % max_sweeps)


def pgdds(A: np.ndarray, d: int, view_of: np.ndarray, iters: int,
          step: float | None = None) -> SoftMatchMatrix:
    """Projected gradient ascent on sum_{b != c} <A_bc, P_b P_c^T> with each
    per-view P_b kept doubly stochastic.

    Full-overlap instances only: every view must contain exactly d nodes.
    P_b is initialized from the spectral embedding as the view-b block times
    the anchor (first) view's block transposed, Sinkhorn-projected. The worst
    row/col sum deviation after each outer iteration is recorded so the
    doubly stochastic invariant is auditable.
    """
    t0 = time.perf_counter()
    A = np.asarray(A, dtype=np.float64)
    view_of = np.asarray(view_of)
    n = A.shape[0]
    if A.shape != (n, n) or view_of.shape != (n,):
        raise DimensionMismatch("A must be n x n and view_of length n")
    if iters < 1:
        raise DimensionMismatch("iters must be >= 1")
    views = int(view_of.max()) + 1
    idx = [np.flatnonzero(view_of == b) for b in range(views)]
    if any(len(ix) != d for ix in idx):
        raise DimensionMismatch("pgdds needs exactly d nodes per view")
    if step is None:
        step = 1.0 / n

    def project(M):
        M = np.maximum(M, 0.0)
        try:
            return sinkhorn_project(M)
        except SinkhornNoConverge:
            return sinkhorn_project(M + PGDDS_FLOOR * max(M.max(), 1e-300))

    w, Vec = topk_eig(A, d)
    U = Vec * np.sqrt(np.clip(w, 0.0, None))
    norms = np.linalg.norm(U, axis=1)
    U = U / np.where(norms == 0.0, 1.0, norms)[:, None]
    anchor = U[idx[0]]
    P = [project(U[ix] @ anchor.T) for ix in idx]

    blocks = [[A[np.ix_(idx[b], idx[c])] for c in range(views)]
              for b in range(views)]
    residuals = []
    for _ in range(iters):
        grads = []
        for b in range(views):
            g = np.zeros((d, d))
            for c in range(views):
                if c != b:
                    g += blocks[b][c] @ P[c]
            grads.append(2.0 * g)
        P = [project(P[b] + step * grads[b]) for b in range(views)]
        worst = 0.0
        for Pb in P:
            worst = max(worst,
                        np.abs(Pb.sum(axis=1) - 1.0).max(),
                        np.abs(Pb.sum(axis=0) - 1.0).max())
        residuals.append(worst)

    S = np.zeros((n, n))
    for b in range(views):
        for c in range(views):
            if b != c:
                S[np.ix_(idx[b], idx[c])] = P[b] @ P[c].T
    S = np.clip((S + S.T) / 2.0, 0.0, 1.0)
    return SoftMatchMatrix(S=S, method="pgdds", iterations=iters,
                           wall_time=time.perf_counter() - t0,
                           ds_residuals=tuple(residuals))
