"""Similarity statistics, reconstruction error reports, alignment and timing.

Comparison convention: a method's self-similarity diagonal (cosine methods
emit 1 there by construction) says nothing about matching quality, and the
ground-truth adjacency is definitionally zero on it, so evaluation paths
zero the diagonal of S before error_report. Within-view off-diagonal entries
are kept: claiming that two distinct features of one image match is a real
error and methods differ in how much of it they leak.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .synthgen import GroundTruth

METRICS_HEADER = ("method,views,points,noise,outliers,iters,seed,"
                  "l1,l2,runtime_s,same_mean,same_std,diff_mean,diff_std")


@dataclass(frozen=True)
class SimilarityStats:
    same_mean: float
    same_std: float
    diff_mean: float
    diff_std: float


@dataclass(frozen=True)
class ErrorReport:
    l1: float
    l2: float
    runtime_s: float


def _populations(values: np.ndarray, gt: GroundTruth):
    """Split a symmetric score matrix into pooled cross-view same/different
    populations according to the ground-truth universe assignment."""
    n = gt.n
    if values.shape != (n, n):
        raise DimensionMismatch("scores must be n x n with n = gt.n")
    u = np.argmax(gt.X, axis=1)
    vof = gt.view_of
    cross = vof[:, None] != vof[None, :]
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    same = cross & upper & (u[:, None] == u[None, :])
    diff = cross & upper & (u[:, None] != u[None, :])
    return values[same], values[diff]


def similarity_stats(E: np.ndarray, gt: GroundTruth) -> SimilarityStats:
    """Mean/std of cosine similarities over all cross-view node pairs,
    pooled across view pairs, split by whether the pair is a true match."""
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] != gt.n:
        raise DimensionMismatch("E must have one row per ground-truth node")
    same, diff = _populations(E @ E.T, gt)
    return SimilarityStats(same_mean=float(same.mean()),
                           same_std=float(same.std()),
                           diff_mean=float(diff.mean()),
                           diff_std=float(diff.std()))


def score_stats(S: np.ndarray, gt: GroundTruth) -> SimilarityStats:
    """similarity_stats for a method that emits scores instead of embeddings."""
    same, diff = _populations(np.asarray(S, dtype=np.float64), gt)
    return SimilarityStats(same_mean=float(same.mean()),
                           same_std=float(same.std()),
                           diff_mean=float(diff.mean()),
                           diff_std=float(diff.std()))


def error_report(S, A_gt: np.ndarray, runtime_s: float = 0.0) -> ErrorReport:
    """Per-entry mean absolute and mean squared error of S against A_gt."""
    S = np.asarray(getattr(S, "S", S), dtype=np.float64)
    A_gt = np.asarray(A_gt, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape != A_gt.shape:
        raise DimensionMismatch("S and A_gt must be same-shape square matrices")
    R = S - A_gt
    n2 = R.size
    return ErrorReport(l1=float(np.abs(R).sum() / n2),
                       l2=float((R * R).sum() / n2),
                       runtime_s=float(runtime_s))


def zero_diagonal(S: np.ndarray) -> np.ndarray:
    """Copy of S with the self-similarity diagonal removed (see module doc)."""
    out = np.array(getattr(S, "S", S), dtype=np.float64, copy=True)
    np.fill_diagonal(out, 0.0)
    return out


def mask_within_view(S: np.ndarray, view_of: np.ndarray) -> np.ndarray:
    """Copy of S with all within-view entries zeroed. This is the shape a
    correspondence-graph adjacency must have, so serialization uses it."""
    S = np.array(getattr(S, "S", S), dtype=np.float64, copy=True)
    view_of = np.asarray(view_of)
    same = view_of[:, None] == view_of[None, :]
    S[same] = 0.0
    return S


def compare_scores(S, gt: GroundTruth, runtime_s: float = 0.0) -> ErrorReport:
    """Evaluation-path comparison: error_report of diagonal-stripped scores
    against the ground-truth adjacency."""
    return error_report(zero_diagonal(S), gt.A_gt, runtime_s)


def embedding_similarity(E: np.ndarray) -> np.ndarray:
    """Soft scores from an embedding: EE^T clamped to [0, 1]."""
    E = np.asarray(E, dtype=np.float64)
    return np.clip(E @ E.T, 0.0, 1.0)


def procrustes_align(E: np.ndarray, X_gt: np.ndarray):
    """Orthogonal Q minimizing ||EQ - X_gt||_F, via the polar factor of
    E^T X_gt. Returns (Q, rank_deficient); when E^T X_gt has (near-)zero
    singular values the minimizer is not unique and the flag is set."""
    E = np.asarray(E, dtype=np.float64)
    X_gt = np.asarray(X_gt, dtype=np.float64)
    if E.shape != X_gt.shape or E.ndim != 2:
        raise DimensionMismatch("E and X_gt must be same-shape n x d")
    U, s, Vt = np.linalg.svd(E.T @ X_gt)
    return U @ Vt, bool((s < 1e-12).any())


def time_method(fn) -> float:
    """Wall-clock seconds of one invocation on the monotonic clock."""
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def time_stats(fn, repeats: int = 5):
    """(mean, std, samples) over repeated timings of fn."""
    samples = tuple(time_method(fn) for _ in range(repeats))
    return float(np.mean(samples)), float(np.std(samples)), samples


def metrics_row(method: str, l1: float, l2: float, runtime_s: float,
                views=None, points=None, noise=None, outliers=None,
                iters=None, seed=None, stats: SimilarityStats | None = None) -> dict:
    return {
        "method": method,
        "views": views, "points": points, "noise": noise,
        "outliers": outliers, "iters": iters, "seed": seed,
        "l1": l1, "l2": l2, "runtime_s": runtime_s,
        "same_mean": stats.same_mean if stats else None,
        "same_std": stats.same_std if stats else None,
        "diff_mean": stats.diff_mean if stats else None,
        "diff_std": stats.diff_std if stats else None,
    }


def format_metrics_row(row: dict) -> str:
    cols = METRICS_HEADER.split(",")
    parts = []
    for c in cols:
        val = row.get(c)
        if c == "method":
            parts.append(str(val))
        elif val is None:
            parts.append("nan")
        elif c in ("views", "points", "iters", "seed"):
            parts.append("%d" % int(val))
        else:
            parts.append("%.17g" % float(val))
    return ",".join(parts)


def write_metrics_csv(path: str, rows: list) -> None:
    lines = [METRICS_HEADER] + [format_metrics_row(r) for r in rows]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def sweep_iterations(method: str, A: np.ndarray, d: int, iterations,
                     gt: GroundTruth, view_of=None, meta: dict | None = None) -> list:
    """One metrics row per iteration count for an iterative solver."""
    from . import baselines
    if method not in ("matchals", "pgdds"):
        raise DimensionMismatch("sweep supports matchals and pgdds only")
    if sorted(iterations) != list(iterations):
        raise DimensionMismatch("iteration counts must be monotone increasing")
    meta = dict(meta or {})
    rows = []
    for iters in iterations:
        if method == "matchals":
            sm = baselines.matchals(A, d, iters)
        else:
            sm = baselines.pgdds(A, d, view_of, iters)
        rep = compare_scores(sm, gt, sm.wall_time)
        stats = score_stats(sm.S, gt)
        rows.append(metrics_row(method, rep.l1, rep.l2, rep.runtime_s,
                                iters=iters, stats=stats, **meta))
    return rows
