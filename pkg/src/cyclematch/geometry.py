"""Epipolar residuals and the geometric prior used as a training-time side loss.

Pose convention: ``R`` maps camera-frame directions to world directions and
``T`` is the camera center in world units, so a world point projects through
``R.T @ (X - T)``. Under this convention the residual of a calibrated
observation pair (x_i, x_j) of the same 3D point,

    | x_i' R_i' [T_j - T_i]_x R_j x_j |,

is exactly zero (coplanarity of the two rays with the baseline).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBaseline

BASELINE_TOL = 1e-12


@dataclass(frozen=True)
class Pose:
    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        # Copy before freezing so the caller's arrays are left alone.
        R = np.array(np.asarray(self.R, dtype=np.float64), copy=True)
        T = np.array(np.asarray(self.T, dtype=np.float64), copy=True)
        R.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)
        if R.shape != (3, 3) or T.shape != (3,):
            raise ValueError("pose needs a 3x3 R and a length-3 T")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-10:
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-10:
            raise ValueError("R must be a proper rotation (det 1)")


def skew(t: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(t) @ u == cross(t, u)."""
    t = np.asarray(t, dtype=np.float64)
    return np.array([
        [0.0, -t[2], t[1]],
        [t[2], 0.0, -t[0]],
        [-t[1], t[0], 0.0],
    ])


def _pair_operator(pose_i: Pose, pose_j: Pose) -> np.ndarray:
    base = pose_j.T - pose_i.T
    if np.linalg.norm(base) < BASELINE_TOL:
        raise DegenerateBaseline("camera centers coincide")
    return pose_i.R.T @ skew(base) @ pose_j.R


def epipolar_residual(pose_i: Pose, pose_j: Pose, Xi: np.ndarray, Xj: np.ndarray) -> float:
    """Absolute epipolar residual of two calibrated homogeneous observations.

    Zero iff the two viewing rays are coplanar with the baseline, i.e. the
    observations can correspond to one 3D point.
    """
    Xi = np.asarray(Xi, dtype=np.float64)
    Xj = np.asarray(Xj, dtype=np.float64)
    return float(abs(Xi @ _pair_operator(pose_i, pose_j) @ Xj))


@dataclass(frozen=True)
class GeometricPrior:
    """Cross-camera epipolar residual matrix G plus the node->camera map.

    G is symmetric, nonnegative, zero on the diagonal and within each camera.
    """

    G: np.ndarray
    node_cam: np.ndarray


def build_prior(scene, graph, rescale: bool = True) -> GeometricPrior:
    """Residual matrix between all cross-camera node pairs of ``graph``.

    Node i of the graph corresponds to observation ``scene.observations[c, k]``
    with c = view_of[i] and k the node's within-view index. With ``rescale``
    the matrix is divided by its maximum entry so the largest residual is 1,
    which makes the side-loss weight transferable across scene scales.
    """
    view_of = np.asarray(graph.view_of)
    n = graph.n
    v = graph.v
    p = n // v
    obs = np.asarray(scene.observations, dtype=np.float64)  # v x p x 3
    G = np.zeros((n, n))
    for a in range(v):
        ia = np.flatnonzero(view_of == a)
        for b in range(a + 1, v):
            ib = np.flatnonzero(view_of == b)
            M = _pair_operator(scene.poses[a], scene.poses[b])
            block = np.abs(obs[a] @ M @ obs[b].T)  # p x p
            G[np.ix_(ia, ib)] = block
            G[np.ix_(ib, ia)] = block.T
    if rescale:
        top = G.max()
        if top > 0.0:
            G = G / top
    G.flags.writeable = False
    return GeometricPrior(G=G, node_cam=view_of.copy())
