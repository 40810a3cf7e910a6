"""Deterministic generators for synthetic correspondence graphs and scenes.

All randomness flows through counter-based Philox generators keyed by
(seed, stream, index), so any draw can be reproduced in another language
by keying the same Philox4x64-10 counters. Streams:

    STREAM_GRAPH    graph generation (permutations, descriptors, corruption)
    STREAM_SCENE    3D scene generation
    STREAM_INIT     network weight init
    STREAM_TRAIN    per-step training graphs
    STREAM_HELDOUT  held-out evaluation graphs
    STREAM_SOLVER   internal solver randomness (baselines)

The Philox key is the 2-word uint64 array [seed, (stream << 32) | index].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, SpecError
from .geometry import Pose
from .graph import CorrespondenceGraph, _fmt, _readonly

STREAM_GRAPH = 0
STREAM_SCENE = 1
STREAM_INIT = 2
STREAM_TRAIN = 3
STREAM_HELDOUT = 4
STREAM_SOLVER = 5

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1

# Descriptor model: entries N(DESC_SHIFT, 1), rows renormalized. The shift
# gives distinct descriptors a positive mean cosine (about mu^2/(1+mu^2))
# instead of the zero mean of centered Gaussians, as in real local features.
DESC_SHIFT = 0.6

CAMERA_RADIUS = 10.0


def make_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream, index); pure function."""
    key = np.array(
        [seed & _MASK64, ((stream & _MASK32) << 32) | (index & _MASK32)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(base: int, stream: int, index: int = 0) -> int:
    """First uint64 of the keyed stream, for seeding nested generators."""
    return int(make_rng(base, stream, index).integers(0, 1 << 63, dtype=np.uint64))


@dataclass(frozen=True)
class SynthGraphSpec:
    views: int
    points: int
    descriptor_dim: int = 16
    descriptor_noise_sigma: float = 0.25
    edge_noise_sigma: float = 0.0
    outlier_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.views < 2:
            raise SpecError("views must be >= 2")
        if self.points < 2:
            raise SpecError("points must be >= 2")
        if self.descriptor_dim < 1:
            raise SpecError("descriptor_dim must be >= 1")
        if self.descriptor_noise_sigma < 0 or self.edge_noise_sigma < 0:
            raise SpecError("noise sigmas must be nonnegative")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise SpecError("outlier_rate must lie in [0, 1]")
        if self.seed < 0:
            raise SpecError("seed must be a nonnegative integer")


@dataclass(frozen=True)
class GroundTruth:
    """Stacked per-view permutations X and the clean adjacency A_gt = XX^T
    with within-view blocks zeroed. Node ordering is view-major."""

    X: np.ndarray
    A_gt: np.ndarray
    universe_dim: int

    def __post_init__(self):
        X = _readonly(np.asarray(self.X, dtype=np.float64))
        A = _readonly(np.asarray(self.A_gt, dtype=np.float64))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "A_gt", A)
        p = self.universe_dim
        n = X.shape[0]
        if X.shape != (n, p) or n % p != 0 or n < 2 * p:
            raise ValueError("X must stack at least two p-column view blocks")
        if not np.array_equal(np.unique(X), [0.0, 1.0]) or (X.sum(axis=1) != 1).any():
            raise ValueError("each row of X must have exactly one 1")
        for b in range(n // p):
            if (X[b * p:(b + 1) * p].sum(axis=0) != 1).any():
                raise ValueError("view block %d of X is not a permutation" % b)
        if A.shape != (n, n) or np.abs(A - _mask_within(X @ X.T, n, p)).max() > 0:
            raise ValueError("A_gt must equal XX^T with within-view blocks zeroed")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def views(self) -> int:
        return self.n // self.universe_dim

    @property
    def view_of(self) -> np.ndarray:
        return np.arange(self.n) // self.universe_dim


@dataclass(frozen=True)
class MultiViewScene:
    """Cameras, world points and node-aligned calibrated observations.

    observations[c, k] is the (x, y, 1) projection seen by node k of view c,
    i.e. already permuted to line up with graph node c*p + k.
    """

    poses: tuple
    points3d: np.ndarray
    observations: np.ndarray
    gt: GroundTruth

    def __post_init__(self):
        pts = _readonly(np.asarray(self.points3d, dtype=np.float64))
        obs = _readonly(np.asarray(self.observations, dtype=np.float64))
        object.__setattr__(self, "poses", tuple(self.poses))
        object.__setattr__(self, "points3d", pts)
        object.__setattr__(self, "observations", obs)
        v = len(self.poses)
        p = self.gt.universe_dim
        if pts.shape != (p, 3):
            raise ValueError("points3d must be p x 3")
        if obs.shape != (v, p, 3):
            raise ValueError("observations must be v x p x 3")
        if np.abs(obs[:, :, 2] - 1.0).max() > 0:
            raise ValueError("observations must be calibrated homogeneous (z = 1)")


def _mask_within(A: np.ndarray, n: int, p: int) -> np.ndarray:
    """Zero the v within-view diagonal blocks of a view-major n x n matrix."""
    out = A.copy()
    for b in range(n // p):
        out[b * p:(b + 1) * p, b * p:(b + 1) * p] = 0.0
    return out


def _ground_truth(rng: np.random.Generator, views: int, points: int) -> GroundTruth:
    """Draw one permutation per view (views * points draws consumed)."""
    p = points
    X = np.zeros((views * p, p))
    for b in range(views):
        perm = rng.permutation(p)
        X[b * p + np.arange(p), perm] = 1.0
    A_gt = _mask_within(X @ X.T, views * p, p)
    return GroundTruth(X=X, A_gt=A_gt, universe_dim=p)


def _descriptors(rng: np.random.Generator, p: int, m: int) -> np.ndarray:
    D = rng.standard_normal((p, m)) + DESC_SHIFT
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def _noisy_features(rng: np.random.Generator, gt: GroundTruth, D: np.ndarray,
                    sigma: float) -> np.ndarray:
    F = gt.X @ D
    if sigma > 0.0:
        F = F + sigma * rng.standard_normal(F.shape)
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    # A noisy descriptor can only vanish with probability zero; guard anyway.
    norms[norms == 0.0] = 1.0
    return F / norms


def _corrupt_adjacency(rng: np.random.Generator, gt: GroundTruth,
                       outlier_rate: float, edge_noise_sigma: float) -> np.ndarray:
    """Rewire true cross-view edges, then add clipped Gaussian edge noise.

    Draw order (fixed for reproducibility): for each true edge (i, j), i < j,
    in row-major order of A_gt, one uniform; if it falls below outlier_rate,
    one integer in [0, p-2] selecting the wrong node within j's view. Then,
    if edge_noise_sigma > 0, one n x n standard normal block.
    """
    n = gt.n
    p = gt.universe_dim
    view_of = gt.view_of
    A = gt.A_gt.copy()
    if outlier_rate > 0.0:
        ii, jj = np.nonzero(np.triu(gt.A_gt, 1))
        for i, j in zip(ii, jj):
            if rng.random() >= outlier_rate:
                continue
            base = int(view_of[j]) * p
            off = int(rng.integers(0, p - 1))
            wrong = base + off + (off >= j - base)  # skip the true partner
            A[i, j] = A[j, i] = 0.0
            A[i, wrong] = A[wrong, i] = 1.0
    if edge_noise_sigma > 0.0:
        Z = edge_noise_sigma * rng.standard_normal((n, n))
        cross = _mask_within(np.ones((n, n)), n, p)
        A = np.clip(A + Z * cross, 0.0, 1.0)
        A = (A + A.T) / 2.0
    return A


def gen_graph(spec: SynthGraphSpec):
    """Generate one synthetic correspondence graph and its ground truth.

    Fixed draw order on the (seed, STREAM_GRAPH) stream: per-view
    permutations, universe descriptors, per-node descriptor noise, outlier
    rewiring, edge noise. Same spec therefore always yields bit-identical
    output.
    """
    rng = make_rng(spec.seed, STREAM_GRAPH)
    gt = _ground_truth(rng, spec.views, spec.points)
    D = _descriptors(rng, spec.points, spec.descriptor_dim)
    F = _noisy_features(rng, gt, D, spec.descriptor_noise_sigma)
    A = _corrupt_adjacency(rng, gt, spec.outlier_rate, spec.edge_noise_sigma)
    graph = CorrespondenceGraph(
        n=gt.n, v=spec.views, view_of=gt.view_of, adjacency=A, features=F)
    return graph, gt


def _look_at(center: np.ndarray) -> Pose:
    """Camera at ``center`` with optical axis toward the origin.

    R columns are the camera's x/y/z axes in world coordinates (z = viewing
    direction); up is world +z unless nearly parallel to the axis.
    """
    z = -center / np.linalg.norm(center)
    up = np.array([0.0, 0.0, 1.0])
    if abs(z @ up) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    x = np.cross(up, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(R=np.column_stack([x, y, z]), T=center)


def _project(pose: Pose, pw: np.ndarray) -> np.ndarray:
    """Calibrated homogeneous observation (x, y, 1) of world point pw."""
    pc = pose.R.T @ (pw - pose.T)
    if pc[2] <= 0.0:
        raise SpecError("point behind camera")
    return np.array([pc[0] / pc[2], pc[1] / pc[2], 1.0])


def _make_scene(views: int, points: int, seed: int,
                descriptor_dim: int = 16,
                descriptor_noise_sigma: float = 0.25,
                edge_noise_sigma: float = 0.0,
                outlier_rate: float = 0.0):
    """Scene generator without the public size gate (tests use tiny scenes).

    Draw order on (seed, STREAM_SCENE): camera directions (one 3-vector per
    view, normalized; vectors shorter than 1e-3 are redrawn), world points,
    then the graph draws in gen_graph order.
    """
    rng = make_rng(seed, STREAM_SCENE)
    poses = []
    for _ in range(views):
        d = rng.standard_normal(3)
        while np.linalg.norm(d) < 1e-3:
            d = rng.standard_normal(3)
        poses.append(_look_at(CAMERA_RADIUS * d / np.linalg.norm(d)))
    pts = rng.uniform(-1.0, 1.0, size=(points, 3))
    gt = _ground_truth(rng, views, points)
    D = _descriptors(rng, points, descriptor_dim)
    F_desc = _noisy_features(rng, gt, D, descriptor_noise_sigma)
    A = _corrupt_adjacency(rng, gt, outlier_rate, edge_noise_sigma)

    # Node-aligned observations: node k of view c is universe point
    # argmax(X[c*p + k]), observed at obs[c, k].
    p = points
    obs = np.zeros((views, p, 3))
    slot_point = np.argmax(gt.X, axis=1).reshape(views, p)
    for c in range(views):
        for k in range(p):
            obs[c, k] = _project(poses[c], pts[slot_point[c, k]])
    xy = obs[:, :, :2].reshape(views * p, 2)
    F = np.hstack([F_desc, xy])
    graph = CorrespondenceGraph(
        n=gt.n, v=views, view_of=gt.view_of, adjacency=A, features=F)
    scene = MultiViewScene(poses=tuple(poses), points3d=pts,
                           observations=obs, gt=gt)
    return graph, scene


def gen_scene(views: int, points: int, seed: int,
              descriptor_dim: int = 16,
              descriptor_noise_sigma: float = 0.25,
              edge_noise_sigma: float = 0.0,
              outlier_rate: float = 0.0):
    """Generate a calibrated multi-camera scene plus its correspondence graph.

    Cameras sit on a radius-10 sphere looking at the origin; world points
    are uniform in [-1, 1]^3; observations are exact projections; node
    features are noisy descriptors concatenated with the (x, y) observation.
    """
    if views < 2:
        raise SpecError("views must be >= 2")
    if points < 8:
        raise SpecError("points must be >= 8")
    if descriptor_noise_sigma < 0 or edge_noise_sigma < 0:
        raise SpecError("noise sigmas must be nonnegative")
    if not 0.0 <= outlier_rate <= 1.0:
        raise SpecError("outlier_rate must lie in [0, 1]")
    return _make_scene(views, points, seed,
                       descriptor_dim=descriptor_dim,
                       descriptor_noise_sigma=descriptor_noise_sigma,
                       edge_noise_sigma=edge_noise_sigma,
                       outlier_rate=outlier_rate)


GTRF_MAGIC = "GTRF 1"
SCNF_MAGIC = "SCNF 1"


def save_ground_truth(gt: GroundTruth, path: str) -> None:
    lines = [GTRF_MAGIC, "n %d p %d" % (gt.n, gt.universe_dim)]
    for row in gt.X:
        lines.append(" ".join("%d" % int(x) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_ground_truth(path: str) -> GroundTruth:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != GTRF_MAGIC:
        raise FormatError("%s: not a GTRF file" % path)
    try:
        tok = lines[1].split()
        if tok[0] != "n" or tok[2] != "p":
            raise IndexError
        n, p = int(tok[1]), int(tok[3])
    except (IndexError, ValueError):
        raise FormatError("%s: malformed GTRF header" % path)
    if len(lines) < 2 + n:
        raise FormatError("%s: truncated GTRF" % path)
    try:
        X = np.array([[int(x) for x in lines[2 + i].split()] for i in range(n)],
                     dtype=np.float64)
    except ValueError:
        raise FormatError("%s: bad GTRF row" % path)
    if X.shape != (n, p):
        raise FormatError("%s: GTRF row length mismatch" % path)
    A_gt = _mask_within(X @ X.T, n, p)
    try:
        return GroundTruth(X=X, A_gt=A_gt, universe_dim=p)
    except ValueError as exc:
        raise FormatError("%s: invariant violation on load: %s" % (path, exc))


def save_scene(scene: MultiViewScene, path: str) -> None:
    v = len(scene.poses)
    p = scene.gt.universe_dim
    lines = [SCNF_MAGIC, "v %d p %d" % (v, p)]
    for pose in scene.poses:
        lines.append(_fmt(list(pose.R.ravel()) + list(pose.T)))
    for row in scene.points3d:
        lines.append(_fmt(row))
    for c in range(v):
        for k in range(p):
            lines.append(_fmt(scene.observations[c, k]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scene(path: str, gt: GroundTruth) -> MultiViewScene:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != SCNF_MAGIC:
        raise FormatError("%s: not a SCNF file" % path)
    try:
        tok = lines[1].split()
        if tok[0] != "v" or tok[2] != "p":
            raise IndexError
        v, p = int(tok[1]), int(tok[3])
    except (IndexError, ValueError):
        raise FormatError("%s: malformed SCNF header" % path)
    want = 2 + v + p + v * p
    if len(lines) < want:
        raise FormatError("%s: truncated SCNF" % path)

    def reals(line, count):
        vals = line.split()
        if len(vals) != count:
            raise FormatError("%s: expected %d reals per line" % (path, count))
        try:
            return np.array([float(x) for x in vals])
        except ValueError:
            raise FormatError("%s: unparseable real" % path)

    poses = []
    for c in range(v):
        vals = reals(lines[2 + c], 12)
        try:
            poses.append(Pose(R=vals[:9].reshape(3, 3), T=vals[9:]))
        except ValueError as exc:
            raise FormatError("%s: bad pose: %s" % (path, exc))
    pts = np.array([reals(lines[2 + v + k], 3) for k in range(p)])
    obs = np.array([reals(lines[2 + v + p + i], 3) for i in range(v * p)])
    try:
        return MultiViewScene(poses=tuple(poses), points3d=pts,
                              observations=obs.reshape(v, p, 3), gt=gt)
    except ValueError as exc:
        raise FormatError("%s: invariant violation on load: %s" % (path, exc))
