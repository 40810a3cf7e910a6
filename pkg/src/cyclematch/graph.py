"""Correspondence-graph data model, normalized graph operators, and CGRF i/o.

A correspondence graph holds one node per image feature. Edges carry match
strength in [0, 1] between features of *different* images; two features of
the same image never share an edge because they are distinct locations in
the scene. Nodes are ordered view-major and each node carries an initial
descriptor row in ``features``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ZeroDegreeNode

SYM_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    # Copy before freezing: freezing a caller's array in place would be a
    # surprising side effect, and sharing memory would let later caller
    # writes reach into a supposedly immutable graph.
    a = np.array(a, order="C", copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CorrespondenceGraph:
    """Immutable weighted match graph over features from ``v`` views.

    adjacency: n x n symmetric, entries in [0, 1], zero diagonal and zero
        within-view blocks.
    features: n x m0 initial node descriptors (m0 may be 0).
    view_of: per-node view index in [0, v).
    """

    n: int
    v: int
    view_of: np.ndarray
    adjacency: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        view_of = _readonly(np.asarray(self.view_of, dtype=np.int64))
        adj = _readonly(np.asarray(self.adjacency, dtype=np.float64))
        feat = _readonly(np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "view_of", view_of)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", feat)

        n, v = self.n, self.v
        if n < 1 or v < 1:
            raise ValueError(f"need n >= 1 and v >= 1, got n={n} v={v}")
        if view_of.shape != (n,):
            raise ValueError(f"view_of has shape {view_of.shape}, expected ({n},)")
        if adj.shape != (n, n):
            raise ValueError(f"adjacency has shape {adj.shape}, expected ({n}, {n})")
        if feat.ndim != 2 or feat.shape[0] != n:
            raise ValueError(f"features has shape {feat.shape}, expected ({n}, m0)")
        if view_of.min() < 0 or view_of.max() >= v:
            raise ValueError("view indices must lie in [0, v)")
        if len(np.unique(view_of)) != v:
            raise ValueError("every view index in [0, v) must be used")
        if not np.isfinite(adj).all():
            raise ValueError("adjacency must be finite")
        if adj.min() < 0.0 or adj.max() > 1.0:
            raise ValueError("adjacency entries must lie in [0, 1]")
        if np.abs(adj - adj.T).max() > SYM_TOL:
            raise ValueError("adjacency must be symmetric to 1e-12")
        if np.any(np.diag(adj) != 0.0):
            raise ValueError("adjacency diagonal must be exactly zero")
        same_view = view_of[:, None] == view_of[None, :]
        if np.any(adj[same_view] != 0.0):
            raise ValueError("within-view adjacency entries must be exactly zero")

    @property
    def m0(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class DegreeVector:
    """Per-node degree d_i = sum_j A_ij."""

    d: np.ndarray


def degree(graph: CorrespondenceGraph) -> DegreeVector:
    """Row sums of the adjacency matrix."""
    return DegreeVector(d=graph.adjacency.sum(axis=1))


def normalized_laplacian(graph: CorrespondenceGraph) -> np.ndarray:
    """I - D^(-1/2) A D^(-1/2). Every node must have positive degree."""
    d = graph.adjacency.sum(axis=1)
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        raise ZeroDegreeNode(int(zero[0]))
    s = 1.0 / np.sqrt(d)
    return np.eye(graph.n) - graph.adjacency * np.outer(s, s)


def augmented_operator(graph: CorrespondenceGraph) -> np.ndarray:
    """(D+I)^(-1/2) (A+I) (D+I)^(-1/2).

    The +I regularization makes this well defined for isolated nodes, so it
    is the operator used everywhere in the network.
    """
    d = graph.adjacency.sum(axis=1)
    s = 1.0 / np.sqrt(d + 1.0)
    return (graph.adjacency + np.eye(graph.n)) * np.outer(s, s)


# ---------------------------------------------------------------------------
# CGRF text format
#
#   CGRF 1
#   n <n> v <v> m0 <m0>
#   <view_of: n integers>
#   <n adjacency rows of n reals>
#   <n feature rows of m0 reals>      (omitted entirely when m0 == 0)
#
# Reals are printed with 17 significant digits so doubles round-trip exactly.

MAGIC = "CGRF 1"


def _fmt(values) -> str:
    return " ".join(f"{v:.17g}" for v in values)


def save_graph(graph: CorrespondenceGraph, path) -> None:
    lines = [MAGIC, f"n {graph.n} v {graph.v} m0 {graph.m0}"]
    lines.append(" ".join(str(int(x)) for x in graph.view_of))
    for row in graph.adjacency:
        lines.append(_fmt(row))
    if graph.m0 > 0:
        for row in graph.features:
            lines.append(_fmt(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_real_row(line: str, width: int, what: str, lineno: int) -> np.ndarray:
    parts = line.split()
    if len(parts) != width:
        raise FormatError(f"line {lineno}: expected {width} {what} entries, got {len(parts)}")
    try:
        return np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"line {lineno}: bad {what} value: {exc}") from exc


def load_graph(path) -> CorrespondenceGraph:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise FormatError(f"bad magic, expected '{MAGIC}'")
    header = lines[1].split() if len(lines) > 1 else []
    if len(header) != 6 or header[0] != "n" or header[2] != "v" or header[4] != "m0":
        raise FormatError("bad header, expected 'n <n> v <v> m0 <m0>'")
    try:
        n, v, m0 = int(header[1]), int(header[3]), int(header[5])
    except ValueError as exc:
        raise FormatError(f"bad header value: {exc}") from exc
    nfeat = n if m0 > 0 else 0
    if len(lines) < 3 + n + nfeat:
        raise FormatError(f"truncated file: need {3 + n + nfeat} lines, found {len(lines)}")

    view_parts = lines[2].split()
    if len(view_parts) != n:
        raise FormatError(f"line 3: expected {n} view indices, got {len(view_parts)}")
    try:
        view_of = np.array([int(p) for p in view_parts], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"line 3: bad view index: {exc}") from exc

    adjacency = np.empty((n, n))
    for i in range(n):
        adjacency[i] = _parse_real_row(lines[3 + i], n, "adjacency", 4 + i)
    features = np.empty((n, m0))
    for i in range(nfeat):
        features[i] = _parse_real_row(lines[3 + n + i], m0, "feature", 4 + n + i)

    try:
        return CorrespondenceGraph(n=n, v=v, view_of=view_of, adjacency=adjacency,
                                   features=features)
    except ValueError as exc:
        raise FormatError(f"invariant violation on load: {exc}") from exc


def save_adjacency(S: np.ndarray, view_of: np.ndarray, v: int, path) -> None:
    """Write a soft match matrix as an adjacency-only CGRF block (m0 = 0).

    The format requires zero within-view entries and exact symmetry, so the
    score matrix is masked and symmetrized to fit; methods only ever emit
    meaningful scores on cross-view pairs.
    """
    S = np.array(np.asarray(S, dtype=np.float64), copy=True)
    view_of = np.asarray(view_of)
    S[view_of[:, None] == view_of[None, :]] = 0.0
    S = 0.5 * (S + S.T)
    g = CorrespondenceGraph(n=S.shape[0], v=v, view_of=view_of, adjacency=S,
                            features=np.empty((S.shape[0], 0)))
    save_graph(g, path)
