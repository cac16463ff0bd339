"""Weighted semantic graphs and rigid transforms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from semloc.errors import InputError, LabelRangeError

DEFAULT_EDGE_THRESHOLD = 15.0
ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class SemanticVertex:
    id: int
    label: int
    position: tuple[float, float, float]


class SemanticGraph:
    """Labeled 3D vertices with a dense pairwise distance matrix.

    Two vertices are adjacent when their distance is strictly below
    ``edge_threshold``. Instances are read-only after construction.
    """

    def __init__(self, positions, labels, edge_threshold=DEFAULT_EDGE_THRESHOLD, distance_matrix=None):
        positions = np.array(positions, dtype=np.float64).reshape(-1, 3)
        labels = np.array(labels, dtype=np.int64).reshape(-1)
        if len(positions) != len(labels):
            raise InputError("positions and labels differ in length")
        if not np.all(np.isfinite(positions)):
            raise InputError("vertex positions must be finite")
        if not (edge_threshold > 0 and math.isfinite(edge_threshold)):
            raise InputError(f"edge_threshold must be positive, got {edge_threshold}")
        if np.any(labels < 0):
            raise LabelRangeError("labels must be non-negative")
        if distance_matrix is None:
            if len(positions) > 1:
                distance_matrix = squareform(pdist(positions))
            else:
                distance_matrix = np.zeros((len(positions), len(positions)))
        distance_matrix = np.ascontiguousarray(distance_matrix, dtype=np.float64)
        for arr in (positions, labels, distance_matrix):
            arr.setflags(write=False)
        self.positions = positions
        self.labels = labels
        self.edge_threshold = float(edge_threshold)
        self.distance_matrix = distance_matrix
        self._csr = None

    def __len__(self):
        return len(self.labels)

    def __repr__(self):
        return f"SemanticGraph(V={len(self)}, edge_threshold={self.edge_threshold})"

    @property
    def vertices(self):
        return [
            SemanticVertex(i, int(l), tuple(float(c) for c in p))
            for i, (l, p) in enumerate(zip(self.labels, self.positions))
        ]

    @property
    def adjacency(self):
        """Boolean V x V matrix ``distance < edge_threshold`` (diagonal true)."""
        return self.distance_matrix < self.edge_threshold

    def csr(self):
        """Neighbor lists (self excluded) as ``(indptr, indices)`` int64 arrays."""
        if self._csr is None:
            adj = self.adjacency.copy()
            np.fill_diagonal(adj, False)
            rows, cols = np.nonzero(adj)
            indptr = np.zeros(len(self) + 1, dtype=np.int64)
            np.cumsum(np.bincount(rows, minlength=len(self)), out=indptr[1:])
            self._csr = (indptr, cols.astype(np.int64))
        return self._csr

    def degree(self):
        indptr, _ = self.csr()
        return np.diff(indptr)

    @property
    def label_count(self):
        return int(self.labels.max()) + 1 if len(self) else 0


def build_graph(vertices, edge_threshold=DEFAULT_EDGE_THRESHOLD, label_count=None):
    """Build a graph from ``SemanticVertex`` records, preserving their order."""
    vertices = list(vertices)
    positions = np.array([v.position for v in vertices], dtype=np.float64).reshape(-1, 3)
    labels = np.array([v.label for v in vertices], dtype=np.int64)
    if label_count is not None and len(labels) and labels.max() >= label_count:
        raise LabelRangeError(f"label {labels.max()} >= label count {label_count}")
    return SemanticGraph(positions, labels, edge_threshold)


def neighbor(graph, i, j):
    n = len(graph)
    for k in (i, j):
        if not 0 <= k < n:
            raise IndexError(f"vertex id {k} out of range for graph of {n} vertices")
    return bool(graph.distance_matrix[i, j] < graph.edge_threshold)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        T = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(T))):
            raise InputError("transform entries must be finite")
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise InputError("rotation must be orthonormal with determinant +1")
        R.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix34(cls, values):
        M = np.asarray(values, dtype=np.float64).reshape(3, 4)
        return cls(M[:, :3], M[:, 3])

    def matrix34(self):
        return np.hstack([self.rotation, self.translation[:, None]])

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self):
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    def __repr__(self):
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def rotation_angle(R):
    """Geodesic angle (radians) of a rotation matrix; accurate near zero."""
    R = np.asarray(R, dtype=np.float64)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return math.atan2(float(np.linalg.norm(axis)), float(np.trace(R) - 1.0))


def transform_graph(graph, t):
    """Move every vertex by ``t``; the distance matrix is recomputed."""
    return SemanticGraph(t.apply(graph.positions), graph.labels, graph.edge_threshold)


# --- text formats ---------------------------------------------------------

GRAPH_HEADER = "# semgraph v1"


def _fmt(x):
    return repr(float(x))


def format_graph(graph):
    lines = [f"{GRAPH_HEADER} edge_threshold={_fmt(graph.edge_threshold)}"]
    for i, (lab, p) in enumerate(zip(graph.labels.tolist(), graph.positions.tolist())):
        lines.append(f"{i} {lab} {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    return "\n".join(lines) + "\n"


def write_graph(path, graph):
    Path(path).write_text(format_graph(graph), encoding="utf-8")


def parse_graph(text, edge_threshold=None):
    lines = text.splitlines()
    if not lines or not lines[0].startswith(GRAPH_HEADER):
        raise InputError(f"missing '{GRAPH_HEADER}' header")
    file_threshold = None
    for tok in lines[0][len(GRAPH_HEADER):].split():
        key, _, val = tok.partition("=")
        if key == "edge_threshold":
            try:
                file_threshold = float(val)
            except ValueError:
                raise InputError(f"bad edge_threshold {val!r}") from None
    records = {}
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise InputError(f"line {lineno}: expected 'id label x y z'")
        try:
            vid, lab = int(parts[0]), int(parts[1])
            pos = tuple(float(x) for x in parts[2:])
        except ValueError:
            raise InputError(f"line {lineno}: malformed record") from None
        if vid in records:
            raise InputError(f"line {lineno}: duplicate vertex id {vid}")
        records[vid] = (lab, pos)
    if sorted(records) != list(range(len(records))):
        raise InputError("vertex ids must be dense 0..V-1")
    threshold = edge_threshold if edge_threshold is not None else file_threshold
    if threshold is None:
        threshold = DEFAULT_EDGE_THRESHOLD
    verts = [SemanticVertex(i, records[i][0], records[i][1]) for i in range(len(records))]
    return build_graph(verts, threshold)


def read_graph(path, edge_threshold=None):
    return parse_graph(Path(path).read_text(encoding="utf-8"), edge_threshold)


def read_reals(path, count):
    """Whitespace-separated reals from a text file, ``#`` comments ignored."""
    values = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0]
        try:
            values.extend(float(x) for x in line.split())
        except ValueError:
            raise InputError(f"{path}: non-numeric value") from None
    if len(values) != count:
        raise InputError(f"{path}: expected {count} reals, found {len(values)}")
    return values


def format_transform(t):
    return "\n".join(" ".join(_fmt(x) for x in row) for row in t.matrix34()) + "\n"


def write_transform(path, t):
    Path(path).write_text(format_transform(t), encoding="utf-8")


def read_transform(path):
    return RigidTransform.from_matrix34(read_reals(path, 12))
