"""Per-vertex graph descriptors.

Two variants:

* random walk: ``n`` label sequences of length ``d`` starting at the vertex,
  each step moving to a uniformly chosen adjacent vertex;
* histogram: counts of the label triples of every 3-vertex walk
  (vertex, neighbor, neighbor-of-neighbor; backtracking allowed), scaled
  to unit Euclidean norm. Bin of triple ``(a, b, c)`` is ``a*L*L + b*L + c``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from semloc._backend import kernels
from semloc.errors import InputError, LabelRangeError

DEFAULT_WALK_COUNT = 50
DEFAULT_WALK_DEPTH = 4


@dataclass(frozen=True, eq=False)
class RandomWalkDescriptor:
    walks: np.ndarray


@dataclass(frozen=True, eq=False)
class HistogramDescriptor:
    bins: np.ndarray


def _walk_uniforms(seed, vertex, n, d):
    # one independent stream per (seed, vertex) so vertices can run in any order
    return np.random.default_rng([int(seed), int(vertex)]).random((n, d - 1))


def random_walk_descriptor(graph, vertex, n=DEFAULT_WALK_COUNT, d=DEFAULT_WALK_DEPTH, seed=0):
    if n < 1 or d < 2:
        raise InputError("need n >= 1 walks of depth d >= 2")
    if not 0 <= vertex < len(graph):
        raise IndexError(f"vertex {vertex} out of range")
    indptr, indices = graph.csr()
    walks = kernels.random_walks(indptr, indices, graph.labels, int(vertex), _walk_uniforms(seed, vertex, n, d))
    return RandomWalkDescriptor(walks)


def _check_labels(graph, L):
    if len(graph) and graph.labels.max() >= L:
        raise LabelRangeError(f"label {graph.labels.max()} >= label count {L}")


def _normalize_rows(H):
    norms = np.linalg.norm(H, axis=1, keepdims=True)
    return np.divide(H, norms, out=np.zeros_like(H), where=norms > 0)


def histogram_descriptors(graph, L):
    """``V x L**3`` matrix of unit-norm (or zero) histograms for all vertices."""
    _check_labels(graph, L)
    indptr, indices = graph.csr()
    return _normalize_rows(kernels.triple_histograms(indptr, indices, graph.labels, int(L)))


def histogram_descriptor(graph, vertex, L):
    _check_labels(graph, L)
    if not 0 <= vertex < len(graph):
        raise IndexError(f"vertex {vertex} out of range")
    indptr, indices = graph.csr()
    H = np.zeros(L ** 3)
    lv = graph.labels[vertex] * L * L
    for a in indices[indptr[vertex]:indptr[vertex + 1]]:
        start = lv + graph.labels[a] * L
        H[start:start + L] += np.bincount(graph.labels[indices[indptr[a]:indptr[a + 1]]], minlength=L)
    return HistogramDescriptor(_normalize_rows(H[None, :])[0])


def descriptor_similarity(a, b):
    """Cosine similarity for histograms; shared-walk fraction for random walks."""
    if isinstance(a, HistogramDescriptor) and isinstance(b, HistogramDescriptor):
        x, y = np.asarray(a.bins, dtype=np.float64), np.asarray(b.bins, dtype=np.float64)
        if x.shape != y.shape:
            raise InputError("histogram dimensions differ")
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0 or ny == 0:
            return 0.0
        return float(np.dot(x, y) / (nx * ny))
    if isinstance(a, RandomWalkDescriptor) and isinstance(b, RandomWalkDescriptor):
        if a.walks.shape != b.walks.shape:
            raise InputError("walk matrices differ in shape")
        codes = _walk_codes(np.stack([a.walks, b.walks]))
        hits = kernels.walk_overlap(codes[:1], codes[1:], np.zeros(1, np.int64), np.zeros(1, np.int64))
        return float(hits[0]) / a.walks.shape[0]
    raise InputError("descriptors must be of the same variant")


def _walk_codes(walks):
    """Sort-ready integer code per walk row: ``(..., n, d) -> (..., n)``."""
    base = int(walks.max(initial=0)) + 1
    if base ** walks.shape[-1] >= 2 ** 62:
        raise InputError("walk depth too large to encode")
    codes = np.zeros(walks.shape[:-1], dtype=np.int64)
    for k in range(walks.shape[-1]):
        codes = codes * base + walks[..., k]
    return np.sort(codes, axis=-1)


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """Descriptors of every vertex of one graph plus the parameters used."""

    kind: str
    params: tuple
    data: np.ndarray

    def __len__(self):
        return len(self.data)

    def __getitem__(self, i):
        if self.kind == "histogram":
            return HistogramDescriptor(self.data[i])
        return RandomWalkDescriptor(self.data[i])


def compute_descriptors(graph, kind="histogram", label_count=None, n=DEFAULT_WALK_COUNT,
                        d=DEFAULT_WALK_DEPTH, seed=0):
    if kind == "histogram":
        L = graph.label_count if label_count is None else int(label_count)
        return DescriptorSet("histogram", (L,), histogram_descriptors(graph, L))
    if kind == "random_walk":
        if n < 1 or d < 2:
            raise InputError("need n >= 1 walks of depth d >= 2")
        if label_count is not None:
            _check_labels(graph, label_count)
        indptr, indices = graph.csr()
        walks = np.empty((len(graph), n, d), dtype=np.int64)
        for v in range(len(graph)):
            walks[v] = kernels.random_walks(indptr, indices, graph.labels, v, _walk_uniforms(seed, v, n, d))
        return DescriptorSet("random_walk", (n, d, int(seed)), walks)
    raise InputError(f"unknown descriptor kind {kind!r}")
