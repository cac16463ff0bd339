"""The compiled kernels and their pure-Python twins must agree exactly."""
import numpy as np
import pytest

from semloc import _backend, _pykernels
from semloc.graph import SemanticGraph

ck = pytest.importorskip("semloc._ckernels")


def test_backend_selected():
    assert _backend.BACKEND in ("cython", "python")


def test_label_components(rng):
    for _ in range(20):
        sem = rng.integers(0, 4, tuple(rng.integers(1, 40, 2))).astype(np.int64)
        keep = (rng.random(sem.shape) > 0.1).astype(np.uint8)
        a, na = ck.label_components(sem, keep)
        b, nb = _pykernels.label_components(sem, keep)
        assert na == nb and np.array_equal(a, b)


def test_constraint_matrix(rng):
    dq = SemanticGraph(rng.uniform(0, 80, (50, 3)), np.zeros(50)).distance_matrix
    dt = SemanticGraph(rng.uniform(0, 80, (50, 3)), np.zeros(50)).distance_matrix
    qi, ti = rng.integers(0, 50, 300), rng.integers(0, 50, 300)
    for rule in (0, 1):
        assert np.array_equal(ck.constraint_matrix(dq, dt, qi, ti, 9.0, rule),
                              _pykernels.constraint_matrix(dq, dt, qi, ti, 9.0, rule))


def test_reject_loop(rng):
    for _ in range(50):
        m = int(rng.integers(1, 120))
        A = np.triu(rng.random((m, m)) < rng.uniform(0.1, 0.9), 1)
        M = (A | A.T | np.eye(m, dtype=bool)).astype(np.uint8)
        for original in (False, True):
            eta = float(rng.uniform(0.1, 0.9))
            assert np.array_equal(np.asarray(ck.reject_loop(M, eta, original), dtype=bool),
                                  np.asarray(_pykernels.reject_loop(M, eta, original), dtype=bool))


def test_random_walks_and_histograms(rng):
    g = SemanticGraph(rng.uniform(0, 50, (60, 3)), rng.integers(0, 5, 60), 12)
    indptr, indices = g.csr()
    for v in (0, 17, 59):
        u = rng.random((30, 5))
        assert np.array_equal(ck.random_walks(indptr, indices, g.labels, v, u),
                              _pykernels.random_walks(indptr, indices, g.labels, v, u))
    np.testing.assert_array_equal(ck.triple_histograms(indptr, indices, g.labels, 5),
                                  _pykernels.triple_histograms(indptr, indices, g.labels, 5))


def test_score_models_bitwise(rng):
    from conftest import random_rotation
    R = np.stack([random_rotation(rng) for _ in range(40)])
    T = rng.normal(size=(40, 3)) * 5
    pq, pt = rng.normal(size=(200, 3)) * 10, rng.normal(size=(200, 3)) * 10
    ca, sa = ck.score_models(R, T, pq, pt, 6.0)
    cb, sb = _pykernels.score_models(R, T, pq, pt, 6.0)
    assert np.array_equal(ca, cb)
    np.testing.assert_allclose(sa, sb, rtol=1e-12, atol=0)


def test_walk_overlap(rng):
    cq = np.sort(rng.integers(0, 6, (20, 15)), axis=1)
    ct = np.sort(rng.integers(0, 6, (25, 15)), axis=1)
    qi, ti = rng.integers(0, 20, 100), rng.integers(0, 25, 100)
    got = ck.walk_overlap(cq, ct, qi, ti)
    assert np.array_equal(got, _pykernels.walk_overlap(cq, ct, qi, ti))
    for k in range(100):
        a, b = list(cq[qi[k]]), list(ct[ti[k]])
        hits = 0
        for x in a:
            if x in b:
                b.remove(x)
                hits += 1
        assert got[k] == hits
