"""Time each hot kernel under the compiled and pure-Python backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from semloc import _pykernels
from semloc.bench import planted_match_set
from semloc.graph import SemanticGraph

try:
    from semloc import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    sem = rng.integers(0, 6, (240, 320))
    sem = np.repeat(np.repeat(sem[::8, ::8], 8, 0), 8, 1).astype(np.int64)
    keep = np.ones(sem.shape, dtype=np.uint8)
    yield "label_components 240x320", lambda k: k.label_components(sem, keep)

    gq, gt, m, _, _ = planted_match_set(1000, 0.3, seed=0)
    dq, dt = gq.distance_matrix, gt.distance_matrix
    qi, ti = m.query.astype(np.int64), m.target.astype(np.int64)
    yield "constraint_matrix m=1000", lambda k: k.constraint_matrix(dq, dt, qi, ti, 2.0, 1)

    M = _pykernels.constraint_matrix(dq, dt, qi, ti, 2.0, 1)
    yield "reject_loop m=1000", lambda k: k.reject_loop(M, 0.5, False)

    g = SemanticGraph(rng.uniform(0, 200, (300, 3)), rng.integers(0, 8, 300), 15.0)
    indptr, indices = g.csr()
    u = rng.random((50, 4))
    yield "random_walks 50x4 walks", lambda k: k.random_walks(indptr, indices, g.labels, 0, u)
    yield "triple_histograms n=300 L=8", lambda k: k.triple_histograms(indptr, indices, g.labels, 8)

    q, _ = np.linalg.qr(rng.normal(size=(64, 3, 3)))
    R = q * np.sign(np.linalg.det(q))[:, None, None]
    T = rng.normal(size=(64, 3))
    pq, pt = gq.positions, gt.positions
    yield "score_models 64 models x 1000", lambda k: k.score_models(R, T, pq, pt, 5.0)

    cq = np.sort(rng.integers(0, 8, (300, 200)), axis=1)
    ct = np.sort(rng.integers(0, 8, (300, 200)), axis=1)
    wi, wj = rng.integers(0, 300, 2000), rng.integers(0, 300, 2000)
    yield "walk_overlap 2000 pairs", lambda k: k.walk_overlap(cq, ct, wi, wj)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernels not built; only the Python backend is available")
    print(f"{'kernel':32s} {'cython ms':>10s} {'python ms':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)):
        tp = best_of(lambda: fn(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:32s} {'-':>10s} {tp * 1e3:10.2f} {'-':>8s}")
            continue
        tc = best_of(lambda: fn(_ckernels), args.repeat)
        print(f"{name:32s} {tc * 1e3:10.3f} {tp * 1e3:10.2f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
