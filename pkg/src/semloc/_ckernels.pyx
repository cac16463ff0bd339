# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a pure-Python twin with the same signature in
``_pykernels``; both must return identical results for identical inputs.
"""
import numpy as np

from libc.math cimport fabs


def label_components(const long long[:, ::1] semantic, const unsigned char[:, ::1] keep):
    """Seed-fill 4-connected regions of equal label.

    Returns ``(components, count)`` where ``components`` holds the region id
    of each kept pixel (regions numbered in raster order of their seed
    pixel) and -1 elsewhere.
    """
    cdef Py_ssize_t h = semantic.shape[0]
    cdef Py_ssize_t w = semantic.shape[1]
    out = np.full((h, w), -1, dtype=np.int64)
    stack_arr = np.empty(max(h * w, 1), dtype=np.int64)
    cdef long long[:, ::1] comp = out
    cdef long long[::1] stack = stack_arr
    cdef Py_ssize_t r, c, y, x, top
    cdef long long p, lab, n = 0

    with nogil:
        for r in range(h):
            for c in range(w):
                if keep[r, c] == 0 or comp[r, c] >= 0:
                    continue
                lab = semantic[r, c]
                comp[r, c] = n
                stack[0] = r * w + c
                top = 1
                while top > 0:
                    top -= 1
                    p = stack[top]
                    y = p // w
                    x = p - y * w
                    if y > 0 and keep[y - 1, x] and comp[y - 1, x] < 0 and semantic[y - 1, x] == lab:
                        comp[y - 1, x] = n
                        stack[top] = p - w
                        top += 1
                    if y + 1 < h and keep[y + 1, x] and comp[y + 1, x] < 0 and semantic[y + 1, x] == lab:
                        comp[y + 1, x] = n
                        stack[top] = p + w
                        top += 1
                    if x > 0 and keep[y, x - 1] and comp[y, x - 1] < 0 and semantic[y, x - 1] == lab:
                        comp[y, x - 1] = n
                        stack[top] = p - 1
                        top += 1
                    if x + 1 < w and keep[y, x + 1] and comp[y, x + 1] < 0 and semantic[y, x + 1] == lab:
                        comp[y, x + 1] = n
                        stack[top] = p + 1
                        top += 1
                n += 1
    return out, int(n)


def constraint_matrix(const double[:, ::1] dq, const double[:, ::1] dt,
                      const long long[::1] qi, const long long[::1] ti,
                      double threshold, int rule):
    """Pairwise match consistency; rule 0 compares neighbor predicates,
    rule 1 compares distances."""
    cdef Py_ssize_t m = qi.shape[0]
    out = np.empty((m, m), dtype=np.uint8)
    cdef unsigned char[:, ::1] M = out
    cdef Py_ssize_t i, j
    cdef const double[::1] rq
    cdef const double[::1] rt
    with nogil:
        # full rows keep the writes sequential
        for i in range(m):
            rq = dq[qi[i]]
            rt = dt[ti[i]]
            if rule == 0:
                for j in range(m):
                    M[i, j] = (rq[qi[j]] < threshold) == (rt[ti[j]] < threshold)
            else:
                for j in range(m):
                    M[i, j] = fabs(rq[qi[j]] - rt[ti[j]]) < threshold
            M[i, i] = 1
    return out


def reject_loop(const unsigned char[:, ::1] M, double eta, bint original):
    """Greedy worst-match peeling on a symmetric matrix; returns the survivor mask."""
    cdef Py_ssize_t m = M.shape[0]
    alive_arr = np.ones(m, dtype=np.uint8)
    score_arr = np.zeros(m, dtype=np.int32)
    cdef unsigned char[::1] alive = alive_arr
    cdef int[::1] score = score_arr
    cdef Py_ssize_t n = m, i, j, best
    cdef int best_v, acc
    # removed matches get a score no live match can reach
    cdef int dead = 2 * <int>m + 2
    cdef double denom
    if m == 0:
        return alive_arr.astype(bool)
    with nogil:
        for i in range(m):
            acc = 0
            for j in range(m):
                acc += M[i, j]
            score[i] = acc
        while n > 0:
            best = 0
            best_v = score[0]
            for j in range(1, m):
                if score[j] < best_v:
                    best = j
                    best_v = score[j]
            denom = <double>m if original else <double>n
            if not (best_v < eta * denom):
                break
            # symmetric, so the removed row is also the removed column
            for j in range(m):
                score[j] -= M[best, j]
            score[best] = dead
            alive[best] = 0
            n -= 1
    return alive_arr.astype(bool)


def random_walks(const long long[::1] indptr, const long long[::1] indices,
                 const long long[::1] labels, long long start, const double[:, ::1] u):
    """Label sequences of ``u.shape[0]`` walks of depth ``u.shape[1] + 1``."""
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t d = u.shape[1] + 1
    out = np.empty((n, d), dtype=np.int64)
    cdef long long[:, ::1] walks = out
    cdef Py_ssize_t r, s
    cdef long long cur, deg, k
    with nogil:
        for r in range(n):
            cur = start
            walks[r, 0] = labels[cur]
            for s in range(1, d):
                deg = indptr[cur + 1] - indptr[cur]
                if deg > 0:
                    k = <long long>(u[r, s - 1] * deg)
                    if k >= deg:
                        k = deg - 1
                    cur = indices[indptr[cur] + k]
                walks[r, s] = labels[cur]
    return out


def triple_histograms(const long long[::1] indptr, const long long[::1] indices,
                      const long long[::1] labels, long long L):
    """Unnormalized label-triple counts of all 3-vertex walks per vertex."""
    cdef Py_ssize_t V = labels.shape[0]
    out = np.zeros((V, L * L * L), dtype=np.float64)
    cdef double[:, ::1] H = out
    cdef Py_ssize_t v, ia, ib, a
    cdef long long base, mid
    with nogil:
        for v in range(V):
            base = labels[v] * L * L
            for ia in range(indptr[v], indptr[v + 1]):
                a = indices[ia]
                mid = base + labels[a] * L
                for ib in range(indptr[a], indptr[a + 1]):
                    H[v, mid + labels[indices[ib]]] += 1.0
    return out


def score_models(const double[:, :, ::1] R, const double[:, ::1] T,
                 const double[:, ::1] pq, const double[:, ::1] pt, double threshold):
    """Inlier count and inlier squared-residual sum of each candidate model."""
    cdef Py_ssize_t K = R.shape[0]
    cdef Py_ssize_t m = pq.shape[0]
    counts_arr = np.zeros(K, dtype=np.int64)
    sse_arr = np.zeros(K, dtype=np.float64)
    cdef long long[::1] counts = counts_arr
    cdef double[::1] sse = sse_arr
    cdef Py_ssize_t k, i
    cdef double x, y, z, r2, thr2 = threshold * threshold
    with nogil:
        for k in range(K):
            for i in range(m):
                x = R[k, 0, 0] * pt[i, 0] + R[k, 0, 1] * pt[i, 1] + R[k, 0, 2] * pt[i, 2] + T[k, 0] - pq[i, 0]
                y = R[k, 1, 0] * pt[i, 0] + R[k, 1, 1] * pt[i, 1] + R[k, 1, 2] * pt[i, 2] + T[k, 1] - pq[i, 1]
                z = R[k, 2, 0] * pt[i, 0] + R[k, 2, 1] * pt[i, 1] + R[k, 2, 2] * pt[i, 2] + T[k, 2] - pq[i, 2]
                r2 = x * x + y * y + z * z
                if r2 < thr2:
                    counts[k] += 1
                    sse[k] += r2
    return counts_arr, sse_arr


def walk_overlap(const long long[:, ::1] codes_q, const long long[:, ::1] codes_t,
                 const long long[::1] qi, const long long[::1] ti):
    """Multiset intersection size of sorted walk-code rows for each pair."""
    cdef Py_ssize_t P = qi.shape[0]
    cdef Py_ssize_t n = codes_q.shape[1]
    out = np.zeros(P, dtype=np.int64)
    cdef long long[::1] hits = out
    cdef Py_ssize_t p, a, b
    cdef long long cnt, x, y
    with nogil:
        for p in range(P):
            a = 0
            b = 0
            cnt = 0
            while a < n and b < n:
                x = codes_q[qi[p], a]
                y = codes_t[ti[p], b]
                if x == y:
                    cnt += 1
                    a += 1
                    b += 1
                elif x < y:
                    a += 1
                else:
                    b += 1
            hits[p] = cnt
    return out
