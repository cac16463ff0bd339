"""Pure-Python/numpy twins of the compiled kernels in ``_ckernels.pyx``.

Signatures and results match the compiled module exactly; these run when
the extension is not built or when ``SEMLOC_BACKEND=python`` is set.
"""
import numpy as np


def label_components(semantic, keep):
    h, w = semantic.shape
    comp = np.full((h, w), -1, dtype=np.int64)
    sem = semantic.tolist()
    kp = keep.tolist()
    cm = comp.tolist()
    n = 0
    for r in range(h):
        for c in range(w):
            if not kp[r][c] or cm[r][c] >= 0:
                continue
            lab = sem[r][c]
            cm[r][c] = n
            stack = [(r, c)]
            while stack:
                y, x = stack.pop()
                for yy, xx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= yy < h and 0 <= xx < w and kp[yy][xx] and cm[yy][xx] < 0 and sem[yy][xx] == lab:
                        cm[yy][xx] = n
                        stack.append((yy, xx))
            n += 1
    if h and w:
        comp[:] = cm
    return comp, n


def constraint_matrix(dq, dt, qi, ti, threshold, rule):
    a = dq[np.ix_(qi, qi)]
    b = dt[np.ix_(ti, ti)]
    if rule == 0:
        M = (a < threshold) == (b < threshold)
    else:
        M = np.abs(a - b) < threshold
    M = M.astype(np.uint8)
    np.fill_diagonal(M, 1)
    return M


def reject_loop(M, eta, original):
    m = M.shape[0]
    score = M.sum(axis=1, dtype=np.int64)
    alive = np.ones(m, dtype=bool)
    big = np.iinfo(np.int64).max
    n = m
    while n > 0:
        masked = np.where(alive, score, big)
        best = int(np.argmin(masked))
        denom = float(m if original else n)
        if not (score[best] < eta * denom):
            break
        score -= M[best]
        alive[best] = False
        n -= 1
    return alive


def random_walks(indptr, indices, labels, start, u):
    n, steps = u.shape
    walks = np.empty((n, steps + 1), dtype=np.int64)
    ip = indptr.tolist()
    ix = indices.tolist()
    lab = labels.tolist()
    uu = u.tolist()
    for r in range(n):
        cur = start
        row = [lab[cur]]
        for s in range(steps):
            deg = ip[cur + 1] - ip[cur]
            if deg > 0:
                k = min(int(uu[r][s] * deg), deg - 1)
                cur = ix[ip[cur] + k]
            row.append(lab[cur])
        walks[r] = row
    return walks


def triple_histograms(indptr, indices, labels, L):
    V = labels.shape[0]
    rows = np.repeat(np.arange(V), np.diff(indptr))
    A = np.zeros((V, V))
    A[rows, indices] = 1.0
    onehot = np.zeros((V, L))
    onehot[np.arange(V), labels] = 1.0
    # per middle vertex: outer product of its label with its neighbors' label counts
    around = A @ onehot
    pairs = (onehot[:, :, None] * around[:, None, :]).reshape(V, L * L)
    tails = A @ pairs
    out = np.zeros((V, L * L * L))
    for v in range(V):
        base = labels[v] * L * L
        out[v, base:base + L * L] = tails[v]
    return out


def score_models(R, T, pq, pt, threshold):
    x = (R[:, 0, 0, None] * pt[None, :, 0] + R[:, 0, 1, None] * pt[None, :, 1]
         + R[:, 0, 2, None] * pt[None, :, 2] + T[:, 0, None] - pq[None, :, 0])
    y = (R[:, 1, 0, None] * pt[None, :, 0] + R[:, 1, 1, None] * pt[None, :, 1]
         + R[:, 1, 2, None] * pt[None, :, 2] + T[:, 1, None] - pq[None, :, 1])
    z = (R[:, 2, 0, None] * pt[None, :, 0] + R[:, 2, 1, None] * pt[None, :, 1]
         + R[:, 2, 2, None] * pt[None, :, 2] + T[:, 2, None] - pq[None, :, 2])
    r2 = x * x + y * y + z * z
    hit = r2 < threshold * threshold
    counts = hit.sum(axis=1).astype(np.int64)
    sse = np.zeros(R.shape[0])
    for k in range(R.shape[0]):
        # sequential sum keeps the compiled kernel's accumulation order
        acc = 0.0
        for v in r2[k][hit[k]].tolist():
            acc += v
        sse[k] = acc
    return counts, sse


def walk_overlap(codes_q, codes_t, qi, ti):
    out = np.zeros(len(qi), dtype=np.int64)
    for p, (a, b) in enumerate(zip(qi.tolist(), ti.tolist())):
        common = np.intersect1d(codes_q[a], codes_t[b])
        if len(common) == 0:
            continue
        ua, na = np.unique(codes_q[a], return_counts=True)
        ub, nb = np.unique(codes_t[b], return_counts=True)
        out[p] = np.minimum(na[np.searchsorted(ua, common)], nb[np.searchsorted(ub, common)]).sum()
    return out
