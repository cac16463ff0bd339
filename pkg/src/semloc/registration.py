"""Rigid registration from fixed correspondences.

Transforms map target-graph points onto query-graph points:
``R @ p_t + T ~ p_q``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from semloc._backend import kernels
from semloc.descriptors import DEFAULT_WALK_COUNT, DEFAULT_WALK_DEPTH, compute_descriptors
from semloc.errors import DegenerateConfigurationError, InputError, LocalizationError, NoModelError
from semloc.graph import DEFAULT_EDGE_THRESHOLD, RigidTransform
from semloc.matching import DEFAULT_SIMILARITY_THRESHOLD, MatchSet, match_graphs
from semloc.rejection import DEFAULT_ETA, reject

# smallest/largest singular value ratio below which a cross-covariance is
# treated as rank deficient
RANK_TOL = 1e-9
# samples are drawn in chunks of 8, 16, 32, then 64: clean match sets stop
# after a few samples, contaminated ones amortize the batched solve
FIRST_CHUNK = 8
CHUNK = 64


@dataclass(frozen=True)
class RansacConfig:
    """RANSAC settings.

    ``iterations`` caps the number of minimal samples. With ``confidence``
    set, sampling stops early once the probability of having missed an
    all-inlier sample, given the best inlier ratio so far, drops below
    ``1 - confidence``; ``None`` always draws ``iterations`` samples.
    """

    threshold: float = 5.0
    iterations: int = 1000
    seed: int = 0
    min_sample: int = 3
    confidence: float | None = 0.999

    def __post_init__(self):
        if not self.threshold > 0:
            raise InputError("RANSAC threshold must be positive")
        if self.iterations < 1:
            raise InputError("RANSAC needs at least one iteration")
        if self.min_sample != 3:
            raise InputError("minimal sample size is fixed at 3")
        if self.confidence is not None and not 0 < self.confidence < 1:
            raise InputError("confidence must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    """``sample_inliers`` is the consensus of the best minimal-sample model
    before re-fitting."""

    transform: RigidTransform
    inlier_matches: MatchSet
    residual_rms: float
    iterations: int = 0
    candidates: MatchSet | None = None
    survivors: MatchSet | None = None
    timings: dict = field(default_factory=dict)
    sample_inliers: int = 0


def _procrustes(pq, pt, w):
    """Batched weighted closed-form solve; returns R, T and a degeneracy mask.

    Arrays carry a leading batch axis: ``pq, pt`` are ``(K, n, 3)``, ``w`` is
    ``(K, n)``.
    """
    w = (w / w.sum(axis=1, keepdims=True))[:, :, None]
    cq = (w * pq).sum(axis=1)
    ct = (w * pt).sum(axis=1)
    H = np.matmul((w * (pt - ct[:, None, :])).transpose(0, 2, 1), pq - cq[:, None, :])
    U, s, Vt = np.linalg.svd(H)
    degenerate = ~(s[:, 1] > RANK_TOL * s[:, 0])
    V, Ut = Vt.transpose(0, 2, 1), U.transpose(0, 2, 1)
    d = np.sign(np.linalg.det(np.matmul(V, Ut)))
    d[d == 0] = 1.0
    V[:, :, 2] *= d[:, None]
    R = np.matmul(V, Ut)
    T = cq - np.matmul(R, ct[:, :, None])[:, :, 0]
    return R, T, degenerate


def solve_weighted(pq, pt, w=None):
    """Minimize ``sum_i w_i * |R @ pt_i + T - pq_i|**2`` over proper rigid motions."""
    pq = np.asarray(pq, dtype=np.float64).reshape(-1, 3)
    pt = np.asarray(pt, dtype=np.float64).reshape(-1, 3)
    w = np.ones(len(pq)) if w is None else np.asarray(w, dtype=np.float64).reshape(-1)
    if not (len(pq) == len(pt) == len(w)):
        raise InputError("point and weight lists differ in length")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InputError("weights must be finite and non-negative")
    if np.count_nonzero(w) < 3 or not w.sum() > 0:
        raise DegenerateConfigurationError("need at least 3 weighted points")
    R, T, degenerate = _procrustes(pq[None], pt[None], w[None])
    if degenerate[0]:
        raise DegenerateConfigurationError("points are collinear or coincident")
    return RigidTransform(R[0], T[0])


def residuals(transform, pq, pt):
    return np.linalg.norm(transform.apply(pt) - pq, axis=1)


def _sample_triples(u, m):
    """Map uniforms in [0, 1) to three distinct indices below ``m``."""
    a = np.minimum((u[:, 0] * m).astype(np.int64), m - 1)
    b = np.minimum((u[:, 1] * (m - 1)).astype(np.int64), m - 2)
    c = np.minimum((u[:, 2] * (m - 2)).astype(np.int64), m - 3)
    b += b >= a
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    c += c >= lo
    c += c >= hi
    return np.stack([a, b, c], axis=1)


def _required_iterations(inliers, m, confidence):
    w = inliers / m
    p_good = w ** 3
    if p_good >= 1.0:
        return 1
    if p_good <= 0.0:
        return math.inf
    return math.ceil(math.log(1.0 - confidence) / math.log1p(-p_good))


def ransac(gq, gt, matches, cfg=RansacConfig()):
    """Best-consensus rigid model over minimal samples of three matches.

    Candidate models are ranked by inlier count, then by inlier RMS. The
    winner is re-fitted on its inliers until the inlier set is stable.
    Sample ``k`` depends only on ``(seed, k)``, so a run with more
    iterations extends a shorter one.
    """
    m = len(matches)
    if m < 3:
        raise NoModelError(f"need at least 3 matches, got {m}", stage="ransac")
    matches.validate(gq, gt)
    pq = np.ascontiguousarray(gq.positions[matches.query])
    pt = np.ascontiguousarray(gt.positions[matches.target])
    rng = np.random.default_rng(cfg.seed)

    best_count, best_sse, best_model = 0, math.inf, None
    limit = cfg.iterations
    done = 0
    chunk = FIRST_CHUNK
    while done < limit:
        u = rng.random((chunk, 3))
        take = min(chunk, limit - done)
        chunk = min(2 * chunk, CHUNK)
        idx = _sample_triples(u[:take], m)
        R, T, degenerate = _procrustes(pq[idx], pt[idx], np.ones((take, 3)))
        counts, sse = kernels.score_models(np.ascontiguousarray(R), np.ascontiguousarray(T), pq, pt,
                                           float(cfg.threshold))
        for k in range(take):
            done += 1
            if not degenerate[k] and counts[k] >= 3:
                if counts[k] > best_count or (counts[k] == best_count and sse[k] / counts[k] < best_sse / best_count):
                    best_count, best_sse = int(counts[k]), float(sse[k])
                    best_model = (R[k], T[k])
                    if cfg.confidence is not None:
                        limit = min(cfg.iterations, max(done, _required_iterations(best_count, m, cfg.confidence)))
            if done >= limit:
                break

    if best_model is None:
        raise NoModelError("no minimal sample reached 3 inliers", stage="ransac")

    transform = RigidTransform(*best_model)
    inliers = residuals(transform, pq, pt) < cfg.threshold
    seen = set()
    while True:
        key = inliers.tobytes()
        if key in seen or inliers.sum() < 3:
            break
        seen.add(key)
        try:
            refit = solve_weighted(pq[inliers], pt[inliers])
        except DegenerateConfigurationError:
            break
        refit_inliers = residuals(refit, pq, pt) < cfg.threshold
        if refit_inliers.sum() < 3:
            break
        transform, inliers = refit, refit_inliers
    res = residuals(transform, pq, pt)[inliers]
    rms = float(np.sqrt(np.mean(res ** 2)))
    return RegistrationResult(transform, matches.subset(inliers), rms, iterations=done,
                              sample_inliers=best_count)


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of :func:`localize`.

    ``min_inliers`` is the smallest final consensus accepted as a
    localization; wrong matches between unrelated maps routinely align by
    chance in groups of 4 to 9.
    """

    edge_threshold: float = DEFAULT_EDGE_THRESHOLD
    nei_threshold: float | None = None
    descriptor: str = "histogram"
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    eta: float = DEFAULT_ETA
    eta_denominator: str = "current"
    consistency_rule: str = "distance"
    ransac: RansacConfig = RansacConfig()
    seed: int = 0
    label_count: int | None = None
    walk_count: int = DEFAULT_WALK_COUNT
    walk_depth: int = DEFAULT_WALK_DEPTH
    use_rejection: bool = True
    min_inliers: int = 10

    def __post_init__(self):
        if not self.edge_threshold > 0:
            raise InputError("edge_threshold must be positive")
        if self.nei_threshold is not None and not self.nei_threshold > 0:
            raise InputError("nei_threshold must be positive")
        if self.consistency_rule not in ("distance", "nei"):
            raise InputError(f"unknown consistency rule {self.consistency_rule!r}")
        if self.eta_denominator not in ("current", "original"):
            raise InputError("eta_denominator must be 'current' or 'original'")
        if not 0 < self.eta < 1:
            raise InputError("eta must lie in (0, 1)")
        if self.descriptor not in ("histogram", "random_walk"):
            raise InputError(f"unknown descriptor {self.descriptor!r}")
        if self.min_inliers < 3:
            raise InputError("min_inliers must be at least 3")

    def with_ransac(self, **changes):
        return replace(self, ransac=replace(self.ransac, **changes))


def describe(gq, gt, cfg):
    L = cfg.label_count
    if L is None:
        L = max(gq.label_count, gt.label_count)
    kw = dict(label_count=L, n=cfg.walk_count, d=cfg.walk_depth, seed=cfg.seed)
    return compute_descriptors(gq, cfg.descriptor, **kw), compute_descriptors(gt, cfg.descriptor, **kw)


def localize(gq, gt, dq=None, dt=None, cfg=PipelineConfig(), matches=None):
    """Match, reject, RANSAC and refit.

    Descriptors are computed when not supplied; a precomputed candidate set
    may be passed as ``matches`` to skip matching. Stage wall times (ms) are
    reported in ``timings``.
    """
    if len(gq) == 0 or len(gt) == 0:
        raise InputError("both graphs must be non-empty")
    timings = {}
    t0 = time.perf_counter()
    if matches is None:
        if dq is None or dt is None:
            dq, dt = describe(gq, gt, cfg)
        t1 = time.perf_counter()
        timings["describe"] = (t1 - t0) * 1e3
        matches = match_graphs(gq, dq, gt, dt, cfg.similarity_threshold)
        t2 = time.perf_counter()
        timings["match"] = (t2 - t1) * 1e3
    else:
        t2 = t0
    if len(matches) == 0:
        raise LocalizationError("no candidate matches", stage="match")
    if cfg.use_rejection:
        survivors = reject(gq, gt, matches, cfg.nei_threshold, cfg.eta, cfg.eta_denominator,
                           cfg.consistency_rule)
    else:
        survivors = matches
    t3 = time.perf_counter()
    timings["reject"] = (t3 - t2) * 1e3
    if len(survivors) < 3:
        raise LocalizationError(f"only {len(survivors)} matches survived rejection", stage="reject")
    result = ransac(gq, gt, survivors, cfg.ransac)
    timings["ransac"] = (time.perf_counter() - t3) * 1e3
    if len(result.inlier_matches) < cfg.min_inliers:
        raise NoModelError(f"best model has {len(result.inlier_matches)} inliers, "
                           f"need {cfg.min_inliers}", stage="ransac")
    return replace(result, candidates=matches, survivors=survivors, timings=timings)
