"""Synthetic scenarios with planted ground truth, metrics and parameter sweeps.

Scenario layout: the query robot observes the slab ``x in [0, W]``, the
target robot the slab ``x in [W(1-o), W(2-o)]`` where ``o`` is the overlap
rate, so the objects in ``[W(1-o), W]`` are seen by both. Query
coordinates are world coordinates; target coordinates are world
coordinates moved by the planted transform plus isotropic Gaussian noise
truncated at 4 sigma. Vertex order in both graphs is shuffled.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from semloc.errors import InfeasibleScenarioError, InputError, SemlocError
from semloc.graph import DEFAULT_EDGE_THRESHOLD, RigidTransform, SemanticGraph, rotation_angle
from semloc.matching import MatchSet
from semloc.registration import PipelineConfig, describe, localize

DEFAULT_TP = 10.0
FAILURE_T_ERR = 20.0
NOISE_CLIP = 4.0


@dataclass(frozen=True)
class ScenarioConfig:
    object_count: int = 300
    label_count: int = 8
    area: tuple[float, float, float] = (200.0, 200.0, 10.0)
    overlap_rate: float = 0.6
    position_noise_sigma: float = 0.5
    outlier_vertex_rate: float = 0.2
    planted_transform: RigidTransform | None = None
    seed: int = 0
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD

    def __post_init__(self):
        if not 0 <= self.overlap_rate <= 1 or not 0 <= self.outlier_vertex_rate <= 1:
            raise InputError("rates must lie in [0, 1]")
        if self.position_noise_sigma < 0:
            raise InputError("noise sigma must be non-negative")
        if self.object_count < 1 or self.label_count < 1:
            raise InputError("object_count and label_count must be positive")
        if len(self.area) != 3 or min(self.area) < 0 or self.area[0] <= 0:
            raise InputError("area must be three non-negative extents")


@dataclass(frozen=True, eq=False)
class Truth:
    """Ground truth of a scenario.

    ``transform`` maps target coordinates to query coordinates, the same
    direction a localization result uses. ``pairs`` lists the
    ``(query, target)`` vertex ids of every shared object.
    """

    transform: RigidTransform
    pairs: np.ndarray

    @property
    def planted(self):
        """Query-to-target transform used to generate the target graph."""
        return self.transform.inverse()


def random_planted_transform(rng, area):
    yaw = rng.uniform(0.0, 2.0 * math.pi)
    R = Rotation.from_euler("z", yaw).as_matrix()
    T = np.array([rng.uniform(-area[0] / 2, area[0] / 2), rng.uniform(-area[1] / 2, area[1] / 2),
                  rng.uniform(-1.0, 1.0)])
    return RigidTransform(R, T)


def _bounded_noise(rng, n, sigma):
    noise = rng.normal(0.0, sigma, size=(n, 3))
    if sigma > 0:
        while True:
            bad = np.linalg.norm(noise, axis=1) > NOISE_CLIP * sigma
            if not bad.any():
                break
            noise[bad] = rng.normal(0.0, sigma, size=(int(bad.sum()), 3))
    return noise


def _uniform(rng, n, lo, hi):
    return rng.uniform(lo, hi, size=(n, 3)) if n else np.zeros((0, 3))


def generate_scenario(cfg):
    """Return ``(gq, gt, truth)`` for a scenario configuration."""
    N = cfg.object_count
    shared = int(round(cfg.overlap_rate * N))
    if 0 < shared < 3:
        raise InfeasibleScenarioError(f"overlap yields {shared} shared objects; need 0 or at least 3")
    rng = np.random.default_rng(cfg.seed)
    W, H, Z = cfg.area
    o = cfg.overlap_rate
    x_split, x_end = W * (1 - o), W * (2 - o)
    n_out = int(round(cfg.outlier_vertex_rate * N))
    L = cfg.label_count

    p_shared = _uniform(rng, shared, (x_split, 0, 0), (W, H, Z))
    p_qonly = _uniform(rng, N - shared, (0, 0, 0), (x_split, H, Z))
    p_tonly = _uniform(rng, N - shared, (W, 0, 0), (x_end, H, Z))
    p_qout = _uniform(rng, n_out, (0, 0, 0), (W, H, Z))
    p_tout = _uniform(rng, n_out, (x_split, 0, 0), (x_end, H, Z))
    l_shared = rng.integers(0, L, shared)
    l_qonly = rng.integers(0, L, N - shared)
    l_tonly = rng.integers(0, L, N - shared)
    l_qout = rng.integers(0, L, n_out)
    l_tout = rng.integers(0, L, n_out)

    planted = cfg.planted_transform
    if planted is None:
        planted = random_planted_transform(rng, cfg.area)

    q_pos = np.vstack([p_shared, p_qonly, p_qout])
    q_lab = np.concatenate([l_shared, l_qonly, l_qout])
    t_world = np.vstack([p_shared, p_tonly, p_tout])
    t_pos = planted.apply(t_world) + _bounded_noise(rng, len(t_world), cfg.position_noise_sigma)
    t_lab = np.concatenate([l_shared, l_tonly, l_tout])

    q_perm = rng.permutation(len(q_pos))
    t_perm = rng.permutation(len(t_pos))
    q_inv = np.argsort(q_perm)
    t_inv = np.argsort(t_perm)
    gq = SemanticGraph(q_pos[q_perm], q_lab[q_perm], cfg.edge_threshold)
    gt = SemanticGraph(t_pos[t_perm], t_lab[t_perm], cfg.edge_threshold)
    pairs = np.stack([q_inv[:shared], t_inv[:shared]], axis=1).astype(np.int64).reshape(-1, 2)
    pairs = pairs[np.argsort(pairs[:, 0], kind="stable")]
    return gq, gt, Truth(planted.inverse(), pairs)


def planted_match_set(m, inlier_fraction, seed=0, area=(200.0, 200.0, 10.0), sigma=0.5,
                      edge_threshold=DEFAULT_EDGE_THRESHOLD):
    """Correspondence-level benchmark: ``m`` matches, a fraction of them true.

    Each match gets its own query and target vertex. Inlier targets are the
    planted motion of their query point plus noise; outlier targets are
    uniform in the target frame's footprint. Returns
    ``(gq, gt, matches, is_inlier, truth)``.
    """
    rng = np.random.default_rng(seed)
    k = int(round(inlier_fraction * m))
    planted = random_planted_transform(rng, area)
    q = rng.uniform((0, 0, 0), area, size=(m, 3))
    t = planted.apply(q) + _bounded_noise(rng, m, sigma)
    t[k:] = planted.apply(rng.uniform((0, 0, 0), area, size=(m - k, 3)))
    perm = rng.permutation(m)
    is_inlier = perm < k
    q, t = q[perm], t[perm]
    labels = np.zeros(m, dtype=np.int64)
    gq = SemanticGraph(q, labels, edge_threshold)
    gt = SemanticGraph(t, labels, edge_threshold)
    idx = np.arange(m)
    matches = MatchSet(np.stack([idx, idx], axis=1), np.ones(m))
    truth = Truth(planted.inverse(), np.stack([idx[is_inlier], idx[is_inlier]], axis=1))
    return gq, gt, matches, is_inlier, truth


@dataclass
class EvalReport:
    translation_error: float
    rotation_error: float
    recall: float
    precision: float
    final_match_count: int
    stage_timings: dict = field(default_factory=dict)

    @property
    def failed(self):
        return not self.translation_error <= FAILURE_T_ERR


def predicted_inliers(matches, gq, gt, truth, t_p=DEFAULT_TP):
    """Mask of matches whose query vertex lands within ``t_p`` of its target."""
    if len(matches) == 0:
        return np.zeros(0, dtype=bool)
    mapped = truth.planted.apply(gq.positions[matches.query])
    return np.linalg.norm(mapped - gt.positions[matches.target], axis=1) < t_p


def evaluate(result, truth, gq, gt, t_p=DEFAULT_TP):
    """Score a registration result against ground truth.

    A predicted (final) match is an inlier when the true motion carries its
    query vertex within ``t_p`` of its target vertex. Precision is the inlier
    share of predicted matches (0 when nothing was predicted); recall is the
    share of ground-truth shared objects whose query vertex appears in at
    least one inlier prediction. Rotation error is the geodesic angle of
    ``R_est @ R_true.T`` in degrees; translation error is
    ``|T_est - T_true|`` in meters.
    """
    R_true, T_true = truth.transform.rotation, truth.transform.translation
    t_err = float(np.linalg.norm(result.transform.translation - T_true))
    r_err = math.degrees(rotation_angle(result.transform.rotation @ R_true.T))
    preds = result.inlier_matches
    good = predicted_inliers(preds, gq, gt, truth, t_p)
    precision = float(good.mean()) if len(preds) else 0.0
    if len(truth.pairs):
        found = np.isin(truth.pairs[:, 0], preds.query[good])
        recall = float(found.mean())
    else:
        recall = 0.0
    return EvalReport(t_err, r_err, recall, precision, len(preds), dict(result.timings))


def failed_report(timings=None):
    return EvalReport(math.inf, math.inf, 0.0, 0.0, 0, dict(timings or {}))


def run_trial(gq, gt, truth, cfg, descriptors=None, matches=None, t_p=DEFAULT_TP):
    """Localize and evaluate; pipeline failures become an infinite-error report."""
    dq, dt = descriptors if descriptors is not None else (None, None)
    try:
        result = localize(gq, gt, dq, dt, cfg, matches=matches)
    except SemlocError:
        return failed_report()
    return evaluate(result, truth, gq, gt, t_p)


# --- sweeps ---------------------------------------------------------------

SWEEP_AXES = ("ransac_threshold", "overlap_rate", "eta")
SWEEP_COLUMNS = ["axis_value", "trial", "method", "t_err", "r_err", "recall", "precision",
                 "n_final", "ms_reject", "ms_ransac", "failed"]
METHODS = (("reject", True), ("baseline", False))


def trial_seed(base_seed, trial, value_index):
    return int(np.random.SeedSequence([int(base_seed), int(trial), int(value_index)]).generate_state(1)[0])


def _sweep_cell(axis, value, value_index, trial, scenario, pipeline, t_p):
    seed = trial_seed(scenario.seed, trial, value_index)
    scen = replace(scenario, seed=seed)
    pipe = replace(pipeline, seed=seed)
    pipe = pipe.with_ransac(seed=seed)
    if axis == "overlap_rate":
        scen = replace(scen, overlap_rate=value)
    elif axis == "ransac_threshold":
        pipe = pipe.with_ransac(threshold=value)
    elif axis == "eta":
        pipe = replace(pipe, eta=value)
    gq, gt, truth = generate_scenario(scen)
    dq, dt = describe(gq, gt, pipe)
    rows = []
    for method, use_rejection in METHODS:
        report = run_trial(gq, gt, truth, replace(pipe, use_rejection=use_rejection), (dq, dt), t_p=t_p)
        rows.append({
            "axis_value": value, "trial": trial, "method": method,
            "t_err": report.translation_error, "r_err": report.rotation_error,
            "recall": report.recall, "precision": report.precision,
            "n_final": report.final_match_count,
            "ms_reject": report.stage_timings.get("reject", 0.0) if use_rejection else 0.0,
            "ms_ransac": report.stage_timings.get("ransac", 0.0),
            "failed": int(report.failed),
        })
    return rows


def sweep(axis, values, trials, scenario=ScenarioConfig(), pipeline=PipelineConfig(), t_p=DEFAULT_TP,
          threads=1):
    """Run ``trials`` paired trials (with and without rejection) per value.

    Each trial owns a seed derived from ``(scenario.seed, trial, value
    index)``; both methods see the same scenario and descriptors. Rows come
    back in ``(value, trial, method)`` order regardless of ``threads``.
    """
    if axis not in SWEEP_AXES:
        raise InputError(f"axis must be one of {SWEEP_AXES}")
    if trials < 1:
        raise InputError("trials must be >= 1")
    jobs = [(axis, float(v), vi, t, scenario, pipeline, t_p)
            for vi, v in enumerate(values) for t in range(trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: _sweep_cell(*job), jobs))
    else:
        parts = [_sweep_cell(*job) for job in jobs]
    return [row for part in parts for row in part]


def _fmt_cell(value, timing):
    if isinstance(value, float):
        if timing is None and not math.isfinite(value):
            return repr(value)
        return repr(value) if timing is None else f"{value:.3f}"
    return str(value)


def format_sweep_csv(rows, timing=True):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        out = []
        for col in SWEEP_COLUMNS:
            v = row[col]
            if col.startswith("ms_"):
                out.append(f"{v:.3f}" if timing else "0")
            else:
                out.append(_fmt_cell(v, None))
        writer.writerow(out)
    return buf.getvalue()


def read_sweep_csv(path_or_text):
    text = Path(path_or_text).read_text() if not str(path_or_text).startswith("axis_value") else path_or_text
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append({
            "axis_value": float(rec["axis_value"]), "trial": int(rec["trial"]), "method": rec["method"],
            **{k: float(rec[k]) for k in ("t_err", "r_err", "recall", "precision", "ms_reject", "ms_ransac")},
            "n_final": int(rec["n_final"]), "failed": int(rec["failed"]),
        })
    return rows


def _quantile(xs, q):
    # linear interpolation that keeps inf instead of producing 0 * inf = nan
    pos = q * (len(xs) - 1)
    lo = int(math.floor(pos))
    frac = pos - lo
    if frac == 0.0 or xs[lo + 1] == xs[lo]:
        return float(xs[lo])
    return float(xs[lo] + frac * (xs[lo + 1] - xs[lo]))


def _iqr(x):
    xs = np.sort(np.asarray(x, dtype=float))
    q75 = _quantile(xs, 0.75)
    if math.isinf(q75):
        return math.inf
    return q75 - _quantile(xs, 0.25)


def summarize(rows):
    """Aggregate sweep rows per ``(axis_value, method)``.

    Reports median, IQR, mean and standard deviation of the error columns
    (failed trials carry infinite error and are excluded from mean/std),
    mean recall and precision, and the failure rate.
    """
    groups = {}
    for row in rows:
        groups.setdefault((row["axis_value"], row["method"]), []).append(row)
    out = []
    for (value, method), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        rec = {"axis_value": value, "method": method, "trials": len(rs)}
        for col in ("t_err", "r_err"):
            x = np.array([r[col] for r in rs], dtype=float)
            finite = x[np.isfinite(x)]
            rec[f"{col}_median"] = float(np.median(x))
            rec[f"{col}_iqr"] = _iqr(x)
            rec[f"{col}_mean"] = float(finite.mean()) if len(finite) else math.inf
            rec[f"{col}_std"] = float(finite.std()) if len(finite) else math.inf
        for col in ("recall", "precision", "n_final", "ms_reject", "ms_ransac"):
            rec[f"{col}_mean"] = float(np.mean([r[col] for r in rs]))
        rec["failure_rate"] = float(np.mean([r["failed"] for r in rs]))
        out.append(rec)
    return out


def format_summary_csv(summary, timing=True):
    if not summary:
        return ""
    cols = list(summary[0])
    if not timing:
        cols = [c for c in cols if not c.startswith("ms_")]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for rec in summary:
        writer.writerow([repr(rec[c]) if isinstance(rec[c], float) else rec[c] for c in cols])
    return buf.getvalue()


def pr_dominance(summary, baseline="baseline", method="reject", samples=20):
    """Compare precision at matched recall between two PR curves.

    Each method's curve is the sequence of (mean recall, mean precision)
    points across axis values, linearly interpolated in recall. Recalls are
    sampled evenly over the overlap of the two curves' recall ranges; when
    the ranges do not overlap the curves are compared point-wise per axis
    value. Returns the list of ``(recall, precision_method,
    precision_baseline)`` comparison points.
    """
    def curve(name):
        pts = sorted((r["recall_mean"], r["precision_mean"]) for r in summary if r["method"] == name)
        return np.array(pts).reshape(-1, 2)

    a, b = curve(method), curve(baseline)
    lo = max(a[:, 0].min(), b[:, 0].min())
    hi = min(a[:, 0].max(), b[:, 0].max())
    if hi > lo:
        grid = np.linspace(lo, hi, samples)
        return [(float(r), float(np.interp(r, a[:, 0], a[:, 1])), float(np.interp(r, b[:, 0], b[:, 1])))
                for r in grid]
    by_value = {}
    for r in summary:
        by_value.setdefault(r["axis_value"], {})[r["method"]] = r
    return [(v[method]["recall_mean"], v[method]["precision_mean"], v[baseline]["precision_mean"])
            for _, v in sorted(by_value.items()) if method in v and baseline in v]


# --- truth files ----------------------------------------------------------

TRUTH_HEADER = "# truth v1"


def format_truth(truth):
    vals = " ".join(repr(float(x)) for x in truth.transform.matrix34().ravel())
    lines = [TRUTH_HEADER, f"transform {vals}"]
    lines += [f"{q} {t}" for q, t in truth.pairs.tolist()]
    return "\n".join(lines) + "\n"


def write_truth(path, truth):
    Path(path).write_text(format_truth(truth), encoding="utf-8")


def read_truth(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(TRUTH_HEADER):
        raise InputError(f"{path}: missing '{TRUTH_HEADER}' header")
    transform, pairs = None, []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "transform":
                transform = RigidTransform.from_matrix34([float(x) for x in parts[1:]])
            elif len(parts) == 2:
                pairs.append((int(parts[0]), int(parts[1])))
            else:
                raise ValueError
        except ValueError:
            raise InputError(f"{path}:{lineno}: malformed truth record") from None
    if transform is None:
        raise InputError(f"{path}: no transform record")
    return Truth(transform, np.array(pairs, dtype=np.int64).reshape(-1, 2))
