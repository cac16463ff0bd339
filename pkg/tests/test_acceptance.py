"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_rotation
from oracles import max_clique_bitmask, pinhole_point, rotation_geodesic, union_find_blobs
from semloc import bench
from semloc.errors import NoModelError
from semloc.extraction import Blob, LabeledFrame, backproject, merge_vertices, reproject, segment
from semloc.graph import RigidTransform, SemanticVertex
from semloc.registration import PipelineConfig, RansacConfig, localize, ransac, solve_weighted
from semloc.rejection import (
    ConstraintMatrix,
    brute_force_max_consistent,
    build_constraint_matrix,
    is_consistent_set,
    reject,
    reject_mask,
)

pytestmark = pytest.mark.acceptance


def report(n, ok, detail):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def t_err(result, truth):
    return float(np.linalg.norm(result.transform.translation - truth.transform.translation))


def r_err(result, truth):
    return math.degrees(rotation_geodesic(result.transform.rotation @ truth.transform.rotation.T))


def test_1_reject_post_condition():
    rng = np.random.default_rng(1)
    mats = []
    for k in range(1000):
        m = int(rng.integers(1, 201))
        A = np.triu(rng.random((m, m)) < rng.uniform(0.05, 0.95), 1)
        M = (A | A.T | np.eye(m, dtype=bool)).astype(np.uint8)
        eta = 0.5 if k % 2 == 0 else float(rng.uniform(0.05, 0.95))
        mats.append((ConstraintMatrix.from_matrix(M), eta))
    violations = 0
    t0 = time.perf_counter()
    for mat, eta in mats:
        keep = reject_mask(mat, eta)
        S = mat.m[np.ix_(keep, keep)]
        violations += int(np.sum(S.sum(axis=1) < eta * keep.sum()))
    elapsed = time.perf_counter() - t0
    report(1, violations == 0 and elapsed < 5.0, f"violations={violations} runtime={elapsed:.2f}s (<5s)")


def test_2_oracle_equivalence_small():
    rng = np.random.default_rng(2)
    equal = planted = clique_ok = searches_agree = 0
    n = 200
    for k in range(n):
        m = int(rng.integers(6, 19))
        # sigma 0.2 keeps every inlier pair within the 2 m distance tolerance
        gq, gt, matches, is_inlier, _ = bench.planted_match_set(m, 2 / 3, seed=int(rng.integers(2 ** 31)),
                                                                sigma=0.2)
        mat = build_constraint_matrix(gq, gt, matches)
        planted += is_consistent_set(mat, set(np.flatnonzero(is_inlier).tolist()))
        survivors = set(np.flatnonzero(reject_mask(mat)).tolist())
        best = brute_force_max_consistent(mat)
        searches_agree += best == max_clique_bitmask(mat.m.tolist())
        equal += survivors == best
        clique_ok += is_consistent_set(mat, survivors)
    ok = equal >= 0.95 * n and clique_ok == n and planted == n and searches_agree == n
    report(2, ok, f"equal={equal}/{n} (>=95%) consistent={clique_ok}/{n} planted_cliques={planted}/{n} "
                  f"exhaustive_agree={searches_agree}/{n}")


def test_3_weighted_solver():
    rng = np.random.default_rng(3)
    worst_r = worst_t = worst_scale = 0.0
    for _ in range(1000):
        n = int(rng.integers(3, 40))
        pt = rng.uniform(-50, 50, (n, 3))
        R, T = random_rotation(rng), rng.normal(0, 20, 3)
        pq = pt @ R.T + T
        w = rng.uniform(0.1, 2.0, n)
        est = solve_weighted(pq, pt, w)
        worst_r = max(worst_r, rotation_geodesic(est.rotation @ R.T))
        worst_t = max(worst_t, float(np.linalg.norm(est.translation - T)))
        noisy = pq + rng.normal(0, 0.5, pq.shape)
        ref = solve_weighted(noisy, pt, w)
        for c in (1e-3, 1.0, 1e3):
            other = solve_weighted(noisy, pt, c * w)
            worst_scale = max(worst_scale, float(np.abs(other.rotation - ref.rotation).max()),
                              float(np.abs(other.translation - ref.translation).max()))
    ok = worst_r < 1e-9 and worst_t < 1e-9 and worst_scale <= 1e-12
    report(3, ok, f"max_rot_err={worst_r:.2e}rad max_trans_err={worst_t:.2e}m "
                  f"max_weight_scale_diff={worst_scale:.2e} (<1e-9, <1e-9, <=1e-12)")


def test_4_end_to_end_localization():
    t0 = time.perf_counter()
    terrs, rerrs = [], []
    for seed in range(50):
        gq, gt, truth = bench.generate_scenario(bench.ScenarioConfig(seed=seed))
        cfg = PipelineConfig(seed=seed).with_ransac(threshold=5.0, seed=seed)
        try:
            res = localize(gq, gt, cfg=cfg)
            terrs.append(t_err(res, truth))
            rerrs.append(r_err(res, truth))
        except NoModelError:
            terrs.append(math.inf)
            rerrs.append(math.inf)
    elapsed = time.perf_counter() - t0
    failures = sum(e > bench.FAILURE_T_ERR for e in terrs)
    med_t, med_r = float(np.median(terrs)), float(np.median(rerrs))
    ok = med_t < 1.0 and med_r < 1.0 and failures == 0 and elapsed < 60
    report(4, ok, f"median_t_err={med_t:.3f}m median_r_err={med_r:.3f}deg failures={failures} "
                  f"runtime={elapsed:.1f}s (<1m, <1deg, 0, <60s)")


def test_5_overlap_robustness():
    values = [0.1, 0.2, 0.3, 0.5, 0.7]
    rows = bench.sweep("overlap_rate", values, 50, bench.ScenarioConfig(), PipelineConfig())
    summary = {(r["axis_value"], r["method"]): r for r in bench.summarize(rows)}
    ok = True
    parts = []
    for v in values:
        rej, base = summary[(v, "reject")], summary[(v, "baseline")]
        med_ok = rej["t_err_median"] <= base["t_err_median"]
        iqr_ok = v > 0.3 or rej["t_err_iqr"] <= base["t_err_iqr"]
        ok &= med_ok and iqr_ok
        parts.append(f"o={v}: med {rej['t_err_median']:.3f}<={base['t_err_median']:.3f} "
                     f"iqr {rej['t_err_iqr']:.3f}/{base['t_err_iqr']:.3f}"
                     f"{'' if med_ok and iqr_ok else ' X'}")
    report(5, ok, "; ".join(parts))


SPEED_THRESHOLDS = (1.0, 1.5, 2.0, 3.0, 4.0, 5.0)
SPEED_CAPS = (50, 100, 200, 500, 1000, 2000, 5000)


def _timed(fn, repeats=3):
    best, out = math.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        try:
            out = fn()
        except NoModelError:
            out = None
        best = min(best, time.perf_counter() - t0)
    return best, out


def test_6_speed():
    data = [bench.planted_match_set(1000, 0.3, seed=s) for s in range(20)]

    def arm(run):
        errs, total = [], 0.0
        for s, (gq, gt, m, _, truth) in enumerate(data):
            dt, res = _timed(lambda: run(gq, gt, m, s))
            total += dt
            errs.append(math.inf if res is None else t_err(res, truth))
        return float(np.median(errs)), total

    ref_err, ref_time = arm(lambda gq, gt, m, s: ransac(gq, gt, reject(gq, gt, m),
                                                        RansacConfig(iterations=1000, seed=s)))
    grid = []
    for thr in SPEED_THRESHOLDS:
        for cap in SPEED_CAPS:
            err, total = arm(lambda gq, gt, m, s: ransac(gq, gt, m, RansacConfig(thr, cap, s)))
            grid.append((err, total, thr, cap))
    parity = [g for g in grid if g[0] <= ref_err]
    if parity:
        comp = min(parity, key=lambda g: g[1])
        how = "cheapest RANSAC-alone at parity"
    else:
        # no configuration matches: compare with the cheapest one reaching
        # the best error RANSAC alone attains
        best_err = min(g[0] for g in grid)
        comp = min((g for g in grid if g[0] == best_err), key=lambda g: g[1])
        how = "no RANSAC-alone config reaches parity; cheapest at its best error"

    gq, gt, m, _, _ = bench.planted_match_set(2000, 0.3, seed=0)
    cm_time, _ = _timed(lambda: build_constraint_matrix(gq, gt, m), repeats=1)
    ok = ref_time <= comp[1] and cm_time < 1.0
    report(6, ok, f"reject+ransac median_t_err={ref_err:.4f}m total={ref_time * 1e3:.1f}ms vs {how}: "
                  f"thr={comp[2]} iters={comp[3]} median_t_err={comp[0]:.4f}m total={comp[1] * 1e3:.1f}ms; "
                  f"constraint_matrix(m=2000)={cm_time * 1e3:.1f}ms (<1s)")


def test_7_pr_dominance():
    rows = bench.sweep("ransac_threshold", [2.0, 5.0, 10.0, 15.0, 20.0], 20, bench.ScenarioConfig(),
                       PipelineConfig(), t_p=10.0)
    points = bench.pr_dominance(bench.summarize(rows))
    wins = sum(p[1] >= p[2] for p in points)
    frac = wins / len(points)
    report(7, frac >= 0.8, f"precision(reject)>=precision(baseline) at {wins}/{len(points)} "
                           f"matched-recall points ({frac:.0%}, need >=80%)")


def test_8_extraction():
    rng = np.random.default_rng(8)
    seg_ok = 0
    for _ in range(100):
        h, w = rng.integers(1, 40, 2)
        sem = rng.integers(0, 5, (h, w))
        depth = rng.uniform(0.5, 30, (h, w))
        frame = LabeledFrame(sem, depth, (300, 300, w / 2, h / 2), RigidTransform.identity())
        got = [(b.label, b.pixel_count, b.centroid_px, b.depth_m) for b in segment(frame, min_blob_size=1)]
        want = union_find_blobs(sem, depth)
        seg_ok += len(got) == len(want) and all(
            g[0] == e[0] and g[1] == e[1] and np.allclose(g[2], e[2], atol=1e-9) and g[3] == e[3]
            for g, e in zip(got, want))

    worst = 0.0
    for _ in range(1000):
        intr = tuple(rng.uniform([200, 200, 100, 100], [900, 900, 500, 400]))
        pose = RigidTransform(random_rotation(rng), rng.normal(0, 30, 3))
        frame = LabeledFrame(np.zeros((2, 2)), np.ones((2, 2)), intr, pose)
        blob = Blob(0, 1, tuple(rng.uniform(0, 800, 2)), float(rng.uniform(0.3, 80)))
        p = backproject(blob, frame).position
        hand = pinhole_point(*blob.centroid_px, blob.depth_m, intr, pose.rotation.tolist(),
                             pose.translation.tolist())
        u, v, d = reproject(p, frame)
        worst = max(worst, abs(u - blob.centroid_px[0]), abs(v - blob.centroid_px[1]), abs(d - blob.depth_m),
                    float(np.max(np.abs(np.subtract(p, hand)))))

    objects = []
    while len(objects) < 40:
        c = rng.uniform((0, 0, 0), (100, 100, 10))
        if all(np.linalg.norm(c - o) > 5.0 for o in objects):
            objects.append(c)
    labels = rng.integers(0, 4, 40)
    order = rng.permutation(np.repeat(np.arange(40), 5))
    obs = [SemanticVertex(0, int(labels[k]), tuple(objects[k] + rng.normal(0, 0.2, 3))) for k in order]
    merged = merge_vertices(obs, 1.5)
    ok = seg_ok == 100 and worst < 1e-6 and len(merged) == 40
    report(8, ok, f"segmentation={seg_ok}/100 round_trip_max_err={worst:.1e} (<1e-6) merged={len(merged)}/40")


def _cli(args, cwd, threads):
    env = dict(os.environ, SEMLOC_THREADS=str(threads))
    proc = subprocess.run([sys.executable, "-m", "semloc.cli", *args, "--no-timing", "--threads", str(threads)],
                          cwd=cwd, env=env, capture_output=True, text=True)
    return proc.returncode, proc.stdout


def _snapshot(cwd, threads):
    from semloc.extraction import write_frame_meta, write_grid_csv, write_pgm
    cwd.mkdir()
    sem = np.zeros((30, 40), dtype=int)
    sem[3:12, 4:14] = 1
    sem[15:25, 20:35] = 2
    write_pgm(cwd / "f.pgm", sem)
    write_grid_csv(cwd / "d.csv", np.full(sem.shape, 7.0))
    write_frame_meta(cwd / "f.meta", (40, 40, 20, 15), RigidTransform.identity())
    (cwd / "frames.txt").write_text("f.pgm d.csv f.meta\n")
    cmds = [
        ["extract", "frames.txt", "-o", "x.graph", "--min-blob-size", "10"],
        ["synth", "-o", "s", "--objects", "150", "--seed", "5"],
        ["match", "s/query.graph", "s/target.graph", "-o", "m.txt", "--seed", "5"],
        ["reject", "s/query.graph", "s/target.graph", "m.txt", "-o", "r.txt", "--seed", "5"],
        ["localize", "s/query.graph", "s/target.graph", "-o", "t.txt", "--inliers", "i.txt",
         "--gt", "s/truth.txt", "--seed", "5"],
        ["localize", "s/query.graph", "s/target.graph", "-o", "tw.txt", "--descriptor", "random_walk",
         "--similarity-threshold", "0.3", "--seed", "5"],
        ["eval", "s/query.graph", "s/target.graph", "s/truth.txt", "t.txt", "--inliers", "i.txt"],
        ["sweep", "--axis", "eta", "--values", "0.4,0.6", "--trials", "3", "--objects", "120",
         "-o", "sw.csv", "--summary", "sum.csv", "--seed", "5"],
    ]
    outputs = {}
    for k, c in enumerate(cmds):
        code, out = _cli(c, cwd, threads)
        outputs[f"cmd{k}:{c[0]}"] = (code, out)
    for p in sorted(cwd.rglob("*")):
        if p.is_file():
            outputs[str(p.relative_to(cwd))] = p.read_bytes()
    return outputs


def test_9_cli_determinism(tmp_path):
    runs = {
        "run1_t1": _snapshot(tmp_path / "a", 1),
        "run2_t1": _snapshot(tmp_path / "b", 1),
        "run3_t4": _snapshot(tmp_path / "c", 4),
    }
    ref = runs["run1_t1"]
    diffs = [f"{name}:{key}" for name, snap in runs.items() for key in ref if snap.get(key) != ref[key]]
    codes = [v[0] for k, v in ref.items() if k.startswith("cmd")]
    ok = not diffs and all(c == 0 for c in codes) and len(ref) > len(codes)
    report(9, ok, f"{len(ref)} outputs compared over 2 runs x threads {{1,4}}; exit codes={codes}; "
                  f"differences={diffs or 'none'}")
