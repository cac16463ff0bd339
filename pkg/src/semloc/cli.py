"""Command-line entry point.

Exit codes: 0 success, 2 input/usage errors, 3 localization failure.
Stats lines go to stdout, diagnostics and the effective configuration to
stderr. A JSON ``--config`` file supplies defaults that flags override.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from semloc import bench
from semloc.errors import InputError, LocalizationError, SemlocError
from semloc.extraction import (
    DEFAULT_MERGE_RADIUS,
    DEFAULT_MIN_BLOB_SIZE,
    extract_vertices,
    load_frame,
    read_manifest,
)
from semloc.graph import DEFAULT_EDGE_THRESHOLD, build_graph, read_graph, read_transform, write_graph, write_transform
from semloc.matching import MatchSet, match_graphs, read_matches, write_matches
from semloc.registration import PipelineConfig, RansacConfig, RegistrationResult, describe, localize, residuals
from semloc.rejection import reject

log = logging.getLogger("semloc")

EXIT_OK, EXIT_INPUT, EXIT_LOCALIZATION = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text):
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON file of option defaults (flags override)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap, 0 = auto (default: $SEMLOC_THREADS or 1)")
    p.add_argument("--no-timing", action="store_true", help="write 0 for timing fields")
    p.add_argument("--log-level", default="WARNING")


def _add_pipeline(p):
    p.add_argument("--edge-threshold", type=float, default=None,
                   help="override the graph files' edge threshold (m)")
    p.add_argument("--descriptor", choices=("histogram", "random_walk"), default="histogram")
    p.add_argument("--similarity-threshold", type=float, default=0.6)
    p.add_argument("--label-count", type=int, default=None)
    p.add_argument("--walk-count", type=int, default=50)
    p.add_argument("--walk-depth", type=int, default=4)
    _add_reject(p)
    p.add_argument("--ransac-threshold", type=float, default=5.0)
    p.add_argument("--ransac-iterations", type=int, default=1000)
    p.add_argument("--ransac-confidence", type=float, default=0.999,
                   help="early-stop confidence; 0 disables early stopping")
    p.add_argument("--min-inliers", type=int, default=10,
                   help="smallest consensus accepted as a model")


def _add_reject(p):
    p.add_argument("--nei-threshold", type=float, default=None,
                   help="consistency threshold (m); default depends on --rule")
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--eta-denominator", choices=("current", "original"), default="current")
    p.add_argument("--rule", choices=("distance", "nei"), default="distance")


def build_parser():
    parser = _Parser(prog="semloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="frames -> graph file")
    _add_common(p)
    p.add_argument("manifest", type=Path, help="lines of 'semantic depth meta' paths")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--min-blob-size", type=int, default=DEFAULT_MIN_BLOB_SIZE)
    p.add_argument("--ignore-labels", type=_ints, default=[])
    p.add_argument("--merge-radius", type=float, default=DEFAULT_MERGE_RADIUS)
    p.add_argument("--edge-threshold", type=float, default=DEFAULT_EDGE_THRESHOLD)

    p = sub.add_parser("match", help="two graphs -> candidate match file")
    _add_common(p)
    p.add_argument("query", type=Path)
    p.add_argument("target", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--edge-threshold", type=float, default=None)
    p.add_argument("--descriptor", choices=("histogram", "random_walk"), default="histogram")
    p.add_argument("--similarity-threshold", type=float, default=0.6)
    p.add_argument("--label-count", type=int, default=None)
    p.add_argument("--walk-count", type=int, default=50)
    p.add_argument("--walk-depth", type=int, default=4)

    p = sub.add_parser("reject", help="filter a match file with neighbor constraints")
    _add_common(p)
    p.add_argument("query", type=Path)
    p.add_argument("target", type=Path)
    p.add_argument("matches", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--edge-threshold", type=float, default=None)
    _add_reject(p)

    p = sub.add_parser("localize", help="estimate the target->query transform")
    _add_common(p)
    p.add_argument("query", type=Path)
    p.add_argument("target", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True, help="transform file (3x4 row-major)")
    p.add_argument("--matches", type=Path, help="use this candidate file instead of matching")
    p.add_argument("--inliers", type=Path, help="write final inlier matches here")
    p.add_argument("--gt", type=Path, help="truth file; adds t_err/r_err to the stats line")
    p.add_argument("--tp", type=float, default=bench.DEFAULT_TP)
    p.add_argument("--no-reject", action="store_true", help="skip rejection (baseline pipeline)")
    _add_pipeline(p)

    p = sub.add_parser("synth", help="write a synthetic scenario")
    _add_common(p)
    p.add_argument("-o", "--output", type=Path, required=True, help="output directory")
    _add_scenario(p)

    p = sub.add_parser("eval", help="score a transform and inlier file against truth")
    _add_common(p)
    p.add_argument("query", type=Path)
    p.add_argument("target", type=Path)
    p.add_argument("truth", type=Path)
    p.add_argument("transform", type=Path)
    p.add_argument("--inliers", type=Path)
    p.add_argument("--tp", type=float, default=bench.DEFAULT_TP)

    p = sub.add_parser("sweep", help="paired with/without-rejection sweep -> CSV")
    _add_common(p)
    p.add_argument("--axis", choices=bench.SWEEP_AXES, required=True)
    p.add_argument("--values", type=_floats, required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--summary", type=Path, help="also write per-value aggregates")
    p.add_argument("--tp", type=float, default=bench.DEFAULT_TP)
    _add_scenario(p)
    _add_pipeline(p)
    return parser


def _add_scenario(p):
    p.add_argument("--objects", type=int, default=300)
    p.add_argument("--labels", type=int, default=8)
    p.add_argument("--area", type=_floats, default=[200.0, 200.0, 10.0])
    p.add_argument("--overlap", type=float, default=0.6)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--outlier-rate", type=float, default=0.2)
    p.add_argument("--scenario-edge-threshold", type=float, default=DEFAULT_EDGE_THRESHOLD)


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            overrides = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"config {args.config}: {exc}") from None
        if not isinstance(overrides, dict):
            raise InputError("config file must hold a JSON object")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(k.replace("-", "_") for k in overrides) - known)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        subparser.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
        args = parser.parse_args(argv)
    if args.threads is None:
        args.threads = int(os.environ.get("SEMLOC_THREADS", "1") or 1)
    if args.threads == 0:
        args.threads = os.cpu_count() or 1
    return args


def pipeline_config(args):
    conf = args.ransac_confidence
    return PipelineConfig(
        edge_threshold=args.edge_threshold or DEFAULT_EDGE_THRESHOLD,
        nei_threshold=args.nei_threshold,
        descriptor=args.descriptor,
        similarity_threshold=args.similarity_threshold,
        eta=args.eta,
        eta_denominator=args.eta_denominator,
        consistency_rule=args.rule,
        ransac=RansacConfig(args.ransac_threshold, args.ransac_iterations, args.seed,
                            confidence=conf if conf and conf > 0 else None),
        min_inliers=args.min_inliers,
        seed=args.seed,
        label_count=args.label_count,
        walk_count=args.walk_count,
        walk_depth=args.walk_depth,
        use_rejection=not getattr(args, "no_reject", False),
    )


def scenario_config(args):
    if len(args.area) != 3:
        raise InputError("--area takes three extents")
    return bench.ScenarioConfig(
        object_count=args.objects, label_count=args.labels, area=tuple(args.area),
        overlap_rate=args.overlap, position_noise_sigma=args.sigma,
        outlier_vertex_rate=args.outlier_rate, seed=args.seed,
        edge_threshold=args.scenario_edge_threshold,
    )


def _ms(args, seconds):
    return "0" if args.no_timing else f"{seconds * 1e3:.3f}"


def cmd_extract(args):
    frames = [load_frame(*triple) for triple in read_manifest(args.manifest)]
    verts = extract_vertices(frames, args.min_blob_size, args.ignore_labels, args.merge_radius)
    graph = build_graph(verts, args.edge_threshold)
    write_graph(args.output, graph)
    print(f"frames={len(frames)} vertices={len(graph)}")
    return EXIT_OK


def _load_pair(args):
    return read_graph(args.query, args.edge_threshold), read_graph(args.target, args.edge_threshold)


def cmd_match(args):
    gq, gt = _load_pair(args)
    cfg = PipelineConfig(descriptor=args.descriptor, similarity_threshold=args.similarity_threshold,
                         label_count=args.label_count, walk_count=args.walk_count,
                         walk_depth=args.walk_depth, seed=args.seed)
    dq, dt = describe(gq, gt, cfg)
    matches = match_graphs(gq, dq, gt, dt, cfg.similarity_threshold)
    write_matches(args.output, matches)
    print(f"matches={len(matches)}")
    return EXIT_OK


def cmd_reject(args):
    gq, gt = _load_pair(args)
    matches = read_matches(args.matches)
    matches.validate(gq, gt)
    t0 = time.perf_counter()
    survivors = reject(gq, gt, matches, args.nei_threshold, args.eta, args.eta_denominator, args.rule) \
        if len(matches) else matches
    elapsed = time.perf_counter() - t0
    write_matches(args.output, survivors)
    print(f"rejected={len(matches) - len(survivors)} survivors={len(survivors)} ms={_ms(args, elapsed)}")
    return EXIT_OK if len(survivors) else EXIT_LOCALIZATION


def cmd_localize(args):
    gq, gt = _load_pair(args)
    cfg = pipeline_config(args)
    candidates = read_matches(args.matches) if args.matches else None
    t0 = time.perf_counter()
    try:
        result = localize(gq, gt, cfg=cfg, matches=candidates)
    except LocalizationError as exc:
        log.error("localization failed: %s", exc)
        print(f"failed=1 stage={exc.stage} ms={_ms(args, time.perf_counter() - t0)}")
        return EXIT_LOCALIZATION
    elapsed = time.perf_counter() - t0
    write_transform(args.output, result.transform)
    if args.inliers:
        write_matches(args.inliers, result.inlier_matches)
    stats = f"inliers={len(result.inlier_matches)} ms={_ms(args, elapsed)}"
    if args.gt:
        report = bench.evaluate(result, bench.read_truth(args.gt), gq, gt, args.tp)
        stats = f"t_err={report.translation_error!r} r_err={report.rotation_error!r} " + stats
    print(stats)
    return EXIT_OK


def cmd_synth(args):
    gq, gt, truth = bench.generate_scenario(scenario_config(args))
    args.output.mkdir(parents=True, exist_ok=True)
    write_graph(args.output / "query.graph", gq)
    write_graph(args.output / "target.graph", gt)
    bench.write_truth(args.output / "truth.txt", truth)
    print(f"query={len(gq)} target={len(gt)} shared={len(truth.pairs)}")
    return EXIT_OK


def cmd_eval(args):
    gq, gt = read_graph(args.query), read_graph(args.target)
    truth = bench.read_truth(args.truth)
    transform = read_transform(args.transform)
    inliers = read_matches(args.inliers) if args.inliers else MatchSet.empty()
    inliers.validate(gq, gt)
    res = residuals(transform, gq.positions[inliers.query], gt.positions[inliers.target])
    rms = float((res ** 2).mean() ** 0.5) if len(res) else 0.0
    report = bench.evaluate(RegistrationResult(transform, inliers, rms), truth, gq, gt, args.tp)
    print(f"t_err={report.translation_error!r} r_err={report.rotation_error!r} recall={report.recall!r} "
          f"precision={report.precision!r} n_final={report.final_match_count} failed={int(report.failed)}")
    return EXIT_OK


def cmd_sweep(args):
    rows = bench.sweep(args.axis, args.values, args.trials, scenario_config(args), pipeline_config(args),
                       t_p=args.tp, threads=args.threads)
    args.output.write_text(bench.format_sweep_csv(rows, timing=not args.no_timing), encoding="utf-8")
    if args.summary:
        args.summary.write_text(bench.format_summary_csv(bench.summarize(rows), timing=not args.no_timing),
                                encoding="utf-8")
    print(f"rows={len(rows)} failed={sum(r['failed'] for r in rows)}")
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract, "match": cmd_match, "reject": cmd_reject, "localize": cmd_localize,
    "synth": cmd_synth, "eval": cmd_eval, "sweep": cmd_sweep,
}


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"semloc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    effective = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    print("config " + json.dumps(effective, sort_keys=True), file=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (SemlocError, OSError) as exc:
        if isinstance(exc, LocalizationError):
            print(f"semloc: localization failed: {exc}", file=sys.stderr)
            return EXIT_LOCALIZATION
        print(f"semloc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
