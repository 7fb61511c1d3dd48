"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error. ``RASSO_THREADS``
caps the number of worker threads (0 or unset = one per CPU). Results never
depend on the thread count: sessions are processed independently and
collected in manifest order, and every random draw comes from a
counter-based seed.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cfar import CfarConfig, detect
from .evaluation import (CONFUSION_METRICS, EMPTY, PERSON, FrameRecord, SweepSession, bootstrap,
                         classification_metrics, matched_far_operating_point, paired_delta, snr_zscore,
                         sweep_k, tune_k_macro_f1)
from .io import (ConfigError, DataError, ManifestEntry, RunConfig, adc_to_cube_file, cube_file_to_adc,
                 describe_defaults, embedded_config, load_config, read_cube, read_manifest,
                 with_overrides, write_csv, write_cube, write_manifest, write_pgm)
from .pipeline import PIPELINE_NAMES, PipelineConfig, SessionMaps, frame_records, named_pipeline, \
    process_cube, sweep_session
from .sim import AdcCube, synthesize_scene, worker_count
from .suite import SuiteParams, default_suite

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

FRAMES_HEADER = ("session_id", "frame", "ground_truth", "decision", "max_component_area", "snr_db")
SNR_HEADER = ("session_id", "frame", "processor", "snr_db")
SUMMARY_HEADER = ("pipeline", "metric", "value", "median", "ci_low", "ci_high", "p_value", "p_report", "b", "flag")
COMPONENTS_HEADER = ("frame", "label", "area", "bbox_row_min", "bbox_col_min", "bbox_row_max",
                     "bbox_col_max", "centroid_row", "centroid_col")


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


# ------------------------------------------------------------------ helpers

def _map_sessions(fn, items: Sequence):
    """``fn`` over ``items`` on up to ``RASSO_THREADS`` threads, results in input order."""
    n = min(worker_count(), max(len(items), 1))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _load_adc(path: Path, run: Optional[RunConfig]) -> tuple[AdcCube, RunConfig]:
    """Read an ADC cube. The radar config comes from the cube's own echo when present."""
    cf = read_cube(path)
    has_echo = any(k.startswith("config.") for k in cf.metadata)
    echo = embedded_config(cf, str(path)) if has_echo else None
    if run is None:
        run = echo or RunConfig()
    radar = echo.radar if echo is not None else run.radar
    return cube_file_to_adc(cf, radar, str(path)), run


def _pipeline(run: RunConfig, name: Optional[str] = None) -> PipelineConfig:
    return run.pipeline if name is None else named_pipeline(name, run.pipeline)


@dataclass
class _Session:
    entry: ManifestEntry
    maps: SessionMaps


def _process_manifest(entries: Sequence[ManifestEntry], run: RunConfig, pipe: PipelineConfig) -> list[_Session]:
    def one(entry: ManifestEntry) -> _Session:
        cube, _ = _load_adc(entry.cube_path, run)
        return _Session(entry, process_cube(cube, pipe))
    return _map_sessions(one, list(entries))


def _sweeps(sessions: Sequence[_Session], cfar: CfarConfig, k_grid: np.ndarray) -> list[SweepSession]:
    return _map_sessions(lambda s: sweep_session(s.maps, s.entry.session_id, s.entry.label, cfar, k_grid),
                         list(sessions))


def _records(sessions: Sequence[_Session], cfar: CfarConfig, k: float) -> list[FrameRecord]:
    per = _map_sessions(lambda s: frame_records(s.maps, s.entry.session_id, s.entry.label, cfar, k),
                        list(sessions))
    return [r for rs in per for r in rs]


def _frame_rows(records: Sequence[FrameRecord]):
    return [(r.session_id, r.frame_index, r.ground_truth, r.decision, r.max_component_area, r.snr_db)
            for r in records]


def _snr_rows(records: Sequence[FrameRecord], tag: str):
    return [(r.session_id, r.frame_index, tag, r.snr_db) for r in records]


def _metric_rows(tag: str, records: Sequence[FrameRecord], b: int, seed: int):
    point = classification_metrics(records)
    flag = ";".join(f"absent:{c}" for c in point["absent_classes"])
    rows = []
    for metric in CONFUSION_METRICS:
        bs = bootstrap(records, metric, b=b, seed=seed)
        undefined = any(metric == f"f1_{c}" for c in point["undefined"])
        rows.append((tag, metric, point[metric], bs.median, bs.ci_low, bs.ci_high, "", "", bs.b,
                     ";".join(x for x in (flag, "undefined" if undefined else "") if x)))
    return rows


def _out_dir(path: Optional[str]) -> Path:
    return Path(path) if path else Path(".")


# -------------------------------------------------------------- subcommands

def cmd_defaults(args) -> int:
    sys.stdout.write(describe_defaults())
    return EXIT_OK


def cmd_simulate(args) -> int:
    run = load_config(args.config)
    if args.seed is not None:
        run = replace(run, scene=replace(run.scene, rng_seed=args.seed))
    if run.scene.frame_count < 1:
        raise ConfigError("scene.frame_count must be >= 1 to simulate")
    try:
        cube = synthesize_scene(run.scene, run.radar)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cf = adc_to_cube_file(cube, run)
    cf.metadata["label"] = PERSON if run.scene.targets else EMPTY
    write_cube(args.out, cf)
    print(f"wrote {args.out}: {cube.frame_count} frames, seed {run.scene.rng_seed}")
    return EXIT_OK


def cmd_simulate_suite(args) -> int:
    run = load_config(args.config)
    params = SuiteParams().development() if args.development else SuiteParams()
    overrides = {k: v for k, v in (("n_empty", args.n_empty), ("n_person", args.n_person),
                                   ("frame_count", args.frames), ("seed", args.seed)) if v is not None}
    params = replace(params, **overrides)
    out = _out_dir(args.out)
    specs = default_suite(params)

    def one(spec):
        cube = synthesize_scene(spec.scene, run.radar, workers=1)
        cf = adc_to_cube_file(cube, replace(run, scene=spec.scene))
        cf.metadata["label"] = spec.label
        path = out / f"{spec.session_id}.rsso"
        write_cube(path, cf)
        return ManifestEntry(spec.session_id, path, spec.label)

    entries = _map_sessions(one, specs)
    write_manifest(out / "manifest.csv", entries)
    print(f"wrote {len(entries)} sessions and {out / 'manifest.csv'}")
    return EXIT_OK


def cmd_process(args) -> int:
    run = load_config(args.config) if args.config else None
    cube, run = _load_adc(Path(args.input), run)
    run = with_overrides(run, args.processor, True if args.rasso else None, args.k)
    pipe, cfar = run.pipeline, run.cfar
    maps = process_cube(cube, pipe)
    out = Path(args.out_maps)
    sid = Path(args.input).stem
    truth = cube.metadata.get("label", "")
    table = pipe.steering()

    frames, comps, map_rows = [], [], []
    for j, m in enumerate(maps.evaluated):
        idx = maps.warmup_frames + j
        res = detect(m, cfar)
        big = res.largest
        snr = snr_zscore(m, big.bbox, cfar) if big is not None else math.nan
        frames.append((sid, idx, truth, PERSON if res.presence else EMPTY, res.max_component_area, snr))
        for c in res.components:
            comps.append((idx, c.label, c.area, *c.bbox, *c.centroid))
        for r, row in enumerate(m):
            map_rows.append((idx, r, *row.tolist()))
        if not args.no_pgm:
            write_pgm(out / f"ra_{idx:04d}.pgm", m, max_value=1.0)
            write_pgm(out / f"mask_{idx:04d}.pgm", res.opened_mask)
    write_csv(out / "frames.csv", FRAMES_HEADER, frames)
    write_csv(out / "components.csv", COMPONENTS_HEADER, comps)
    write_csv(out / "snr_trace.csv", SNR_HEADER, [(f[0], f[1], pipe.tag, f[5]) for f in frames])
    write_csv(out / "ra_maps.csv", ("frame", "range_bin", *(f"az_{a:.3f}" for a in table.azimuth_deg)),
              map_rows)
    n_present = sum(f[3] == PERSON for f in frames)
    print(f"{sid}: {pipe.tag}, k={cfar.k:g}: presence in {n_present}/{len(frames)} frames")
    return EXIT_OK


def cmd_sweep(args) -> int:
    run = with_overrides(load_config(args.config), args.processor, True if args.rasso else None)
    entries = read_manifest(args.sessions)
    k_grid = run.eval.k_grid()
    sessions = _process_manifest(entries, run, run.pipeline)
    sweeps = _sweeps(sessions, run.cfar, k_grid)
    try:
        roc = sweep_k(sweeps, k_grid, run.eval.far_targets)
    except ValueError as exc:
        raise DataError(f"{args.sessions}: {exc}") from exc
    out = _out_dir(args.out)
    write_csv(out / "roc.csv", ("k", "far", "recall"), zip(roc.k, roc.far, roc.recall))
    write_csv(out / "session_far.csv", ("session_id", "k", "far"),
              [(sid, k, f) for sid, fars in roc.session_far.items() for k, f in zip(roc.k, fars)])
    empties = [s for s in sweeps if s.label == EMPTY]
    ops = []
    for target in run.eval.far_targets:
        k_star = matched_far_operating_point(empties, k_grid, target)
        i = int(np.flatnonzero(k_grid == k_star)[0])
        ops.append((target, k_star, roc.far[i], roc.recall[i], roc.recall_at_far[target]))
    write_csv(out / "operating_points.csv", ("far_target", "k", "far", "recall", "recall_interp"), ops)
    print(f"{run.pipeline.tag}: AUC = {roc.auc:.4f} over {len(entries)} sessions")
    for target, k_star, far, rec, rec_i in ops:
        print(f"  FAR target {target:g}: k* = {k_star:.4f}, FAR = {far:.4f}, recall = {rec:.4f}"
              f" (interpolated {rec_i:.4f})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run = with_overrides(load_config(args.config), args.processor, True if args.rasso else None, args.k)
    entries = read_manifest(args.sessions)
    sessions = _process_manifest(entries, run, run.pipeline)
    records = _records(sessions, run.cfar, run.cfar.k)
    out = _out_dir(args.out)
    tag = run.pipeline.tag
    write_csv(out / "summary.csv", SUMMARY_HEADER, _metric_rows(tag, records, run.eval.bootstrap_b, run.eval.seed))
    write_csv(out / "frames.csv", FRAMES_HEADER, _frame_rows(records))
    write_csv(out / "snr_trace.csv", SNR_HEADER, _snr_rows(records, tag))
    m = classification_metrics(records)
    print(f"{tag}, k={run.cfar.k:g}: " + ", ".join(f"{k}={m[k]:.4f}" for k in CONFUSION_METRICS))
    return EXIT_OK


def _parse_pair(text: str, what: str) -> list[str]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise ConfigError(f"{what} needs exactly two comma-separated values, got {text!r}")
    return parts


def cmd_bootstrap(args) -> int:
    run = load_config(args.config)
    names = _parse_pair(args.pipelines, "--pipelines")
    for n in names:
        if n not in PIPELINE_NAMES:
            raise ConfigError(f"unknown pipeline {n!r}; choose from {', '.join(PIPELINE_NAMES)}")
    b = run.eval.bootstrap_b if args.B is None else args.B
    seed = run.eval.seed if args.seed is None else args.seed
    if b < 1:
        raise ConfigError("--B must be >= 1")
    if args.k is not None and args.dev_sessions is not None:
        raise ConfigError("use either --k or --dev-sessions, not both")
    if args.k is not None:
        vals = [p.strip() for p in args.k.split(",")]
        try:
            ks = [float(v) for v in (vals * 2 if len(vals) == 1 else vals)]
        except ValueError as exc:
            raise ConfigError(f"bad --k {args.k!r}") from exc
        if len(ks) != 2 or any(not k > 0 for k in ks):
            raise ConfigError("--k takes one positive value or two (A,B)")
    else:
        ks = [run.cfar.k, run.cfar.k]
    entries = read_manifest(args.sessions)
    dev_entries = read_manifest(args.dev_sessions) if args.dev_sessions else None

    records, tags = [], []
    for i, name in enumerate(names):
        pipe = _pipeline(run, name)
        if dev_entries is not None:
            dev = _process_manifest(dev_entries, run, pipe)
            k_grid = run.eval.k_grid()
            ks[i] = tune_k_macro_f1(_sweeps(dev, run.cfar, k_grid), k_grid)
        sessions = _process_manifest(entries, run, pipe)
        records.append(_records(sessions, run.cfar, ks[i]))
        tags.append(pipe.tag)

    delta = paired_delta(records[0], records[1], "macro_f1", b=b, seed=seed)
    rows = []
    for tag, recs in zip(tags, records):
        rows += _metric_rows(tag, recs, b, seed)
    rows.append((f"{tags[0]}-{tags[1]}", delta.metric, delta.point_estimate, delta.median,
                 delta.ci_low, delta.ci_high, delta.p_value, delta.p_report(), delta.b, ""))
    out = _out_dir(args.out)
    write_csv(out / "summary.csv", SUMMARY_HEADER, rows)
    write_csv(out / "delta_hist.csv", ("replicate", "delta"), enumerate(delta.replicates.tolist()))
    print(f"k: {tags[0]}={ks[0]:.4f}, {tags[1]}={ks[1]:.4f}")
    print(f"delta macro-F1 ({tags[0]} - {tags[1]}) = {delta.point_estimate:.4f}, "
          f"95% CI [{delta.ci_low:.4f}, {delta.ci_high:.4f}], p {delta.p_report()} (B={delta.b})")
    return EXIT_OK


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = _ArgumentParser(prog="rasso", description="Semi-static occupancy detection with the RASSO Doppler warp.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    s = sub.add_parser("defaults", help="print the documented default configuration")
    s.set_defaults(fn=cmd_defaults)

    s = sub.add_parser("simulate", help="simulate one scene into a cube file")
    s.add_argument("--config", help="run configuration (defaults if omitted)")
    s.add_argument("--out", required=True, help="output cube file")
    s.add_argument("--seed", type=int, help="override scene.seed")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("simulate-suite", help="simulate the default synthetic suite and its manifest")
    s.add_argument("--config", help="radar configuration source")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-empty", type=int)
    s.add_argument("--n-person", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--development", action="store_true", help="the smaller k-tuning suite instead")
    s.set_defaults(fn=cmd_simulate_suite)

    def pipeline_args(s):
        s.add_argument("--processor", choices=("dbf", "capon"))
        s.add_argument("--rasso", action="store_true", help="warp the Doppler axis before beamforming")

    s = sub.add_parser("process", help="RA maps, CFAR masks and frame decisions for one cube")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--config", help="defaults to the config echoed in the cube")
    pipeline_args(s)
    s.add_argument("--k", type=float, help="override cfar.k")
    s.add_argument("--out-maps", required=True, help="output directory")
    s.add_argument("--no-pgm", action="store_true", help="skip per-frame PGM snapshots")
    s.set_defaults(fn=cmd_process)

    s = sub.add_parser("sweep", help="recall/FAR sweep over the k grid")
    s.add_argument("--sessions", required=True, help="manifest CSV")
    s.add_argument("--config")
    pipeline_args(s)
    s.add_argument("--out", help="output directory (default: current)")
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("evaluate", help="frame metrics at one k")
    s.add_argument("--sessions", required=True)
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--config")
    pipeline_args(s)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("bootstrap", help="paired session bootstrap of macro-F1 between two pipelines")
    s.add_argument("--sessions", required=True)
    s.add_argument("--pipelines", required=True, help=f"A,B from {', '.join(PIPELINE_NAMES)}")
    s.add_argument("--B", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--k", help="k for both pipelines, or kA,kB")
    s.add_argument("--dev-sessions", help="manifest used to tune each pipeline's k by macro-F1")
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_bootstrap)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except ConfigError as exc:
        print(f"rasso: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"rasso: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
