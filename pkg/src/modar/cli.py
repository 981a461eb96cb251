"""Command line entry points.

Every stage runs standalone on persisted intermediates and `pipeline`
composes them; chaining the stages by hand reproduces the pipeline output
byte for byte. Exit codes: 0 success, 2 configuration error, 1 any other
failure. MODAR_LOG sets the log level and never affects results.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import forecast as fc
from . import pipeline as pl
from .dataio import (DetectionCache, NormalizationManifest,
                     build_normalization, read_sequence, write_sequence)
from .errors import ConfigError, PipelineError
from .evalkit import EvalResult, evaluate, write_report
from .points import write_modar_jsonl
from .simkit import SCENARIO_NAMES, scenario_library, simulate
from .tracker import track_sequence

log = logging.getLogger("modar")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config JSON")
    parser.add_argument("--seed", type=int, help="override the scenario seed")


def _load_config(args) -> pl.PipelineConfig:
    if args.config:
        cfg = pl.load_config(args.config)
    else:
        cfg = pl.PipelineConfig()
        cfg.validate()
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _manifest_for(args, dataset) -> NormalizationManifest:
    if getattr(args, "manifest", None):
        return NormalizationManifest.load(args.manifest)
    return build_normalization([dataset])


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    name = args.scenario or cfg.scenario_name
    seed = args.seed if args.seed is not None else cfg.seed
    dataset = simulate(scenario_library(name, seed))
    write_sequence(dataset, args.out)
    log.info("wrote %d frames to %s", len(dataset), args.out)
    return 0


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    dataset = read_sequence(args.input)
    cache = pl.build_cache(dataset, cfg)
    cache.save(args.out)
    log.info("cached detections for %d frames", len(cache.frames))
    return 0


def cmd_track(args) -> int:
    cfg = _load_config(args)
    dataset = read_sequence(args.input)
    cache = DetectionCache.load(args.detections)
    tracks = track_sequence(
        [cache.boxes_for(f) for f in range(len(dataset))], cfg.tracker)
    Path(args.out).write_text(
        json.dumps(pl.tracks_to_dict(tracks), sort_keys=True,
                   separators=(",", ":")) + "\n")
    log.info("wrote %d confirmed tracks", len(tracks))
    return 0


def cmd_forecast(args) -> int:
    cfg = _load_config(args)
    doc = json.loads(Path(args.tracks).read_text())
    predictor = fc.PREDICTORS[cfg.predictor]
    out = []
    for track in doc["tracks"]:
        history = [h for h in track["history"] if h["frame"] <= args.frame]
        if not history:
            continue
        window = history[-11:]
        from .geometry import Box3D
        tracklet = fc.TrackletInput(
            label=Box3D.from_dict(window[-1]).label,
            frames=tuple(h["frame"] for h in window),
            boxes=tuple(Box3D.from_dict(h) for h in window),
            scores=tuple(float(h["score"]) for h in window),
        )
        trajectories = predictor(tracklet)
        out.append({
            "track_id": track["track_id"],
            "anchor_frame": tracklet.anchor_frame,
            "trajectories": [
                {
                    "confidence": t.confidence,
                    "waypoints": [
                        {"offset": i + 1,
                         "x": float(wp[fc.WP_X]), "y": float(wp[fc.WP_Y]),
                         "yaw": float(wp[fc.WP_YAW]),
                         "std_x": float(wp[fc.WP_STD_X]),
                         "std_y": float(wp[fc.WP_STD_Y])}
                        for i, wp in enumerate(t.waypoints)
                    ],
                }
                for t in trajectories
            ],
        })
    Path(args.out).write_text(
        json.dumps({"frame": args.frame, "forecasts": out}, sort_keys=True,
                   separators=(",", ":")) + "\n")
    return 0


def cmd_modar(args) -> int:
    cfg = _load_config(args)
    dataset = read_sequence(args.input)
    cache = DetectionCache.load(args.detections)
    manifest = _manifest_for(args, dataset)
    # Generate exactly what the pipeline would for this frame and strategy.
    _, points = pl.run_strategy_frame(dataset, cache, manifest, cfg,
                                      args.frame, memo={})
    write_modar_jsonl(points, args.out)
    log.info("wrote %d virtual points", len(points))
    return 0


def cmd_fuse(args) -> int:
    cfg = _load_config(args)
    dataset = read_sequence(args.input)
    cache = DetectionCache.load(args.detections)
    manifest = _manifest_for(args, dataset)
    boxes, _ = pl.run_strategy_frame(dataset, cache, manifest, cfg,
                                     args.frame, memo={})
    pl.write_boxes_jsonl({args.frame: boxes}, args.out)
    log.info("wrote %d boxes", len(boxes))
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    dataset = read_sequence(args.input)
    boxes = pl.read_boxes_jsonl(args.boxes)
    result = evaluate(boxes, dataset, cfg.eval_config,
                      num_predictions=cfg.past + cfg.future)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.save(out / "eval_result.json")
    write_report(result, out)
    if result.mean_aph_l2 is not None:
        log.info("L2 mean APH: %.4f", result.mean_aph_l2)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    result = pl.run_pipeline(cfg, args.out)
    if result.mean_aph_l2 is not None:
        log.info("L2 mean APH: %.4f", result.mean_aph_l2)
    return 0


def cmd_report(args) -> int:
    results = [EvalResult.load(p) for p in args.results]
    write_report(results if len(results) > 1 else results[0], args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modar",
        description="Motion-forecast virtual points for 3D detection: "
                    "simulation, detection, tracking, forecasting, fusion "
                    "and evaluation stages.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic sequence")
    _add_common(p)
    p.add_argument("--scenario", choices=SCENARIO_NAMES)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("detect", help="build the detection cache")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("track", help="track a full sequence")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_track)

    p = sub.add_parser("forecast", help="forecast tracks at a frame")
    _add_common(p)
    p.add_argument("--tracks", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_forecast)

    p = sub.add_parser("modar", help="generate virtual points for a frame")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--manifest")
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_modar)

    p = sub.add_parser("fuse", help="fuse and detect at a frame")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--manifest")
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("eval", help="score fused boxes against ground truth")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--boxes", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("report", help="regenerate reports from eval results")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("MODAR_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, OSError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
