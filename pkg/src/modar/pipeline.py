"""End-to-end orchestration: configuration, staging, per-stage persistence.

A run is fully determined by its config (including the scenario seed): the
detection cache, per-frame virtual points, fused boxes, and reports are all
byte-stable across reruns. Stage randomness draws from named substreams of
the scenario seed so adding a stage never perturbs another stage's draws.

Two detectors appear in a run: the configured cache detector feeds
tracking and forecasting, while the early-fusion consumer always clusters
the raw points itself (mirroring the split between the forecasting-input
detector and the fusion detector).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import forecast as fc
from .dataio import (DetectionCache, NormalizationManifest, SequenceDataset,
                     build_normalization, config_fingerprint, read_sequence,
                     write_sequence)
from .detector import ClusterParams, OracleNoise, detect_cluster, detect_oracle, nms
from .errors import ConfigError
from .evalkit import EvalConfig, EvalResult, evaluate, write_report
from .fusion import (FusionWeights, assemble_early, early_plus_late,
                     fusion_detector, late_fuse, modar_only_detect)
from .geometry import Box3D
from .points import ModarConfig, generate_modar, write_modar_jsonl
from .simkit import SCENARIO_NAMES, scenario_library, simulate
from .tracker import KalmanTrack, TrackerParams, track_sequence

STRATEGIES = ("LIDAR_ONLY", "MODAR_ONLY", "EARLY", "LATE", "EARLY_LATE")
MODES = ("ONLINE", "OFFLINE")
DETECTION_NMS_IOU = 0.5


def substream_seed(seed: int, name: str) -> int:
    """Stable 64-bit substream seed for a named stage."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class PipelineConfig:
    scenario_name: str | None = "MIXED_CITY"
    seed: int = 0
    dataset_path: str | None = None
    detector_kind: str = "cluster"
    cluster_params: ClusterParams = ClusterParams()
    oracle_noise: OracleNoise = OracleNoise()
    tracker: TrackerParams = TrackerParams()
    predictor: str = "multihyp"
    mode: str = "OFFLINE"
    past: int = 80
    future: int = 80
    trajectories_per_track: int = 6
    strategy: str = "EARLY"
    weights: FusionWeights = FusionWeights()
    eval_config: EvalConfig = EvalConfig()
    lidar_stack: int = 1
    target_frames: tuple[int, ...] | None = None

    def validate(self) -> None:
        if self.scenario_name is None and self.dataset_path is None:
            raise ConfigError("need a scenario or a dataset", "/scenario")
        if self.scenario_name is not None and self.scenario_name not in SCENARIO_NAMES:
            raise ConfigError(f"unknown scenario {self.scenario_name!r}",
                              "/scenario/name")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}", "/modar/mode")
        if self.mode == "ONLINE" and self.future > 0:
            raise ConfigError("online mode forbids future offsets",
                              "/modar/future")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}",
                              "/fusion/strategy")
        if self.predictor not in fc.PREDICTORS:
            raise ConfigError(f"unknown predictor {self.predictor!r}",
                              "/predictor")
        if self.lidar_stack < 1:
            raise ConfigError("lidar_stack_frames must be >= 1",
                              "/lidar_stack_frames")
        if not 0 <= self.past <= fc.HORIZON or not 0 <= self.future <= fc.HORIZON:
            raise ConfigError(f"offset counts must be in 0..{fc.HORIZON}",
                              "/modar/past")


def _require(section, key, path, caster):
    try:
        return caster(section[key])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"missing or invalid value: {exc}", path) from exc


def parse_config(doc: Mapping) -> PipelineConfig:
    """Build a validated PipelineConfig from a JSON document."""
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object", "/")
    cfg = PipelineConfig()
    scenario = doc.get("scenario")
    dataset = doc.get("dataset")
    if scenario is not None:
        cfg = replace(cfg,
                      scenario_name=_require(scenario, "name", "/scenario/name", str),
                      seed=int(scenario.get("seed", 0)),
                      dataset_path=None)
    elif dataset is not None:
        cfg = replace(cfg, scenario_name=None, dataset_path=str(dataset),
                      seed=int(doc.get("seed", 0)))
    det = doc.get("detector", {})
    if det:
        kind = det.get("kind", "cluster")
        if kind == "cluster":
            params = {k: det[k] for k in
                      ("cell_size", "min_points", "score_saturation") if k in det}
            cfg = replace(cfg, detector_kind="cluster",
                          cluster_params=ClusterParams(**params))
        elif kind == "oracle":
            fields = ("midpoint", "slope", "center_sigma", "size_sigma",
                      "yaw_sigma", "false_positive_rate", "constant_score")
            params = {k: det[k] for k in fields if k in det}
            if "scene_bounds" in det:
                params["scene_bounds"] = tuple(det["scene_bounds"])
            cfg = replace(cfg, detector_kind="oracle",
                          oracle_noise=OracleNoise(**params))
        else:
            raise ConfigError(f"unknown detector kind {kind!r}", "/detector/kind")
    if "tracker" in doc:
        t = doc["tracker"]
        kwargs = {}
        for key in ("gate_iou", "confirm_hits", "max_misses", "dt"):
            if key in t:
                kwargs[key] = t[key]
        for key in ("process_noise", "measurement_noise",
                    "initial_velocity_variance"):
            if key in t:
                kwargs[key] = tuple(t[key])
        cfg = replace(cfg, tracker=TrackerParams(**kwargs))
    if "predictor" in doc:
        p = doc["predictor"]
        cfg = replace(cfg, predictor=p["kind"] if isinstance(p, Mapping) else str(p))
    modar = doc.get("modar", {})
    if modar:
        cfg = replace(
            cfg,
            mode=str(modar.get("mode", cfg.mode)),
            past=int(modar.get("past", cfg.past)),
            future=int(modar.get("future", cfg.future)),
            trajectories_per_track=int(modar.get("trajectories_per_track",
                                                 cfg.trajectories_per_track)),
        )
        if cfg.mode == "ONLINE" and "future" not in modar:
            cfg = replace(cfg, future=0)
    fusion_doc = doc.get("fusion", {})
    if fusion_doc:
        kwargs = {}
        wdoc = fusion_doc.get("weights", {})
        for key in ("lidar_weight", "modar_weight", "wbf_iou", "max_boxes"):
            if key in wdoc:
                kwargs[key] = wdoc[key]
        if "offset_decay" in wdoc:
            kwargs["offset_decay"] = tuple(wdoc["offset_decay"])
        cfg = replace(cfg,
                      strategy=str(fusion_doc.get("strategy", cfg.strategy)),
                      weights=FusionWeights(**kwargs))
    if "lidar_stack_frames" in doc:
        cfg = replace(cfg, lidar_stack=int(doc["lidar_stack_frames"]))
    tf = doc.get("target_frames")
    if tf is not None:
        if isinstance(tf, Mapping):
            frames = tuple(range(int(tf["start"]), int(tf["stop"]),
                                 int(tf.get("step", 1))))
        else:
            frames = tuple(int(v) for v in tf)
        cfg = replace(cfg, target_frames=frames)
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", "/") from exc
    return parse_config(doc)


def detector_config_dict(config: PipelineConfig) -> dict:
    base = (config.cluster_params.to_dict() if config.detector_kind == "cluster"
            else config.oracle_noise.to_dict())
    base["nms_iou"] = DETECTION_NMS_IOU
    return base


def make_detect_fn(dataset: SequenceDataset, config: PipelineConfig):
    """Per-frame cache detector: configured detector plus class-wise NMS."""
    if config.detector_kind == "cluster":
        def fn(frame_index: int) -> list[Box3D]:
            boxes = detect_cluster(dataset.points[frame_index],
                                   config.cluster_params,
                                   dataset.frames[frame_index].ego_pose)
            return nms(boxes, DETECTION_NMS_IOU, bev=True)
    else:
        def fn(frame_index: int) -> list[Box3D]:
            boxes = detect_oracle(
                list(dataset.frames[frame_index].gt_boxes), config.oracle_noise,
                substream_seed(config.seed, f"detect:{frame_index}"))
            return nms(boxes, DETECTION_NMS_IOU, bev=True)
    return fn


def build_cache(dataset: SequenceDataset, config: PipelineConfig) -> DetectionCache:
    cache = DetectionCache(fingerprint=config_fingerprint(detector_config_dict(config)))
    detect_fn = make_detect_fn(dataset, config)
    for frame_index in range(len(dataset)):
        cache.ensure(frame_index, detect_fn)
    return cache


def _near_offsets(count: int, limit: int) -> int:
    return min(count, limit)


def run_strategy_frame(dataset: SequenceDataset, cache: DetectionCache,
                       manifest: NormalizationManifest, config: PipelineConfig,
                       t0: int, memo: dict) -> tuple[list[Box3D], list]:
    """Fused boxes plus the generated virtual points for one target frame."""
    predictor = fc.PREDICTORS[config.predictor]
    pose = dataset.frames[t0].ego_pose
    stack = [
        (dataset.points[f], dataset.frames[f].ego_pose,
         round((f - t0) * dataset.frame_period_s, 6))
        for f in range(max(0, t0 - config.lidar_stack + 1), t0 + 1)
    ]
    near = len(config.weights.offset_decay)
    strategy = config.strategy

    modar_pts: list = []
    if strategy in ("EARLY", "EARLY_LATE"):
        past, future = config.past, config.future
    elif strategy in ("MODAR_ONLY", "LATE"):
        past, future = _near_offsets(config.past, near), _near_offsets(config.future, near)
    else:
        past = future = 0
    if past or future:
        mcfg = ModarConfig(
            past_offsets=tuple(range(1, past + 1)),
            future_offsets=tuple(range(1, future + 1)),
            predictor=config.predictor,
            trajectories_per_track=config.trajectories_per_track,
            manifest=manifest,
        )
        modar_pts = generate_modar(dataset, cache, config.tracker, predictor,
                                   t0, mcfg, memo=memo)

    def lidar_only() -> list[Box3D]:
        fused = assemble_early(stack, [], pose)
        return fusion_detector(fused, config.cluster_params, config.weights,
                               manifest, pose)

    def near_boxes() -> list[Box3D]:
        near_pts = [p for p in modar_pts if p.offset <= near]
        return modar_only_detect(near_pts, config.weights, manifest)

    if strategy == "LIDAR_ONLY":
        boxes = lidar_only()
    elif strategy == "MODAR_ONLY":
        boxes = near_boxes()
    elif strategy == "EARLY":
        fused = assemble_early(stack, modar_pts, pose)
        boxes = fusion_detector(fused, config.cluster_params, config.weights,
                                manifest, pose)
    elif strategy == "LATE":
        boxes = late_fuse(lidar_only(), near_boxes(), config.weights)
    else:  # EARLY_LATE
        fused = assemble_early(stack, modar_pts, pose)
        early = fusion_detector(fused, config.cluster_params, config.weights,
                                manifest, pose)
        boxes = early_plus_late(early, near_boxes(), config.weights)
    return boxes, modar_pts


def evaluate_strategy(dataset: SequenceDataset, cache: DetectionCache,
                      manifest: NormalizationManifest, config: PipelineConfig,
                      memo: dict | None = None,
                      ) -> tuple[EvalResult, dict[int, list[Box3D]], dict[int, list]]:
    """Run the configured fusion strategy over the target frames and score it."""
    if memo is None:
        memo = {}
    frames = (config.target_frames if config.target_frames is not None
              else tuple(range(len(dataset))))
    boxes_by_frame: dict[int, list[Box3D]] = {}
    points_by_frame: dict[int, list] = {}
    for t0 in frames:
        boxes, pts = run_strategy_frame(dataset, cache, manifest, config, t0, memo)
        boxes_by_frame[t0] = boxes
        points_by_frame[t0] = pts
    result = evaluate(boxes_by_frame, dataset, config.eval_config,
                      num_predictions=config.past + config.future)
    return result, boxes_by_frame, points_by_frame


def tracks_to_dict(tracks: Sequence[KalmanTrack]) -> dict:
    return {
        "tracks": [
            {
                "track_id": t.track_id,
                "class": t.label.value,
                "history": [
                    {"frame": f, "score": s, **box.to_dict()}
                    for f, box, s in t.history
                ],
            }
            for t in tracks
        ]
    }


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_boxes_jsonl(boxes_by_frame: Mapping[int, Sequence[Box3D]], path) -> None:
    lines = []
    for frame_index in sorted(boxes_by_frame):
        for box in boxes_by_frame[frame_index]:
            lines.append(_dump_json({"frame_index": frame_index, **box.to_dict()}))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_boxes_jsonl(path) -> dict[int, list[Box3D]]:
    out: dict[int, list[Box3D]] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        out.setdefault(int(d["frame_index"]), []).append(Box3D.from_dict(d))
    return out


def load_dataset(config: PipelineConfig) -> SequenceDataset:
    if config.dataset_path is not None:
        return read_sequence(config.dataset_path)
    return simulate(scenario_library(config.scenario_name, config.seed))


def run_pipeline(config: PipelineConfig, out_dir) -> EvalResult:
    """Full pipeline with every intermediate persisted for inspection."""
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    dataset = load_dataset(config)
    if config.dataset_path is None:
        write_sequence(dataset, out / "sequence")

    manifest = build_normalization([dataset])
    manifest.save(out / "manifest.json")

    cache = build_cache(dataset, config)
    cache.save(out / "detections.json")

    full_tracks = track_sequence(
        [cache.boxes_for(f) for f in range(len(dataset))], config.tracker)
    (out / "tracks.json").write_text(_dump_json(tracks_to_dict(full_tracks)) + "\n")

    memo: dict = {}
    frames = (config.target_frames if config.target_frames is not None
              else tuple(range(len(dataset))))
    boxes_by_frame: dict[int, list[Box3D]] = {}
    modar_dir = out / "modar"
    for t0 in frames:
        boxes, pts = run_strategy_frame(dataset, cache, manifest, config, t0, memo)
        boxes_by_frame[t0] = boxes
        if config.strategy != "LIDAR_ONLY":
            modar_dir.mkdir(exist_ok=True)
            write_modar_jsonl(pts, modar_dir / f"frame_{t0}.jsonl")
    write_boxes_jsonl(boxes_by_frame, out / "boxes.jsonl")

    result = evaluate(boxes_by_frame, dataset, config.eval_config,
                      num_predictions=config.past + config.future)
    result.save(out / "eval_result.json")
    write_report(result, out / "report")
    return result
