"""Bit-exact on-disk sequence format, normalization manifests, detection caches.

A sequence directory holds:
  meta.json            sequence id, frame count, frame period, class list
  frames.jsonl         one record per frame: index, timestamp_us, ego pose
                       (16 row-major floats), ground-truth boxes
  points_<i>.bin       little-endian float32, 4 per point (x, y, z,
                       intensity), in that frame's ego frame

Writes are deterministic: identical input produces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import forecast
from .errors import (EmptyClass, InvariantViolation, IoFailure, MalformedFile,
                     MissingFrame)
from .geometry import Box3D, ObjectClass, Pose

FRAME_PERIOD_S = 0.1
FRAME_PERIOD_US = 100_000
POINT_RECORD_BYTES = 16
STD_FLOOR = 1e-3

DEFAULT_CLASS_SIZES = {
    ObjectClass.VEHICLE: (4.5, 2.0, 1.6),
    ObjectClass.PEDESTRIAN: (0.9, 0.9, 1.7),
    ObjectClass.CYCLIST: (1.8, 0.8, 1.7),
}


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class GtBox:
    track_id: int
    box: Box3D
    speed_mps: float
    num_points_inside: int
    occluded_fraction: float

    def to_dict(self) -> dict:
        d = self.box.to_dict()
        d.update({
            "track_id": self.track_id,
            "speed_mps": self.speed_mps,
            "num_points_inside": self.num_points_inside,
            "occluded_fraction": self.occluded_fraction,
        })
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GtBox":
        return cls(
            track_id=int(d["track_id"]),
            box=Box3D.from_dict(d),
            speed_mps=float(d["speed_mps"]),
            num_points_inside=int(d["num_points_inside"]),
            occluded_fraction=float(d["occluded_fraction"]),
        )


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    timestamp_us: int
    ego_pose: Pose
    gt_boxes: tuple[GtBox, ...]


@dataclass
class SequenceDataset:
    sequence_id: str
    frames: list[FrameRecord]
    points: list[np.ndarray]  # one (N, 4) float32 array per frame
    classes: list[str]
    frame_period_s: float = FRAME_PERIOD_S
    class_default_sizes: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)

    def validate(self) -> None:
        if len(self.points) != len(self.frames):
            raise InvariantViolation("points list must align with frames")
        for i, (rec, pts) in enumerate(zip(self.frames, self.points)):
            if rec.frame_index != i:
                raise InvariantViolation(
                    f"frame_index must increase from 0, got {rec.frame_index} at {i}")
            expected_ts = i * FRAME_PERIOD_US
            if abs(rec.timestamp_us - expected_ts) > 1:
                raise InvariantViolation(
                    f"timestamp {rec.timestamp_us} off period at frame {i}")
            if pts.ndim != 2 or pts.shape[1] != 4:
                raise InvariantViolation(f"points of frame {i} must be (N, 4)")
            for gt in rec.gt_boxes:
                if gt.num_points_inside < 0:
                    raise InvariantViolation(
                        f"negative num_points_inside at frame {i}")
                if not 0.0 <= gt.occluded_fraction <= 1.0:
                    raise InvariantViolation(
                        f"occluded_fraction out of [0,1] at frame {i}")


def write_sequence(dataset: SequenceDataset, directory) -> None:
    """Write the dataset in the canonical format; rewriting is byte-identical."""
    dataset.validate()
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "sequence_id": dataset.sequence_id,
            "frame_count": len(dataset.frames),
            "frame_period_s": dataset.frame_period_s,
            "classes": list(dataset.classes),
        }
        if dataset.class_default_sizes:
            meta["class_default_sizes"] = {
                k: list(v) for k, v in sorted(dataset.class_default_sizes.items())
            }
        (directory / "meta.json").write_text(_dump_json(meta) + "\n")
        if dataset.frames:
            lines = []
            for rec in dataset.frames:
                lines.append(_dump_json({
                    "frame_index": rec.frame_index,
                    "timestamp_us": rec.timestamp_us,
                    "ego_pose": rec.ego_pose.to_list(),
                    "gt_boxes": [gt.to_dict() for gt in rec.gt_boxes],
                }))
            (directory / "frames.jsonl").write_text("\n".join(lines) + "\n")
            for rec, pts in zip(dataset.frames, dataset.points):
                data = np.ascontiguousarray(pts, dtype="<f4").tobytes()
                (directory / f"points_{rec.frame_index}.bin").write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write sequence to {directory}: {exc}") from exc


def read_sequence(directory) -> SequenceDataset:
    """Read and validate a sequence directory.

    Raises:
        MalformedFile: unparsable or invariant-violating content.
        MissingFrame: a referenced points file is absent.
    """
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise MalformedFile(f"missing meta.json in {directory}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{meta_path}: {exc}") from exc
    frame_count = int(meta["frame_count"])

    frames: list[FrameRecord] = []
    points: list[np.ndarray] = []
    if frame_count > 0:
        frames_path = directory / "frames.jsonl"
        if not frames_path.exists():
            raise MalformedFile(f"missing frames.jsonl in {directory}")
        with frames_path.open() as fh:
            for lineno, line in enumerate(fh):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedFile(f"{frames_path}:{lineno + 1}: {exc}") from exc
                idx = int(rec["frame_index"])
                if idx != len(frames):
                    raise MalformedFile(
                        f"{frames_path}: frame_index {idx} out of order at line "
                        f"{lineno + 1}")
                pose_values = rec["ego_pose"]
                if len(pose_values) != 16:
                    raise MalformedFile(
                        f"{frames_path}: ego_pose of frame {idx} must hold 16 values")
                frames.append(FrameRecord(
                    frame_index=idx,
                    timestamp_us=int(rec["timestamp_us"]),
                    ego_pose=Pose(np.asarray(pose_values).reshape(4, 4)),
                    gt_boxes=tuple(GtBox.from_dict(g) for g in rec["gt_boxes"]),
                ))
        if len(frames) != frame_count:
            raise MalformedFile(
                f"{frames_path}: expected {frame_count} frames, found {len(frames)}")
        for rec in frames:
            bin_path = directory / f"points_{rec.frame_index}.bin"
            if not bin_path.exists():
                raise MissingFrame(f"missing {bin_path}")
            raw = bin_path.read_bytes()
            if len(raw) % POINT_RECORD_BYTES != 0:
                raise MalformedFile(
                    f"{bin_path}: size {len(raw)} not divisible by "
                    f"{POINT_RECORD_BYTES} (truncated at byte "
                    f"{len(raw) - len(raw) % POINT_RECORD_BYTES})")
            points.append(np.frombuffer(raw, dtype="<f4").reshape(-1, 4).copy())

    dataset = SequenceDataset(
        sequence_id=str(meta["sequence_id"]),
        frames=frames,
        points=points,
        classes=[str(c) for c in meta["classes"]],
        frame_period_s=float(meta["frame_period_s"]),
        class_default_sizes={
            k: tuple(v) for k, v in meta.get("class_default_sizes", {}).items()
        },
    )
    try:
        dataset.validate()
    except InvariantViolation as exc:
        raise MalformedFile(str(exc)) from exc
    return dataset


@dataclass(frozen=True)
class SizeStats:
    mean: tuple[float, float, float]
    std: tuple[float, float, float]


@dataclass(frozen=True)
class NormalizationManifest:
    """Per-class size statistics plus global waypoint-spread statistics.

    Standard deviations are population values floored at STD_FLOOR so
    normalization never divides by zero. Classes absent from the manifest
    fall back to canonical default sizes (covers detector misclassification
    into a class the scene never contained).
    """

    size_stats: dict[ObjectClass, SizeStats]
    spread_mean: tuple[float, float]
    spread_std: tuple[float, float]

    def for_class(self, label: ObjectClass) -> SizeStats:
        stats = self.size_stats.get(label)
        if stats is None:
            mean = DEFAULT_CLASS_SIZES[label]
            return SizeStats(mean=mean, std=(STD_FLOOR,) * 3)
        return stats

    def to_dict(self) -> dict:
        return {
            "size_stats": {
                label.value: {"mean": list(st.mean), "std": list(st.std)}
                for label, st in sorted(self.size_stats.items(), key=lambda kv: kv[0].value)
            },
            "spread_mean": list(self.spread_mean),
            "spread_std": list(self.spread_std),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationManifest":
        return cls(
            size_stats={
                ObjectClass(k): SizeStats(mean=tuple(v["mean"]), std=tuple(v["std"]))
                for k, v in d["size_stats"].items()
            },
            spread_mean=tuple(d["spread_mean"]),
            spread_std=tuple(d["spread_std"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(_dump_json(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "NormalizationManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _floored_std(values: np.ndarray) -> float:
    return max(float(np.std(values)), STD_FLOOR)


def build_normalization(datasets: Sequence[SequenceDataset],
                        classes: Sequence[ObjectClass] | None = None,
                        ) -> NormalizationManifest:
    """Empirical size statistics plus spread statistics from a constant
    velocity forecaster dry run over the ground-truth tracks.

    Raises:
        EmptyClass: a requested class has no ground-truth boxes.
    """
    if classes is None:
        seen = []
        for ds in datasets:
            for name in ds.classes:
                label = ObjectClass(name)
                if label not in seen:
                    seen.append(label)
        classes = seen

    sizes: dict[ObjectClass, list] = {c: [] for c in classes}
    for ds in datasets:
        for rec in ds.frames:
            for gt in rec.gt_boxes:
                if gt.box.label in sizes:
                    sizes[gt.box.label].append(
                        (gt.box.length, gt.box.width, gt.box.height))

    size_stats = {}
    for label in classes:
        if not sizes[label]:
            raise EmptyClass(f"no ground-truth boxes for class {label.value}")
        arr = np.asarray(sizes[label])
        size_stats[label] = SizeStats(
            mean=tuple(float(v) for v in arr.mean(axis=0)),
            std=tuple(_floored_std(arr[:, i]) for i in range(3)),
        )

    spreads = []
    for ds in datasets:
        tracks: dict[int, list[tuple[int, GtBox]]] = {}
        for rec in ds.frames:
            for gt in rec.gt_boxes:
                tracks.setdefault(gt.track_id, []).append((rec.frame_index, gt))
        for entries in tracks.values():
            for i in range(1, len(entries)):
                window = entries[max(0, i - 10):i + 1]
                tracklet = forecast.TrackletInput(
                    label=window[-1][1].box.label,
                    frames=tuple(f for f, _ in window),
                    boxes=tuple(g.box for _, g in window),
                    scores=tuple(g.box.score for _, g in window),
                )
                traj = forecast.forecast_cv(tracklet)[0]
                spreads.append(float(traj.waypoints[0, forecast.WP_STD_X]))
    if spreads:
        arr = np.asarray(spreads)
        spread_mean = (float(arr.mean()), float(arr.mean()))
        spread_std = (_floored_std(arr), _floored_std(arr))
    else:
        spread_mean = (0.0, 0.0)
        spread_std = (STD_FLOOR, STD_FLOOR)
    return NormalizationManifest(size_stats=size_stats,
                                 spread_mean=spread_mean,
                                 spread_std=spread_std)


def config_fingerprint(config: Mapping) -> str:
    """Stable fingerprint of a detector configuration."""
    return hashlib.sha256(_dump_json(dict(config)).encode()).hexdigest()


@dataclass
class DetectionCache:
    """Per-frame detector output, keyed by the detector's config fingerprint."""

    fingerprint: str
    frames: dict[int, list[Box3D]] = field(default_factory=dict)

    def boxes_for(self, frame_index: int) -> list[Box3D]:
        if frame_index not in self.frames:
            raise MissingFrame(f"detection cache has no frame {frame_index}")
        return self.frames[frame_index]

    def ensure(self, frame_index: int,
               detect_fn: Callable[[int], list[Box3D]] | None = None) -> list[Box3D]:
        """Cache hit, or fill on demand via detect_fn."""
        if frame_index not in self.frames:
            if detect_fn is None:
                raise MissingFrame(f"detection cache has no frame {frame_index}")
            self.frames[frame_index] = detect_fn(frame_index)
        return self.frames[frame_index]

    def save(self, path) -> None:
        payload = {
            "fingerprint": self.fingerprint,
            "frames": {
                str(k): [b.to_dict() for b in v]
                for k, v in sorted(self.frames.items())
            },
        }
        Path(path).write_text(_dump_json(payload) + "\n")

    @classmethod
    def load(cls, path) -> "DetectionCache":
        d = json.loads(Path(path).read_text())
        return cls(
            fingerprint=str(d["fingerprint"]),
            frames={
                int(k): [Box3D.from_dict(b) for b in v]
                for k, v in d["frames"].items()
            },
        )
