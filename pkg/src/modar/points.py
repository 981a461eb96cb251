"""Virtual-point generation: windowing, trajectory-to-point encoding, decoding.

A MoDAR point sits at a forecasted object center and carries a 13-channel
feature vector. The channel order is frozen (see docs/FORMATS.md):

    0  size_l_n   normalized box length        7  class_onehot_cyclist
    1  size_w_n   normalized box width         8  tracking_score
    2  size_h_n   normalized box height        9  trajectory_score
    3  heading_cos                            10  std_x_n
    4  heading_sin                            11  std_y_n
    5  class_onehot_vehicle                   12  t_closest_s
    6  class_onehot_pedestrian

For a target frame t0, the forward window at offset m covers frames
[t0-m-10, t0-m] and its forecast waypoint at offset m lands on t0; the
reverse window covers [t0+m, t0+m+10] and its backward waypoint lands on
t0. Boundary windows are truncated to available frames, not dropped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

from . import forecast as fc
from .dataio import DetectionCache, NormalizationManifest, SequenceDataset
from .errors import MissingWaypoint
from .geometry import Box3D, ObjectClass, wrap_angle
from .tracker import KalmanTrack, TrackerParams, track_sequence, tracking_score

FEATURE_SIZE = 13
CH_SIZE_L, CH_SIZE_W, CH_SIZE_H = 0, 1, 2
CH_HEADING_COS, CH_HEADING_SIN = 3, 4
CH_ONEHOT = {ObjectClass.VEHICLE: 5, ObjectClass.PEDESTRIAN: 6,
             ObjectClass.CYCLIST: 7}
CH_TRACKING_SCORE, CH_TRAJECTORY_SCORE = 8, 9
CH_STD_X, CH_STD_Y = 10, 11
CH_T_CLOSEST = 12

WINDOW_PAST_FRAMES = 10  # context frames before the window anchor


class Direction(str, Enum):
    FORWARD = "FORWARD"
    REVERSE = "REVERSE"


@dataclass(frozen=True)
class ModarPoint:
    x: float
    y: float
    z: float
    feature: tuple[float, ...]
    track_id: int
    offset: int
    direction: Direction
    hypothesis: int = 0

    def __post_init__(self):
        if len(self.feature) != FEATURE_SIZE:
            raise ValueError(f"feature must have {FEATURE_SIZE} channels")
        f = self.feature
        norm = f[CH_HEADING_COS] ** 2 + f[CH_HEADING_SIN] ** 2
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("heading channels must form a unit vector")
        onehot = [f[i] for i in CH_ONEHOT.values()]
        if sorted(onehot) != [0.0, 0.0, 1.0]:
            raise ValueError("class channels must be one-hot")
        if not 0.0 <= f[CH_TRACKING_SCORE] <= 1.0:
            raise ValueError("tracking score out of [0, 1]")
        if not 0.0 <= f[CH_TRAJECTORY_SCORE] <= 1.0:
            raise ValueError("trajectory score out of [0, 1]")

    @property
    def label(self) -> ObjectClass:
        for cls, idx in CH_ONEHOT.items():
            if self.feature[idx] == 1.0:
                return cls
        raise AssertionError("unreachable: one-hot validated at init")

    def to_dict(self) -> dict:
        return {
            "x": self.x, "y": self.y, "z": self.z,
            "feature": list(self.feature),
            "track_id": self.track_id, "offset": self.offset,
            "direction": self.direction.value, "hypothesis": self.hypothesis,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModarPoint":
        return cls(
            x=float(d["x"]), y=float(d["y"]), z=float(d["z"]),
            feature=tuple(float(v) for v in d["feature"]),
            track_id=int(d["track_id"]), offset=int(d["offset"]),
            direction=Direction(d["direction"]),
            hypothesis=int(d["hypothesis"]),
        )


@dataclass(frozen=True)
class ModarConfig:
    past_offsets: tuple[int, ...]
    future_offsets: tuple[int, ...] = ()
    predictor: str = "multihyp"
    trajectories_per_track: int = 6
    manifest: NormalizationManifest | None = None

    def __post_init__(self):
        for m in tuple(self.past_offsets) + tuple(self.future_offsets):
            if not 1 <= m <= fc.HORIZON:
                raise ValueError(f"offsets must be in 1..{fc.HORIZON}, got {m}")

    @classmethod
    def offline(cls, past: int, future: int, **kw) -> "ModarConfig":
        return cls(past_offsets=tuple(range(1, past + 1)),
                   future_offsets=tuple(range(1, future + 1)), **kw)


class Window(NamedTuple):
    direction: Direction
    offset: int
    start: int
    end: int


def build_windows(t0: int, config: ModarConfig, sequence_length: int) -> list[Window]:
    """Forecast windows for target frame t0, forward then reverse, each in
    ascending offset order. Boundary windows truncate to >= 1 frame."""
    windows: list[Window] = []
    for m in sorted(config.past_offsets):
        end = t0 - m
        if end < 0:
            continue
        windows.append(Window(Direction.FORWARD, m,
                              max(0, end - WINDOW_PAST_FRAMES), end))
    for m in sorted(config.future_offsets):
        start = t0 + m
        if start > sequence_length - 1:
            continue
        windows.append(Window(Direction.REVERSE, m, start,
                              min(sequence_length - 1, start + WINDOW_PAST_FRAMES)))
    return windows


def encode_modar(traj: fc.Trajectory, offset: int, anchor_box: Box3D,
                 track_id: int, track_score: float,
                 manifest: NormalizationManifest, direction: Direction,
                 hypothesis: int = 0) -> ModarPoint:
    """Encode one trajectory waypoint as a virtual point.

    The point elevation and size channels come from the anchor box (box
    elevation and size are held constant over the forecast).

    Raises:
        MissingWaypoint: offset outside 1..HORIZON.
    """
    if not 1 <= offset <= fc.HORIZON:
        raise MissingWaypoint(f"no waypoint at offset {offset}")
    wp = traj.waypoints[offset - 1]
    stats = manifest.for_class(anchor_box.label)
    feature = [0.0] * FEATURE_SIZE
    feature[CH_SIZE_L] = (anchor_box.length - stats.mean[0]) / stats.std[0]
    feature[CH_SIZE_W] = (anchor_box.width - stats.mean[1]) / stats.std[1]
    feature[CH_SIZE_H] = (anchor_box.height - stats.mean[2]) / stats.std[2]
    feature[CH_HEADING_COS] = math.cos(wp[fc.WP_YAW])
    feature[CH_HEADING_SIN] = math.sin(wp[fc.WP_YAW])
    feature[CH_ONEHOT[anchor_box.label]] = 1.0
    feature[CH_TRACKING_SCORE] = track_score
    feature[CH_TRAJECTORY_SCORE] = traj.confidence
    feature[CH_STD_X] = (wp[fc.WP_STD_X] - manifest.spread_mean[0]) / manifest.spread_std[0]
    feature[CH_STD_Y] = (wp[fc.WP_STD_Y] - manifest.spread_mean[1]) / manifest.spread_std[1]
    sign = -1.0 if direction is Direction.FORWARD else 1.0
    feature[CH_T_CLOSEST] = sign * 0.1 * offset
    return ModarPoint(
        x=float(wp[fc.WP_X]), y=float(wp[fc.WP_Y]), z=anchor_box.cz,
        feature=tuple(feature),
        track_id=track_id, offset=offset, direction=direction,
        hypothesis=hypothesis,
    )


def decode_feature(x: float, y: float, z: float, feature: Sequence[float],
                   manifest: NormalizationManifest) -> Box3D:
    """Decode a 13-channel feature vector at a position into a box."""
    label = max(CH_ONEHOT, key=lambda cls: feature[CH_ONEHOT[cls]])
    stats = manifest.for_class(label)
    f = feature
    return Box3D(
        cx=x, cy=y, cz=z,
        length=f[CH_SIZE_L] * stats.std[0] + stats.mean[0],
        width=f[CH_SIZE_W] * stats.std[1] + stats.mean[1],
        height=f[CH_SIZE_H] * stats.std[2] + stats.mean[2],
        yaw=math.atan2(f[CH_HEADING_SIN], f[CH_HEADING_COS]),
        label=label,
        score=min(1.0, f[CH_TRACKING_SCORE] * f[CH_TRAJECTORY_SCORE]),
    )


def decode_box(point: ModarPoint, manifest: NormalizationManifest) -> Box3D:
    """Inverse of encode_modar; the box score is the product of tracking and
    trajectory scores."""
    return decode_feature(point.x, point.y, point.z, point.feature, manifest)


def _tracklet_from_track(track: KalmanTrack) -> fc.TrackletInput:
    entries = track.history[-(WINDOW_PAST_FRAMES + 1):]
    return fc.TrackletInput(
        label=track.label,
        frames=tuple(f for f, _, _ in entries),
        boxes=tuple(b for _, b, _ in entries),
        scores=tuple(s for _, _, s in entries),
    )


def generate_modar(sequence: SequenceDataset, cache: DetectionCache,
                   tracker_params: TrackerParams, predictor: fc.Predictor,
                   t0: int, config: ModarConfig,
                   detect_fn: Callable[[int], list[Box3D]] | None = None,
                   memo: dict | None = None) -> list[ModarPoint]:
    """Union of encoded waypoints over every window around t0.

    Each window runs the tracker over its cached detections and forecasts
    every confirmed track; the waypoint landing on t0 of each of the top-J
    trajectories becomes one point. Tracks whose last (first, for reverse)
    observation precedes the window edge use the waypoint offset that still
    lands on t0, and are skipped if that exceeds the horizon.

    ``memo`` (optional) caches per-span tracking and forecasting between
    calls; results are identical with or without it.
    """
    manifest = config.manifest
    if manifest is None:
        raise ValueError("config.manifest is required to encode points")
    if memo is None:
        memo = {}
    tracks_memo = memo.setdefault("tracks", {})
    forecast_memo = memo.setdefault("forecasts", {})

    points: list[ModarPoint] = []
    for window in build_windows(t0, config, len(sequence)):
        span = (window.start, window.end)
        tracks = tracks_memo.get(span)
        if tracks is None:
            dets = [cache.ensure(f, detect_fn)
                    for f in range(window.start, window.end + 1)]
            tracks = track_sequence(dets, tracker_params,
                                    start_frame=window.start)
            tracks_memo[span] = tracks
        fkey = (span, window.direction, config.predictor)
        forecasts = forecast_memo.get(fkey)
        if forecasts is None:
            forecasts = []
            for track in tracks:
                tracklet = _tracklet_from_track(track)
                if window.direction is Direction.FORWARD:
                    trajs = predictor(tracklet)
                    anchor_frame = tracklet.anchor_frame
                    anchor_box = tracklet.anchor_box
                else:
                    trajs = fc.forecast_reverse(tracklet, predictor)
                    anchor_frame = tracklet.frames[0]
                    anchor_box = tracklet.boxes[0]
                ranked = sorted(enumerate(trajs),
                                key=lambda it: (-it[1].confidence, it[0]))
                forecasts.append((track.track_id, anchor_frame, anchor_box,
                                  tracking_score(track, window.end), ranked))
            forecast_memo[fkey] = forecasts

        j = config.trajectories_per_track
        for track_id, anchor_frame, anchor_box, score, ranked in forecasts:
            if window.direction is Direction.FORWARD:
                land_offset = t0 - anchor_frame
            else:
                land_offset = anchor_frame - t0
            if not 1 <= land_offset <= fc.HORIZON:
                continue
            for hyp_idx, traj in ranked[:j]:
                points.append(encode_modar(
                    traj, land_offset, anchor_box, track_id, score,
                    manifest, window.direction, hypothesis=hyp_idx))
    return points


def write_modar_jsonl(points: Sequence[ModarPoint], path) -> None:
    lines = [json.dumps(p.to_dict(), sort_keys=True, separators=(",", ":"))
             for p in points]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_modar_jsonl(path) -> list[ModarPoint]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(ModarPoint.from_dict(json.loads(line)))
    return out
