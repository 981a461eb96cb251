"""Kalman-filter multi-object tracking over per-frame detections.

State is [x, y, z, yaw, l, w, h, vx, vy, vyaw]: constant velocity in the
plane, constant turn rate, random-walk elevation and sizes. Association is
Hungarian on BEV IoU with a gate; lifecycle is confirm-after-2-hits,
drop-after-3-misses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ClassMismatch, NoHistory
from .geometry import Box3D, ObjectClass, iou_bev, wrap_angle

STATE_DIM = 10
MEAS_DIM = 7
TRACKING_SCORE_WINDOW = 11

_H = np.zeros((MEAS_DIM, STATE_DIM))
_H[:MEAS_DIM, :MEAS_DIM] = np.eye(MEAS_DIM)

_MIN_SIZE = 0.05


@dataclass(frozen=True)
class TrackerParams:
    process_noise: tuple[float, ...] = (
        0.01, 0.01, 1e-4, 1e-3, 1e-6, 1e-6, 1e-6, 0.1, 0.1, 0.01)
    measurement_noise: tuple[float, ...] = (
        0.02, 0.02, 0.01, 0.02, 0.01, 0.01, 0.01)
    initial_velocity_variance: tuple[float, float, float] = (4.0, 4.0, 0.5)
    gate_iou: float = 0.1
    confirm_hits: int = 2
    max_misses: int = 3
    dt: float = 0.1

    def __post_init__(self):
        if len(self.process_noise) != STATE_DIM:
            raise ValueError("process_noise must have 10 entries")
        if len(self.measurement_noise) != MEAS_DIM:
            raise ValueError("measurement_noise must have 7 entries")
        if min(self.process_noise) < 0 or min(self.measurement_noise) < 0:
            raise ValueError("noise variances must be non-negative")


@dataclass(frozen=True)
class KalmanTrack:
    track_id: int
    label: ObjectClass
    mean: np.ndarray
    cov: np.ndarray
    hits: int = 1
    misses: int = 0
    history: tuple[tuple[int, Box3D, float], ...] = ()

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(STATE_DIM)
        cov = np.asarray(self.cov, dtype=float).reshape(STATE_DIM, STATE_DIM)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def state_box(self, score: float = 1.0) -> Box3D:
        m = self.mean
        return Box3D(
            cx=float(m[0]), cy=float(m[1]), cz=float(m[2]),
            length=max(float(m[4]), _MIN_SIZE),
            width=max(float(m[5]), _MIN_SIZE),
            height=max(float(m[6]), _MIN_SIZE),
            yaw=float(m[3]), label=self.label, score=score,
        )


def track_from_detection(track_id: int, det: Box3D,
                         params: TrackerParams) -> KalmanTrack:
    mean = np.array([det.cx, det.cy, det.cz, det.yaw,
                     det.length, det.width, det.height, 0.0, 0.0, 0.0])
    cov = np.zeros((STATE_DIM, STATE_DIM))
    cov[:MEAS_DIM, :MEAS_DIM] = np.diag(params.measurement_noise)
    cov[MEAS_DIM:, MEAS_DIM:] = np.diag(params.initial_velocity_variance)
    return KalmanTrack(track_id=track_id, label=det.label, mean=mean, cov=cov)


def _transition(dt: float) -> np.ndarray:
    f = np.eye(STATE_DIM)
    f[0, 7] = dt
    f[1, 8] = dt
    f[3, 9] = dt
    return f


def kf_predict(track: KalmanTrack, dt: float,
               params: TrackerParams | None = None) -> KalmanTrack:
    """Constant-velocity / constant-turn-rate prediction."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    params = params or TrackerParams()
    f = _transition(dt)
    mean = f @ track.mean
    mean[3] = wrap_angle(mean[3])
    cov = f @ track.cov @ f.T + np.diag(params.process_noise)
    cov = 0.5 * (cov + cov.T)
    return replace(track, mean=mean, cov=cov)


def kf_update(track: KalmanTrack, det: Box3D,
              params: TrackerParams | None = None) -> KalmanTrack:
    """Linear Kalman update on [x, y, z, yaw, l, w, h].

    The yaw innovation is wrapped; if it still exceeds pi/2 the measured
    heading is flipped by pi first (single-frame geometry cannot observe
    heading sign).
    """
    if det.label is not track.label:
        raise ClassMismatch(
            f"track class {track.label.value} vs detection {det.label.value}")
    params = params or TrackerParams()
    z = np.array([det.cx, det.cy, det.cz, det.yaw,
                  det.length, det.width, det.height])
    innovation = z - _H @ track.mean
    innovation[3] = wrap_angle(innovation[3])
    if abs(innovation[3]) > 0.5 * math.pi:
        innovation[3] = wrap_angle(innovation[3] + math.pi)
    r = np.diag(params.measurement_noise)
    s = _H @ track.cov @ _H.T + r
    gain = track.cov @ _H.T @ np.linalg.inv(s)
    mean = track.mean + gain @ innovation
    mean[3] = wrap_angle(mean[3])
    joseph = np.eye(STATE_DIM) - gain @ _H
    cov = joseph @ track.cov @ joseph.T + gain @ r @ gain.T
    cov = 0.5 * (cov + cov.T)
    return replace(track, mean=mean, cov=cov)


def _associate(predicted: list[KalmanTrack], detections: Sequence[Box3D],
               gate: float) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Hungarian assignment maximizing summed BEV IoU, gated and class-aware."""
    if not predicted or not detections:
        return [], list(range(len(predicted))), list(range(len(detections)))
    boxes = [t.state_box() for t in predicted]
    iou = np.zeros((len(predicted), len(detections)))
    for i, tb in enumerate(boxes):
        ra = 0.5 * math.hypot(tb.length, tb.width)
        for j, db in enumerate(detections):
            if db.label is not tb.label:
                continue
            rb = 0.5 * math.hypot(db.length, db.width)
            dx, dy = tb.cx - db.cx, tb.cy - db.cy
            if dx * dx + dy * dy > (ra + rb) * (ra + rb):
                continue
            iou[i, j] = iou_bev(tb, db)
    rows, cols = linear_sum_assignment(-iou)
    matches = []
    matched_rows, matched_cols = set(), set()
    for i, j in zip(rows, cols):
        if iou[i, j] >= gate:
            matches.append((i, j))
            matched_rows.add(i)
            matched_cols.add(j)
    unmatched_tracks = [i for i in range(len(predicted)) if i not in matched_rows]
    unmatched_dets = [j for j in range(len(detections)) if j not in matched_cols]
    return matches, unmatched_tracks, unmatched_dets


def track_sequence(detections: Sequence[Sequence[Box3D]],
                   params: TrackerParams | None = None,
                   start_frame: int = 0) -> list[KalmanTrack]:
    """Track an ordered run of frames and return every confirmed track.

    History records the filtered (posterior) box together with the matched
    detection's score. Track ids are assigned in birth order and never
    reused; output is sorted by track id.
    """
    params = params or TrackerParams()
    live: list[KalmanTrack] = []
    registry: dict[int, KalmanTrack] = {}
    next_id = 0
    for offset, dets in enumerate(detections):
        frame = start_frame + offset
        predicted = [kf_predict(t, params.dt, params) for t in live]
        matches, unmatched_tracks, unmatched_dets = _associate(
            predicted, dets, params.gate_iou)
        new_live: list[KalmanTrack] = []
        for i, j in matches:
            det = dets[j]
            updated = kf_update(predicted[i], det, params)
            updated = replace(
                updated,
                hits=predicted[i].hits + 1,
                misses=0,
                history=predicted[i].history
                + ((frame, updated.state_box(det.score), det.score),),
            )
            new_live.append(updated)
        for i in unmatched_tracks:
            t = replace(predicted[i], misses=predicted[i].misses + 1)
            if t.misses <= params.max_misses:
                new_live.append(t)
            else:
                registry[t.track_id] = t
        for j in unmatched_dets:
            det = dets[j]
            t = track_from_detection(next_id, det, params)
            t = replace(t, history=((frame, det, det.score),))
            next_id += 1
            new_live.append(t)
        live = sorted(new_live, key=lambda t: t.track_id)
    for t in live:
        registry[t.track_id] = t
    confirmed = [t for t in registry.values() if t.hits >= params.confirm_hits]
    return sorted(confirmed, key=lambda t: t.track_id)


def tracking_score(track: KalmanTrack, frame_index: int) -> float:
    """Mean detection score over the most recent <= 11 history entries at or
    before frame_index."""
    scores = [s for f, _, s in track.history if f <= frame_index]
    if not scores:
        raise NoHistory(
            f"track {track.track_id} has no history at or before {frame_index}")
    window = scores[-TRACKING_SCORE_WINDOW:]
    return float(sum(window) / len(window))
