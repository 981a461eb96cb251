"""Analytic trajectory predictors with forward and reverse modes.

Every predictor emits trajectories with exactly ``HORIZON`` waypoints at
frame offsets 1..HORIZON from the tracklet anchor. Waypoints are stored as
an (80, 5) array with columns [x, y, yaw, std_x, std_y]; row i is offset
i + 1. Confidences of an emitted trajectory set always sum to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyGroundTruth
from .geometry import Box3D, ObjectClass, wrap_angle

HORIZON = 80
WP_X, WP_Y, WP_YAW, WP_STD_X, WP_STD_Y = range(5)

# Below this fitted speed the anchor yaw is kept instead of the velocity
# direction, which is unstable for near-stationary tracks.
MIN_SPEED_FOR_YAW = 0.5

# Softmax temperature (meters of backcast RMSE) for hypothesis confidences.
BACKCAST_TEMPERATURE = 0.5


@dataclass(frozen=True)
class TrackletInput:
    """Tracked boxes for up to 11 frames (10 past + 1 current) at 10 Hz."""

    label: ObjectClass
    frames: tuple[int, ...]
    boxes: tuple[Box3D, ...]
    scores: tuple[float, ...]
    dt: float = 0.1

    def __post_init__(self):
        n = len(self.frames)
        if not 1 <= n <= 11:
            raise ValueError(f"tracklet must hold 1..11 frames, got {n}")
        if len(self.boxes) != n or len(self.scores) != n:
            raise ValueError("frames, boxes and scores must align")
        if any(b <= a for a, b in zip(self.frames, self.frames[1:])):
            raise ValueError("frame indices must be strictly increasing")

    @property
    def anchor_frame(self) -> int:
        return self.frames[-1]

    @property
    def anchor_box(self) -> Box3D:
        return self.boxes[-1]


@dataclass(frozen=True)
class Trajectory:
    """One forecast hypothesis: confidence plus (HORIZON, 5) waypoints."""

    confidence: float
    waypoints: np.ndarray

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.shape != (HORIZON, 5):
            raise ValueError(f"waypoints must be ({HORIZON}, 5), got {wp.shape}")
        if np.any(wp[:, WP_STD_X] < 0.0) or np.any(wp[:, WP_STD_Y] < 0.0):
            raise ValueError("waypoint spreads must be non-negative")
        wp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)

    def waypoint(self, offset: int) -> np.ndarray:
        """Row for frame offset in 1..HORIZON."""
        if not 1 <= offset <= HORIZON:
            raise IndexError(f"offset must be in 1..{HORIZON}, got {offset}")
        return self.waypoints[offset - 1]


Predictor = Callable[[TrackletInput], list[Trajectory]]


def _fit_velocity(tracklet: TrackletInput, last: int | None = None):
    """Least-squares (vx, vy) over the window, plus residual RMS.

    Returns (vx, vy, rms). Single-sample windows give zero velocity.
    """
    frames = np.asarray(tracklet.frames, dtype=float)
    xs = np.asarray([b.cx for b in tracklet.boxes])
    ys = np.asarray([b.cy for b in tracklet.boxes])
    if last is not None and last < len(frames):
        frames, xs, ys = frames[-last:], xs[-last:], ys[-last:]
    if len(frames) < 2:
        return 0.0, 0.0, 0.0
    t = (frames - frames[-1]) * tracklet.dt
    a = np.stack([t, np.ones_like(t)], axis=1)
    sol_x, res_x = np.linalg.lstsq(a, xs, rcond=None)[:2]
    sol_y, res_y = np.linalg.lstsq(a, ys, rcond=None)[:2]
    ssr = 0.0
    if res_x.size:
        ssr += float(res_x[0])
    if res_y.size:
        ssr += float(res_y[0])
    rms = math.sqrt(max(ssr / (2 * len(frames)), 0.0))
    return float(sol_x[0]), float(sol_y[0]), rms


def _cv_waypoints(tracklet: TrackletInput, vx: float, vy: float,
                  std: float | np.ndarray) -> np.ndarray:
    anchor = tracklet.anchor_box
    speed = math.hypot(vx, vy)
    yaw = math.atan2(vy, vx) if speed > MIN_SPEED_FOR_YAW else anchor.yaw
    m = np.arange(1, HORIZON + 1, dtype=float)
    wp = np.empty((HORIZON, 5))
    wp[:, WP_X] = anchor.cx + m * tracklet.dt * vx
    wp[:, WP_Y] = anchor.cy + m * tracklet.dt * vy
    wp[:, WP_YAW] = yaw
    wp[:, WP_STD_X] = std
    wp[:, WP_STD_Y] = std
    return wp


def _stationary_waypoints(tracklet: TrackletInput) -> np.ndarray:
    anchor = tracklet.anchor_box
    wp = np.zeros((HORIZON, 5))
    wp[:, WP_X] = anchor.cx
    wp[:, WP_Y] = anchor.cy
    wp[:, WP_YAW] = anchor.yaw
    return wp


def forecast_stationary(tracklet: TrackletInput) -> list[Trajectory]:
    """Hold the anchor pose for the whole horizon."""
    return [Trajectory(confidence=1.0, waypoints=_stationary_waypoints(tracklet))]


def forecast_cv(tracklet: TrackletInput) -> list[Trajectory]:
    """Constant velocity from a least-squares fit over the window."""
    vx, vy, rms = _fit_velocity(tracklet)
    return [Trajectory(confidence=1.0, waypoints=_cv_waypoints(tracklet, vx, vy, rms))]


def _turn_waypoints(tracklet: TrackletInput, speed: float,
                    yaw_rate: float, std: np.ndarray) -> np.ndarray:
    anchor = tracklet.anchor_box
    x, y, psi = anchor.cx, anchor.cy, anchor.yaw
    dt = tracklet.dt
    wp = np.empty((HORIZON, 5))
    for i in range(HORIZON):
        x += speed * math.cos(psi) * dt
        y += speed * math.sin(psi) * dt
        psi = wrap_angle(psi + yaw_rate * dt)
        wp[i, WP_X] = x
        wp[i, WP_Y] = y
        wp[i, WP_YAW] = psi
    wp[:, WP_STD_X] = std
    wp[:, WP_STD_Y] = std
    return wp


def _fit_yaw_rate(tracklet: TrackletInput) -> float:
    if len(tracklet.frames) < 2:
        return 0.0
    t = (np.asarray(tracklet.frames, dtype=float) - tracklet.frames[-1]) * tracklet.dt
    yaws = np.unwrap([b.yaw for b in tracklet.boxes])
    a = np.stack([t, np.ones_like(t)], axis=1)
    sol = np.linalg.lstsq(a, yaws, rcond=None)[0]
    return float(sol[0])


def _backcast_rmse(tracklet: TrackletInput, positions_at) -> float:
    """RMSE of a hypothesis replayed over the observed window.

    ``positions_at(d)`` returns the hypothesis position d frames before the
    anchor (d >= 0).
    """
    total = 0.0
    anchor = tracklet.anchor_frame
    for frame, box in zip(tracklet.frames, tracklet.boxes):
        px, py = positions_at(anchor - frame)
        total += (px - box.cx) ** 2 + (py - box.cy) ** 2
    return math.sqrt(total / len(tracklet.frames))


def forecast_multihyp(tracklet: TrackletInput) -> list[Trajectory]:
    """Six analytic hypotheses scored by backcast error over the window.

    Hypotheses, in order: stationary, constant velocity, constant velocity
    fitted on the last 3 frames, constant turn, CV at half speed, CV at
    1.5x speed. Confidences are softmax(-rmse / temperature); per-waypoint
    spread grows linearly as rmse * (1 + m / 40).
    """
    anchor = tracklet.anchor_box
    if len(tracklet.frames) < 2:
        wp = _stationary_waypoints(tracklet)
        return [Trajectory(confidence=1.0 / 6.0, waypoints=wp) for _ in range(6)]

    vx, vy, _ = _fit_velocity(tracklet)
    vx3, vy3, _ = _fit_velocity(tracklet, last=3)
    speed = math.hypot(vx, vy)
    yaw_rate = _fit_yaw_rate(tracklet)
    dt = tracklet.dt

    def cv_positions(ux, uy):
        return lambda d: (anchor.cx - ux * d * dt, anchor.cy - uy * d * dt)

    def turn_positions(d):
        # Exact reverse of the forward Euler step used in _turn_waypoints.
        x, y, psi = anchor.cx, anchor.cy, anchor.yaw
        for _ in range(d):
            psi = psi - yaw_rate * dt
            x -= speed * math.cos(psi) * dt
            y -= speed * math.sin(psi) * dt
        return x, y

    backcasts = [
        lambda d: (anchor.cx, anchor.cy),
        cv_positions(vx, vy),
        cv_positions(vx3, vy3),
        turn_positions,
        cv_positions(0.5 * vx, 0.5 * vy),
        cv_positions(1.5 * vx, 1.5 * vy),
    ]
    rmses = np.array([_backcast_rmse(tracklet, fn) for fn in backcasts])
    logits = -rmses / BACKCAST_TEMPERATURE
    weights = np.exp(logits - logits.max())
    confidences = weights / weights.sum()

    m = np.arange(1, HORIZON + 1, dtype=float)
    growth = 1.0 + m / 40.0
    stds = [rmse * growth for rmse in rmses]
    waypoint_sets = [
        _stationary_waypoints(tracklet),
        _cv_waypoints(tracklet, vx, vy, stds[1]),
        _cv_waypoints(tracklet, vx3, vy3, stds[2]),
        _turn_waypoints(tracklet, speed, yaw_rate, stds[3]),
        _cv_waypoints(tracklet, 0.5 * vx, 0.5 * vy, stds[4]),
        _cv_waypoints(tracklet, 1.5 * vx, 1.5 * vy, stds[5]),
    ]
    waypoint_sets[0][:, WP_STD_X] = stds[0]
    waypoint_sets[0][:, WP_STD_Y] = stds[0]
    return [
        Trajectory(confidence=float(c), waypoints=wp)
        for c, wp in zip(confidences, waypoint_sets)
    ]


PREDICTORS: dict[str, Predictor] = {
    "stationary": forecast_stationary,
    "cv": forecast_cv,
    "multihyp": forecast_multihyp,
}


def _reverse_tracklet(tracklet: TrackletInput) -> TrackletInput:
    """Negate the time axis: frame order reversed onto increasing virtual
    indices, headings flipped so boxes point along virtual motion."""
    latest = tracklet.frames[-1]
    virtual_frames = tuple(latest - f for f in reversed(tracklet.frames))
    flipped = tuple(
        replace(b, yaw=wrap_angle(b.yaw + math.pi)) for b in reversed(tracklet.boxes)
    )
    return TrackletInput(
        label=tracklet.label,
        frames=virtual_frames,
        boxes=flipped,
        scores=tuple(reversed(tracklet.scores)),
        dt=tracklet.dt,
    )


def forecast_reverse(tracklet: TrackletInput, predictor: Predictor) -> list[Trajectory]:
    """Predict backwards in time: waypoint offset m lands m frames before
    the tracklet's earliest frame.

    The window is reversed onto a virtual time axis, the forward predictor
    runs on it, and headings are flipped back on output.
    """
    trajectories = predictor(_reverse_tracklet(tracklet))
    out = []
    for traj in trajectories:
        wp = traj.waypoints.copy()
        wp[:, WP_YAW] = [wrap_angle(y + math.pi) for y in wp[:, WP_YAW]]
        out.append(Trajectory(confidence=traj.confidence, waypoints=wp))
    return out


def forecast_metrics(predicted: Sequence[Trajectory],
                     gt_future: Sequence) -> dict[str, float]:
    """ADE/FDE of the top-confidence trajectory plus minADE/minFDE over all.

    Args:
        predicted: at least one trajectory.
        gt_future: HORIZON entries of (x, y) ground-truth centers; missing
            frames are None and excluded pairwise.

    Raises:
        EmptyGroundTruth: no ground-truth entry is available.
    """
    if len(gt_future) != HORIZON:
        raise ValueError(f"expected {HORIZON} ground-truth entries")
    available = [(i, g) for i, g in enumerate(gt_future) if g is not None]
    if not available:
        raise EmptyGroundTruth("no ground-truth future positions")

    def errors(traj: Trajectory) -> np.ndarray:
        return np.array([
            math.hypot(traj.waypoints[i, WP_X] - g[0], traj.waypoints[i, WP_Y] - g[1])
            for i, g in available
        ])

    confidences = [t.confidence for t in predicted]
    top = int(np.argmax(confidences))
    per_traj = [errors(t) for t in predicted]
    return {
        "ade": float(per_traj[top].mean()),
        "fde": float(per_traj[top][-1]),
        "min_ade": float(min(e.mean() for e in per_traj)),
        "min_fde": float(min(e[-1] for e in per_traj)),
    }
