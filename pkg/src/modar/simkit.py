"""Deterministic synthetic scene and LiDAR generator.

Actors follow scripted motion at 10 Hz on a flat ground plane. Per frame,
surface points are sampled on the two box faces turned toward the sensor
plus the top face, with 1/r^exp density falloff and angular-shadow
occlusion. Identical configs (including seed) produce byte-identical
sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataio import (DEFAULT_CLASS_SIZES, FRAME_PERIOD_US, FrameRecord, GtBox,
                     SequenceDataset)
from .errors import ConfigError, UnknownScenario
from .geometry import Box3D, ObjectClass, Pose, wrap_angle

POINT_INTENSITY = 0.5
GROUND_Z = 0.0

SCENARIO_NAMES = ("OCCLUSION_CORRIDOR", "LONG_RANGE_LINE", "STATIONARY_LOT",
                  "HIGHWAY_FAST", "MIXED_CITY")


@dataclass(frozen=True)
class Stationary:
    pass


@dataclass(frozen=True)
class ConstantVelocity:
    speed_mps: float


@dataclass(frozen=True)
class ConstantTurn:
    speed_mps: float
    yaw_rate_rps: float


@dataclass(frozen=True)
class StopAndGo:
    segments: tuple[tuple[float, float], ...]  # (duration_s, speed_mps)


@dataclass(frozen=True)
class FollowWaypoints:
    waypoints: tuple[tuple[float, float, float, float], ...]  # (t, x, y, yaw)

    def __post_init__(self):
        times = [w[0] for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("waypoint times must be strictly increasing")


Motion = Stationary | ConstantVelocity | ConstantTurn | StopAndGo | FollowWaypoints


@dataclass(frozen=True)
class ActorScript:
    label: ObjectClass
    size: tuple[float, float, float]
    x: float
    y: float
    yaw: float
    motion: Motion = Stationary()
    spawn_frame: int = 0
    despawn_frame: int | None = None  # exclusive; None = whole sequence

    def __post_init__(self):
        if min(self.size) <= 0:
            raise ConfigError("actor size must be positive")
        if self.despawn_frame is not None and self.despawn_frame <= self.spawn_frame:
            raise ConfigError("despawn must come after spawn")


@dataclass(frozen=True)
class LidarModel:
    points_at_10m: float = 200.0
    falloff_exp: float = 2.0
    noise_sigma: float = 0.0
    max_range: float = 80.0
    occlusion: bool = True
    max_points_per_actor: int | None = None  # cap at very short range

    def __post_init__(self):
        if self.points_at_10m < 0 or self.noise_sigma < 0 or self.max_range <= 0:
            raise ConfigError("invalid lidar model parameters")


@dataclass(frozen=True)
class SceneConfig:
    actors: tuple[ActorScript, ...]
    ego: ActorScript
    lidar: LidarModel
    frame_count: int
    seed: int
    sequence_id: str = "scene"

    def __post_init__(self):
        if self.frame_count < 1:
            raise ConfigError("frame_count must be >= 1")


class _MotionState:
    """Integrates one script at the frame period."""

    def __init__(self, script: ActorScript, dt: float):
        self.script = script
        self.dt = dt
        self.x = script.x
        self.y = script.y
        self.yaw = script.yaw
        self.elapsed = 0.0

    def current_speed(self) -> float:
        m = self.script.motion
        if isinstance(m, Stationary):
            return 0.0
        if isinstance(m, ConstantVelocity):
            return m.speed_mps
        if isinstance(m, ConstantTurn):
            return m.speed_mps
        if isinstance(m, StopAndGo):
            t = 0.0
            for duration, speed in m.segments:
                t += duration
                if self.elapsed < t - 1e-9:
                    return speed
            return m.segments[-1][1] if m.segments else 0.0
        if isinstance(m, FollowWaypoints):
            pose_now = self._waypoint_pose(self.elapsed)
            pose_next = self._waypoint_pose(self.elapsed + self.dt)
            return math.hypot(pose_next[0] - pose_now[0],
                              pose_next[1] - pose_now[1]) / self.dt
        return 0.0

    def _waypoint_pose(self, t: float) -> tuple[float, float, float]:
        wps = self.script.motion.waypoints
        if t <= wps[0][0]:
            return wps[0][1], wps[0][2], wps[0][3]
        if t >= wps[-1][0]:
            return wps[-1][1], wps[-1][2], wps[-1][3]
        for (t0, x0, y0, y_a), (t1, x1, y1, y_b) in zip(wps, wps[1:]):
            if t0 <= t <= t1:
                u = (t - t0) / (t1 - t0)
                yaw = wrap_angle(y_a + u * wrap_angle(y_b - y_a))
                return x0 + u * (x1 - x0), y0 + u * (y1 - y0), yaw
        return wps[-1][1], wps[-1][2], wps[-1][3]

    def step(self) -> None:
        m = self.script.motion
        dt = self.dt
        if isinstance(m, ConstantVelocity):
            self.x += m.speed_mps * math.cos(self.yaw) * dt
            self.y += m.speed_mps * math.sin(self.yaw) * dt
        elif isinstance(m, ConstantTurn):
            self.x += m.speed_mps * math.cos(self.yaw) * dt
            self.y += m.speed_mps * math.sin(self.yaw) * dt
            self.yaw = wrap_angle(self.yaw + m.yaw_rate_rps * dt)
        elif isinstance(m, StopAndGo):
            speed = self.current_speed()
            self.x += speed * math.cos(self.yaw) * dt
            self.y += speed * math.sin(self.yaw) * dt
        elif isinstance(m, FollowWaypoints):
            self.x, self.y, self.yaw = self._waypoint_pose(self.elapsed + dt)
        self.elapsed += dt


def _facing_faces(box: Box3D, sensor_xy: tuple[float, float]) -> list[str]:
    """Names of side faces whose outward normal points toward the sensor."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx, dy = sensor_xy[0] - box.cx, sensor_xy[1] - box.cy
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    faces = []
    if lx > 0.5 * box.length:
        faces.append("+x")
    elif lx < -0.5 * box.length:
        faces.append("-x")
    if ly > 0.5 * box.width:
        faces.append("+y")
    elif ly < -0.5 * box.width:
        faces.append("-y")
    return faces


def _face_area(box: Box3D, face: str) -> float:
    if face in ("+x", "-x"):
        return box.width * box.height
    if face in ("+y", "-y"):
        return box.length * box.height
    return box.length * box.width  # top


# Raster spacing of the sampling lattice. Matching the detector's grid
# resolution keeps returns on one surface spatially contiguous.
LATTICE_SPACING = 0.3
SIDE_ROW_BOTTOM_Z = 0.3  # world height of the lower scan row
SIDE_ROW_TOP_FRACTION = 0.95


def _axis_positions(extent: float) -> np.ndarray:
    n = int(math.ceil(extent / LATTICE_SPACING)) + 1
    return np.linspace(-0.5 * extent, 0.5 * extent, max(n, 2))


def _face_lattice(box: Box3D, face: str) -> np.ndarray:
    """Ordered local-frame lattice for one face.

    Side faces are two horizontal scan rows, the upper one staggered by
    half a spacing (brick pattern) so the footprint trace stays contiguous
    under point noise. Columns fill left to right so a partial fill is a
    contiguous stretch; the top face fills strip by strip, alternate strips
    staggered.
    """
    hl, hw, hh = 0.5 * box.length, 0.5 * box.width, 0.5 * box.height
    if face == "top":
        us = _axis_positions(box.length)
        vs = _axis_positions(box.width)
        half = 0.5 * (us[1] - us[0])
        strips = []
        for k, v in enumerate(vs):
            drift = us if k % 2 == 0 else (us[:-1] + half)
            strips.append(np.column_stack([
                drift, np.full(len(drift), v), np.full(len(drift), hh)]))
        return np.vstack(strips)
    z_bottom = min(SIDE_ROW_BOTTOM_Z, 0.5 * box.height) - hh
    z_top = SIDE_ROW_TOP_FRACTION * box.height - hh
    extent = box.width if face in ("+x", "-x") else box.length
    along = _axis_positions(extent)
    mids = (along[:-1] + along[1:]) / 2.0
    coords = []  # (along, z) pairs, interleaved for contiguous partial fill
    for i, a in enumerate(along):
        coords.append((a, z_bottom))
        if i < len(mids):
            coords.append((mids[i], z_top))
    coords = np.asarray(coords)
    if face in ("+x", "-x"):
        fixed = hl if face == "+x" else -hl
        return np.column_stack([np.full(len(coords), fixed),
                                coords[:, 0], coords[:, 1]])
    fixed = hw if face == "+y" else -hw
    return np.column_stack([coords[:, 0],
                            np.full(len(coords), fixed), coords[:, 1]])


def _uniform_on_face(box: Box3D, face: str, n: int,
                     rng: np.random.Generator) -> np.ndarray:
    hl, hw, hh = 0.5 * box.length, 0.5 * box.width, 0.5 * box.height
    if face == "top":
        return np.column_stack([rng.uniform(-hl, hl, n),
                                rng.uniform(-hw, hw, n),
                                np.full(n, hh)])
    if face in ("+x", "-x"):
        fixed = hl if face == "+x" else -hl
        return np.column_stack([np.full(n, fixed),
                                rng.uniform(-hw, hw, n),
                                rng.uniform(-hh, hh, n)])
    fixed = hw if face == "+y" else -hw
    return np.column_stack([rng.uniform(-hl, hl, n),
                            np.full(n, fixed),
                            rng.uniform(-hh, hh, n)])


def _sample_actor_surface(box: Box3D, faces: list[str], count: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Raster-style surface sampling: lattice points on the visible faces
    (largest first, then top), uniform extras once the lattices are full."""
    order = sorted((f for f in faces if f != "top"),
                   key=lambda f: -_face_area(box, f)) + ["top"]
    locals_ = []
    remaining = count
    for face in order:
        if remaining <= 0:
            break
        lattice = _face_lattice(box, face)
        take = min(remaining, len(lattice))
        locals_.append(lattice[:take])
        remaining -= take
    if remaining > 0:
        areas = [_face_area(box, f) for f in order]
        for face, extra in zip(order, _allocate(remaining, areas)):
            if extra > 0:
                locals_.append(_uniform_on_face(box, face, extra, rng))
    local = np.vstack(locals_) if locals_ else np.empty((0, 3))
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    world = np.empty_like(local)
    world[:, 0] = box.cx + c * local[:, 0] - s * local[:, 1]
    world[:, 1] = box.cy + s * local[:, 0] + c * local[:, 1]
    world[:, 2] = box.cz + local[:, 2]
    return world


def _allocate(count: int, weights: Sequence[float]) -> list[int]:
    """Largest-remainder split of count proportional to weights."""
    total = sum(weights)
    raw = [count * w / total for w in weights]
    counts = [int(math.floor(r)) for r in raw]
    remainder = count - sum(counts)
    order = sorted(range(len(weights)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def _angular_interval(corners, sensor_xy) -> tuple[float, float]:
    """(center angle, half width) of the BEV footprint as seen from sensor."""
    angles = [math.atan2(cy - sensor_xy[1], cx - sensor_xy[0]) for cx, cy in corners]
    center = angles[0]
    half = 0.0
    offsets = [wrap_angle(a - center) for a in angles]
    mid = (min(offsets) + max(offsets)) / 2.0
    center = wrap_angle(center + mid)
    half = max(abs(wrap_angle(a - center)) for a in angles)
    return center, half


def _shadow_segments(center_j, half_j, nearer_intervals) -> list[tuple[float, float]]:
    """Occluded sub-intervals of [-half_j, half_j] around center_j."""
    segments = []
    for center_i, half_i in nearer_intervals:
        delta = wrap_angle(center_i - center_j)
        for shift in (-2.0 * math.pi, 0.0, 2.0 * math.pi):
            lo = max(delta + shift - half_i, -half_j)
            hi = min(delta + shift + half_i, half_j)
            if hi > lo:
                segments.append((lo, hi))
    segments.sort()
    merged: list[tuple[float, float]] = []
    for lo, hi in segments:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def simulate(config: SceneConfig) -> SequenceDataset:
    """Run the scene and return a full dataset with ground truth."""
    dt = 0.1
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    ego_state = _MotionState(config.ego, dt)
    actor_states = [_MotionState(a, dt) for a in config.actors]
    lidar = config.lidar

    from .geometry import box_corners_bev  # local import to avoid cycle noise

    frames: list[FrameRecord] = []
    frame_points: list[np.ndarray] = []
    for frame in range(config.frame_count):
        ego_xy = (ego_state.x, ego_state.y)
        ego_pose = Pose.from_xy_yaw(ego_state.x, ego_state.y, ego_state.yaw)

        present = []
        for idx, (script, state) in enumerate(zip(config.actors, actor_states)):
            despawn = script.despawn_frame
            if frame < script.spawn_frame or (despawn is not None and frame >= despawn):
                continue
            box = Box3D(
                cx=state.x, cy=state.y, cz=GROUND_Z + 0.5 * script.size[2],
                length=script.size[0], width=script.size[1], height=script.size[2],
                yaw=state.yaw, label=script.label, score=1.0,
            )
            r = math.hypot(state.x - ego_xy[0], state.y - ego_xy[1])
            present.append((idx, box, r, state.current_speed()))

        intervals = {}
        for idx, box, r, _ in present:
            intervals[idx] = _angular_interval(box_corners_bev(box), ego_xy)
        by_range = sorted(present, key=lambda item: (item[2], item[0]))

        all_points = []
        gt_boxes = []
        samples: dict[int, np.ndarray] = {}
        fractions: dict[int, float] = {}
        for rank, (idx, box, r, speed) in enumerate(by_range):
            if r <= 1e-6 or r > lidar.max_range:
                count = 0
            else:
                count = int(round(lidar.points_at_10m * (10.0 / r) ** lidar.falloff_exp))
                if lidar.max_points_per_actor is not None:
                    count = min(count, lidar.max_points_per_actor)
            faces = _facing_faces(box, ego_xy) + ["top"]
            if count > 0:
                pts = _sample_actor_surface(box, faces, count, rng)
            else:
                pts = np.empty((0, 3))

            occ_fraction = 0.0
            if lidar.occlusion:
                nearer = [intervals[j] for j, _, _, _ in by_range[:rank]]
                center_j, half_j = intervals[idx]
                if nearer and half_j > 1e-12:
                    shadow = _shadow_segments(center_j, half_j, nearer)
                    covered = sum(hi - lo for lo, hi in shadow)
                    occ_fraction = min(1.0, covered / (2.0 * half_j))
                    if len(pts) and shadow:
                        offs = np.array([
                            wrap_angle(math.atan2(p[1] - ego_xy[1],
                                                  p[0] - ego_xy[0]) - center_j)
                            for p in pts
                        ])
                        keep = np.ones(len(pts), dtype=bool)
                        for lo, hi in shadow:
                            keep &= ~((offs >= lo) & (offs <= hi))
                        pts = pts[keep]
            if lidar.noise_sigma > 0 and len(pts):
                noise = rng.normal(0.0, lidar.noise_sigma, pts.shape)
                limit = 3.0 * lidar.noise_sigma
                pts = pts + np.clip(noise, -limit, limit)
            samples[idx] = pts
            fractions[idx] = occ_fraction

        for idx, box, r, speed in present:
            pts = samples[idx]
            if len(pts):
                all_points.append(pts)
            gt_boxes.append(GtBox(
                track_id=idx,
                box=box,
                speed_mps=speed,
                num_points_inside=len(pts),
                occluded_fraction=fractions[idx],
            ))

        if all_points:
            world = np.vstack(all_points)
            rot = ego_pose.matrix[:3, :3]
            ego_frame = (world - ego_pose.matrix[:3, 3]) @ rot
            pts4 = np.column_stack([
                ego_frame, np.full(len(ego_frame), POINT_INTENSITY)
            ]).astype("<f4")
        else:
            pts4 = np.empty((0, 4), dtype="<f4")

        frames.append(FrameRecord(
            frame_index=frame,
            timestamp_us=frame * FRAME_PERIOD_US,
            ego_pose=ego_pose,
            gt_boxes=tuple(gt_boxes),
        ))
        frame_points.append(pts4)

        ego_state.step()
        for state in actor_states:
            state.step()

    classes = []
    for script in config.actors:
        if script.label.value not in classes:
            classes.append(script.label.value)
    return SequenceDataset(
        sequence_id=config.sequence_id,
        frames=frames,
        points=frame_points,
        classes=classes,
        class_default_sizes={
            label.value: DEFAULT_CLASS_SIZES[label]
            for label in ObjectClass if label.value in classes
        },
    )


def _vehicle(x, y, yaw, motion=Stationary(), size=None, spawn=0, despawn=None):
    return ActorScript(label=ObjectClass.VEHICLE,
                       size=size or DEFAULT_CLASS_SIZES[ObjectClass.VEHICLE],
                       x=x, y=y, yaw=yaw, motion=motion,
                       spawn_frame=spawn, despawn_frame=despawn)


def _pedestrian(x, y, yaw, motion=Stationary()):
    return ActorScript(label=ObjectClass.PEDESTRIAN,
                       size=DEFAULT_CLASS_SIZES[ObjectClass.PEDESTRIAN],
                       x=x, y=y, yaw=yaw, motion=motion)


def _cyclist(x, y, yaw, motion=Stationary()):
    return ActorScript(label=ObjectClass.CYCLIST,
                       size=DEFAULT_CLASS_SIZES[ObjectClass.CYCLIST],
                       x=x, y=y, yaw=yaw, motion=motion)


def _static_ego() -> ActorScript:
    return _vehicle(0.0, 0.0, 0.0)


def scenario_library(name: str, seed: int) -> SceneConfig:
    """Named scene configs used by the experiment suite.

    Raises:
        UnknownScenario: name is not one of SCENARIO_NAMES.
    """
    rng = np.random.default_rng(np.random.SeedSequence((0x5EED, seed)))

    if name == "OCCLUSION_CORRIDOR":
        # A wide parked vehicle shadows a crossing vehicle at 30 m for a
        # sustained run of frames.
        y0 = -11.5 + rng.uniform(-0.8, 0.8)
        speed = 1.5 + rng.uniform(-0.08, 0.08)
        actors = (
            _vehicle(14.0, 0.0, math.pi / 2, size=(5.0, 2.2, 2.0)),
            _vehicle(30.0, y0, math.pi / 2, ConstantVelocity(speed)),
            _vehicle(-15.0, -8.0, 0.4),
        )
        return SceneConfig(actors=actors, ego=_static_ego(),
                           lidar=LidarModel(points_at_10m=600.0, noise_sigma=0.02,
                                            max_points_per_actor=1500),
                           frame_count=200, seed=seed,
                           sequence_id=f"occlusion_corridor_{seed}")

    if name == "LONG_RANGE_LINE":
        # Parked vehicles at 15/35/60 m (plus deeper ones); the ego drives
        # past so each is observed up close at some frames and far at others.
        ranges = [15.0, 35.0, 60.0, 85.0, 110.0]
        actors = []
        for i, r in enumerate(ranges):
            lateral = 3.2 if i % 2 == 0 else -3.2
            x = math.sqrt(r * r - lateral * lateral)
            yaw = rng.uniform(-0.3, 0.3)
            actors.append(_vehicle(x, lateral, yaw))
        ego = _vehicle(0.0, 0.0, 0.0, ConstantVelocity(3.0))
        return SceneConfig(actors=tuple(actors), ego=ego,
                           lidar=LidarModel(points_at_10m=160.0, falloff_exp=2.3,
                                            noise_sigma=0.02, max_range=160.0,
                                            max_points_per_actor=1500),
                           frame_count=200, seed=seed,
                           sequence_id=f"long_range_line_{seed}")

    if name == "STATIONARY_LOT":
        spots = [
            (9.0, -4.0), (12.0, 5.0), (16.0, -8.0), (20.0, 2.0),
            (24.0, -3.0), (26.0, 8.0), (28.0, -6.0), (30.0, 3.0),
        ]
        actors = [
            _vehicle(x + rng.uniform(-0.5, 0.5), y + rng.uniform(-0.5, 0.5),
                     rng.uniform(-math.pi, math.pi))
            for x, y in spots
        ]
        actors.append(_pedestrian(11.0 + rng.uniform(-0.5, 0.5), -1.5, 0.0))
        actors.append(_pedestrian(18.0 + rng.uniform(-0.5, 0.5), 6.0, 1.0))
        return SceneConfig(actors=tuple(actors), ego=_static_ego(),
                           lidar=LidarModel(points_at_10m=600.0, noise_sigma=0.05,
                                            max_points_per_actor=1500),
                           frame_count=180, seed=seed,
                           sequence_id=f"stationary_lot_{seed}")

    if name == "HIGHWAY_FAST":
        lanes = [-7.5, -3.75, 3.75, 7.5, -3.75]
        actors = []
        for i, lane in enumerate(lanes):
            speed = 10.5 + 1.2 * i + rng.uniform(-0.3, 0.3)
            x0 = -75.0 + 18.0 * i + rng.uniform(-4.0, 4.0)
            actors.append(_vehicle(x0, lane, 0.0, ConstantVelocity(speed)))
        return SceneConfig(actors=tuple(actors), ego=_static_ego(),
                           lidar=LidarModel(points_at_10m=600.0, noise_sigma=0.02,
                                            max_range=90.0,
                                            max_points_per_actor=1500),
                           frame_count=200, seed=seed,
                           sequence_id=f"highway_fast_{seed}")

    if name == "MIXED_CITY":
        j = lambda s: rng.uniform(-s, s)
        # Ego stays put for 13 s (stable occlusion geometry), then creeps.
        ego = _vehicle(0.0, 0.0, 0.0, StopAndGo(((13.0, 0.0), (7.0, 2.0))))
        actors = [
            # Occluder and a slow crosser that stays fully hidden behind it
            # for several seconds in the middle of the sequence.
            _vehicle(17.0, 2.0, math.pi / 2, size=(5.5, 2.2, 2.1)),
            _vehicle(35.0, 15.0 + j(0.3), -math.pi / 2, ConstantVelocity(1.2)),
            # Parked vehicles nearby (cleanly detectable) and in the sparse
            # far band (a handful of returns, recoverable from forecasts).
            _vehicle(10.0 + j(0.5), -6.0 + j(0.5), j(math.pi)),
            _vehicle(15.0 + j(0.5), 8.0 + j(0.5), j(math.pi)),
            _vehicle(24.0 + j(0.5), -4.0 + j(0.5), j(math.pi)),
            _vehicle(72.0 + j(1.0), 6.0 + j(0.5), j(math.pi)),
            _vehicle(85.0 + j(1.0), -8.0 + j(0.5), j(math.pi)),
            _vehicle(95.0 + j(1.0), 10.0 + j(0.5), j(math.pi)),
            _vehicle(105.0 + j(1.0), -5.0 + j(0.5), j(math.pi)),
            # Moving vehicles.
            _vehicle(-30.0 + j(2.0), -12.0, 0.0, ConstantVelocity(7.0 + j(0.5))),
            _vehicle(60.0 + j(2.0), 12.0, math.pi, ConstantVelocity(5.5 + j(0.5))),
            _vehicle(-20.0 + j(2.0), 16.0, 0.0, ConstantTurn(5.0 + j(0.3), 0.08)),
            _vehicle(-40.0 + j(2.0), -16.0, 0.0,
                     StopAndGo(((4.0, 6.0), (4.0, 0.0), (12.0, 5.0)))),
            # Late spawn / early despawn give the future-looking windows
            # information the past-only windows cannot have.
            _vehicle(30.0 + j(1.0), -20.0, math.pi / 2,
                     ConstantVelocity(4.0 + j(0.3)), spawn=60),
            _vehicle(8.0 + j(0.5), 14.0 + j(0.5), j(math.pi), despawn=140),
            # Pedestrians.
            _pedestrian(7.0 + j(0.4), 3.0 + j(0.4), 0.0),
            _pedestrian(12.0 + j(0.4), -2.5 + j(0.4), 1.2),
            _pedestrian(16.0 + j(0.4), 1.0, math.pi / 2, ConstantVelocity(1.0)),
            # Cyclists.
            _cyclist(-15.0 + j(1.0), 6.0, 0.0, ConstantVelocity(4.5 + j(0.3))),
            _cyclist(-10.0 + j(1.0), -5.0, 0.3,
                     FollowWaypoints(((0.0, -10.0, -5.0, 0.3),
                                      (8.0, 15.0, -2.0, 0.15),
                                      (20.0, 45.0, 2.0, 0.1)))),
        ]
        return SceneConfig(actors=tuple(actors), ego=ego,
                           lidar=LidarModel(points_at_10m=600.0, falloff_exp=2.6,
                                            noise_sigma=0.03, max_range=120.0,
                                            max_points_per_actor=1500),
                           frame_count=200, seed=seed,
                           sequence_id=f"mixed_city_{seed}")

    raise UnknownScenario(f"unknown scenario {name!r}; choose from {SCENARIO_NAMES}")
