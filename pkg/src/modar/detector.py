"""LiDAR-only detection at desk scale.

Two detectors stand in for learned models: a BEV-grid clustering detector
whose quality degrades naturally with range and occlusion, and a noisy
oracle detector that perturbs ground truth under a controlled error model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import DEFAULT_CLASS_SIZES, GtBox
from .geometry import (Box3D, ObjectClass, Pose, box_corners_bev, iou_3d,
                       iou_bev, transform_box, wrap_angle)

GROUND_Z = 0.2
MIN_EXTENT = 0.05

# Size rule for classifying a cluster from its box geometry.
VEHICLE_MIN_AREA = 3.0
PEDESTRIAN_MAX_AREA = 1.0
PEDESTRIAN_MIN_HEIGHT = 1.4

_NEIGHBORS = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
              if (dx, dy) != (0, 0)]


@dataclass(frozen=True)
class ClusterParams:
    cell_size: float = 0.3
    min_points: int = 5
    score_saturation: int = 50

    def __post_init__(self):
        if self.cell_size <= 0 or self.min_points < 1:
            raise ValueError("invalid cluster parameters")

    def to_dict(self) -> dict:
        return {"kind": "cluster", "cell_size": self.cell_size,
                "min_points": self.min_points,
                "score_saturation": self.score_saturation}


@dataclass(frozen=True)
class OracleNoise:
    """Controlled detector error model.

    Detection probability is logistic in the number of points on the
    object: p = 1 / (1 + exp(-slope * (n - midpoint))). Objects with zero
    points are never detected. Scores follow the detection probability.
    """

    midpoint: float = 5.0
    slope: float = 1.0
    center_sigma: float = 0.0
    size_sigma: float = 0.0
    yaw_sigma: float = 0.0
    false_positive_rate: float = 0.0
    scene_bounds: tuple[float, float, float, float] = (-80.0, 80.0, -80.0, 80.0)
    constant_score: bool = False

    def __post_init__(self):
        if min(self.center_sigma, self.size_sigma, self.yaw_sigma,
               self.false_positive_rate) < 0:
            raise ValueError("oracle noise parameters must be non-negative")

    def detection_probability(self, num_points: int) -> float:
        if num_points <= 0:
            return 0.0
        if math.isinf(self.slope):
            if num_points > self.midpoint:
                return 1.0
            if num_points < self.midpoint:
                return 0.0
            return 0.5
        z = self.slope * (num_points - self.midpoint)
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)

    def to_dict(self) -> dict:
        return {"kind": "oracle", "midpoint": self.midpoint, "slope": self.slope,
                "center_sigma": self.center_sigma, "size_sigma": self.size_sigma,
                "yaw_sigma": self.yaw_sigma,
                "false_positive_rate": self.false_positive_rate,
                "scene_bounds": list(self.scene_bounds),
                "constant_score": self.constant_score}


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices counter-clockwise."""
    pts = sorted(map(tuple, np.asarray(points, dtype=float).tolist()))
    if len(pts) == 0:
        return np.empty((0, 2))
    if pts[0] == pts[-1]:
        return np.asarray(pts[:1])
    if len(pts) <= 2:
        return np.asarray(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def _min_area_rect(hull: np.ndarray) -> tuple[float, float, float, float, float]:
    """Minimum-area enclosing rectangle of a convex hull.

    Returns (cx, cy, extent_u, extent_v, theta) with the u axis along theta.
    """
    if len(hull) == 1:
        return float(hull[0, 0]), float(hull[0, 1]), 0.0, 0.0, 0.0
    best = None
    n = len(hull)
    for i in range(n):
        dx = hull[(i + 1) % n, 0] - hull[i, 0]
        dy = hull[(i + 1) % n, 1] - hull[i, 1]
        norm = math.hypot(dx, dy)
        if norm < 1e-12:
            continue
        c, s = dx / norm, dy / norm
        u = hull[:, 0] * c + hull[:, 1] * s
        v = -hull[:, 0] * s + hull[:, 1] * c
        du = float(u.max() - u.min())
        dv = float(v.max() - v.min())
        area = du * dv
        if best is None or area < best[0]:
            cu = 0.5 * float(u.max() + u.min())
            cv = 0.5 * float(v.max() + v.min())
            best = (area, cu * c - cv * s, cu * s + cv * c, du, dv,
                    math.atan2(s, c))
    if best is None:  # all hull points coincide
        return float(hull[0, 0]), float(hull[0, 1]), 0.0, 0.0, 0.0
    return best[1], best[2], best[3], best[4], best[5]


def _classify(area: float, height: float) -> ObjectClass:
    if area > VEHICLE_MIN_AREA:
        return ObjectClass.VEHICLE
    if height > PEDESTRIAN_MIN_HEIGHT and area <= PEDESTRIAN_MAX_AREA:
        return ObjectClass.PEDESTRIAN
    return ObjectClass.CYCLIST


def detect_cluster(points: np.ndarray, params: ClusterParams,
                   ego_pose: Pose) -> list[Box3D]:
    """BEV-grid connected-component detector.

    Args:
        points: (N, 4) array [x, y, z, intensity] in the ego frame.
        params: clustering configuration.
        ego_pose: world-from-ego pose used to report boxes in world frame.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 4)
    pts = pts[pts[:, 2] > GROUND_Z]
    if len(pts) == 0:
        return []

    inv_cell = 1.0 / params.cell_size
    cells_x = np.floor(pts[:, 0] * inv_cell).astype(np.int64)
    cells_y = np.floor(pts[:, 1] * inv_cell).astype(np.int64)
    cell_points: dict[tuple[int, int], list[int]] = {}
    for i, key in enumerate(zip(cells_x.tolist(), cells_y.tolist())):
        cell_points.setdefault(key, []).append(i)

    visited: set[tuple[int, int]] = set()
    boxes: list[Box3D] = []
    for start in sorted(cell_points):
        if start in visited:
            continue
        stack = [start]
        visited.add(start)
        indices: list[int] = []
        while stack:
            cell = stack.pop()
            indices.extend(cell_points[cell])
            for dx, dy in _NEIGHBORS:
                nxt = (cell[0] + dx, cell[1] + dy)
                if nxt in cell_points and nxt not in visited:
                    visited.add(nxt)
                    stack.append(nxt)
        if len(indices) < params.min_points:
            continue
        cluster = pts[indices]
        hull = _convex_hull(cluster[:, :2])
        cx, cy, du, dv, theta = _min_area_rect(hull)
        if du >= dv:
            length, width, yaw = du, dv, theta
        else:
            length, width, yaw = dv, du, theta + 0.5 * math.pi
        yaw = wrap_angle(yaw)
        if yaw <= -0.5 * math.pi:
            yaw += math.pi
        elif yaw > 0.5 * math.pi:
            yaw -= math.pi
        length = max(length, MIN_EXTENT)
        width = max(width, MIN_EXTENT)
        # Objects rest on the ground plane; the ground filter removes the
        # lowest returns, so the box spans from the ground to the highest
        # cluster point.
        height = max(float(cluster[:, 2].max()), MIN_EXTENT)
        box = Box3D(
            cx=cx, cy=cy, cz=0.5 * height,
            length=length, width=width, height=height,
            yaw=yaw,
            label=_classify(length * width, height),
            score=min(1.0, len(indices) / params.score_saturation),
        )
        boxes.append(transform_box(box, ego_pose, Pose.identity()))
    return boxes


def detect_oracle(gt_boxes: list[GtBox], noise: OracleNoise,
                  seed: int) -> list[Box3D]:
    """Keep each ground-truth box with its visibility-dependent probability
    and perturb it; add uniform false positives. Deterministic in seed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out: list[Box3D] = []
    for gt in gt_boxes:
        p = noise.detection_probability(gt.num_points_inside)
        if p <= 0.0:
            continue
        if rng.uniform() >= p:
            continue
        b = gt.box
        dcx, dcy, dcz = (rng.normal(0.0, noise.center_sigma, 3)
                         if noise.center_sigma > 0 else (0.0, 0.0, 0.0))
        dl, dw, dh = (rng.normal(0.0, noise.size_sigma, 3)
                      if noise.size_sigma > 0 else (0.0, 0.0, 0.0))
        dyaw = rng.normal(0.0, noise.yaw_sigma) if noise.yaw_sigma > 0 else 0.0
        out.append(Box3D(
            cx=b.cx + dcx, cy=b.cy + dcy, cz=b.cz + dcz,
            length=max(b.length + dl, MIN_EXTENT),
            width=max(b.width + dw, MIN_EXTENT),
            height=max(b.height + dh, MIN_EXTENT),
            yaw=wrap_angle(b.yaw + dyaw),
            label=b.label,
            score=1.0 if noise.constant_score else p,
        ))
    if noise.false_positive_rate > 0:
        xmin, xmax, ymin, ymax = noise.scene_bounds
        size = DEFAULT_CLASS_SIZES[ObjectClass.VEHICLE]
        for _ in range(rng.poisson(noise.false_positive_rate)):
            out.append(Box3D(
                cx=rng.uniform(xmin, xmax), cy=rng.uniform(ymin, ymax),
                cz=0.5 * size[2],
                length=size[0], width=size[1], height=size[2],
                yaw=rng.uniform(-math.pi, math.pi),
                label=ObjectClass.VEHICLE,
                score=float(rng.uniform(0.05, 0.5)),
            ))
    return out


def nms(boxes: list[Box3D], iou_threshold: float, bev: bool = True) -> list[Box3D]:
    """Greedy per-class suppression in descending score order.

    Ties break on (cx, cy) so the result is deterministic.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must be in (0, 1)")
    overlap = iou_bev if bev else iou_3d
    measure = (lambda b: b.footprint_area) if bev else (lambda b: b.volume)
    ordered = sorted(boxes, key=lambda b: (-b.score, b.cx, b.cy, b.yaw))
    kept: list[Box3D] = []
    for box in ordered:
        area = measure(box)
        suppressed = False
        for other in kept:
            if other.label is not box.label:
                continue
            other_area = measure(other)
            if min(area, other_area) <= iou_threshold * max(area, other_area):
                continue  # IoU is bounded by the size ratio
            if overlap(box, other) > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(box)
    return kept
