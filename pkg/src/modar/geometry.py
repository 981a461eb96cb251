"""Oriented-box and point geometry: rigid transforms, rotated IoU, heading math.

Scenes are planar: boxes rotate about z only (yaw), and pose pairs used to
re-express boxes must differ by a yaw-only rotation. Yaw angles are always
wrapped into (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NonPlanarRotation

TWO_PI = 2.0 * math.pi


class ObjectClass(str, Enum):
    VEHICLE = "VEHICLE"
    PEDESTRIAN = "PEDESTRIAN"
    CYCLIST = "CYCLIST"


def wrap_angle(angle: float) -> float:
    """Wrap an angle in radians into (-pi, pi]."""
    wrapped = (angle + math.pi) % TWO_PI - math.pi
    if wrapped == -math.pi:
        return math.pi
    return wrapped


def heading_delta(yaw_a: float, yaw_b: float) -> float:
    """Absolute heading difference in [0, pi], wrap-around aware."""
    return abs(wrap_angle(yaw_a - yaw_b))


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D bounding box. Center in meters (world frame unless stated
    otherwise), yaw about z in (-pi, pi], strictly positive sizes."""

    cx: float
    cy: float
    cz: float
    length: float
    width: float
    height: float
    yaw: float
    label: ObjectClass
    score: float = 1.0

    def __post_init__(self):
        if not (self.length > 0.0 and self.width > 0.0 and self.height > 0.0):
            raise ValueError(
                f"box sizes must be positive, got "
                f"({self.length}, {self.width}, {self.height})"
            )
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def footprint_area(self) -> float:
        return self.length * self.width

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height

    def to_dict(self) -> dict:
        return {
            "cx": self.cx,
            "cy": self.cy,
            "cz": self.cz,
            "length": self.length,
            "width": self.width,
            "height": self.height,
            "yaw": self.yaw,
            "class": self.label.value,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Box3D":
        return cls(
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            cz=float(d["cz"]),
            length=float(d["length"]),
            width=float(d["width"]),
            height=float(d["height"]),
            yaw=float(d["yaw"]),
            label=ObjectClass(d["class"]),
            score=float(d.get("score", 1.0)),
        )


def box_corners_bev(box: Box3D) -> list[tuple[float, float]]:
    """Four footprint corners, counter-clockwise (memoized on the box)."""
    cached = box.__dict__.get("_corners_bev")
    if cached is not None:
        return cached
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = 0.5 * box.length, 0.5 * box.width
    corners = [
        (box.cx + c * hl - s * hw, box.cy + s * hl + c * hw),
        (box.cx - c * hl - s * hw, box.cy - s * hl + c * hw),
        (box.cx - c * hl + s * hw, box.cy - s * hl - c * hw),
        (box.cx + c * hl + s * hw, box.cy + s * hl - c * hw),
    ]
    object.__setattr__(box, "_corners_bev", corners)
    return corners


def _clip_polygon(subject: list[tuple[float, float]],
                  clip: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of `subject` against convex CCW `clip`."""
    output = subject
    ax, ay = clip[-1]
    for bx, by in clip:
        if len(output) < 3:
            return []
        ex, ey = bx - ax, by - ay
        points = output
        output = []
        out_append = output.append
        px, py = points[-1]
        prev_side = ex * (py - ay) - ey * (px - ax)
        for q in points:
            qx, qy = q
            side = ex * (qy - ay) - ey * (qx - ax)
            if side >= 0.0:
                if prev_side < 0.0:
                    t = prev_side / (prev_side - side)
                    out_append((px + t * (qx - px), py + t * (qy - py)))
                out_append(q)
            elif prev_side >= 0.0:
                t = prev_side / (prev_side - side)
                out_append((px + t * (qx - px), py + t * (qy - py)))
            px, py, prev_side = qx, qy, side
        ax, ay = bx, by
    return output


def _polygon_area(poly: list[tuple[float, float]]) -> float:
    if len(poly) < 3:
        return 0.0
    area = 0.0
    px, py = poly[-1]
    for qx, qy in poly:
        area += px * qy - qx * py
        px, py = qx, qy
    return 0.5 * area


def _intersection_area_bev(a: Box3D, b: Box3D) -> float:
    # Cheap reject: circumscribed circles do not touch.
    dx, dy = a.cx - b.cx, a.cy - b.cy
    ra = 0.5 * math.hypot(a.length, a.width)
    rb = 0.5 * math.hypot(b.length, b.width)
    if dx * dx + dy * dy > (ra + rb) * (ra + rb):
        return 0.0
    if a.yaw == 0.0 and b.yaw == 0.0:
        # Axis-aligned fast path, exact min/max arithmetic.
        ix = min(a.cx + 0.5 * a.length, b.cx + 0.5 * b.length) - max(
            a.cx - 0.5 * a.length, b.cx - 0.5 * b.length)
        iy = min(a.cy + 0.5 * a.width, b.cy + 0.5 * b.width) - max(
            a.cy - 0.5 * a.width, b.cy - 0.5 * b.width)
        if ix <= 0.0 or iy <= 0.0:
            return 0.0
        return ix * iy
    inter = _clip_polygon(box_corners_bev(a), box_corners_bev(b))
    return _polygon_area(inter)


def iou_bev(a: Box3D, b: Box3D) -> float:
    """Exact IoU of the two yaw-rotated footprints via polygon clipping."""
    inter = _intersection_area_bev(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.footprint_area + b.footprint_area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """IoU of the two boxes as BEV intersection times vertical overlap."""
    inter_bev = _intersection_area_bev(a, b)
    if inter_bev <= 0.0:
        return 0.0
    z_lo = max(a.cz - 0.5 * a.height, b.cz - 0.5 * b.height)
    z_hi = min(a.cz + 0.5 * a.height, b.cz + 0.5 * b.height)
    if z_hi <= z_lo:
        return 0.0
    inter = inter_bev * (z_hi - z_lo)
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


class Pose:
    """4x4 homogeneous world-from-frame transform with an orthonormal
    rotation block (checked to 1e-9)."""

    __slots__ = ("matrix",)

    _identity: "Pose | None" = None

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float).reshape(4, 4)
        r = m[:3, :3]
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("rotation block is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation block determinant is not 1")
        if np.max(np.abs(m[3] - (0.0, 0.0, 0.0, 1.0))) > 1e-12:
            raise ValueError("bottom row must be [0, 0, 0, 1]")
        m.setflags(write=False)
        self.matrix = m

    @classmethod
    def identity(cls) -> "Pose":
        if cls._identity is None:
            cls._identity = cls(np.eye(4))
        return cls._identity

    @classmethod
    def from_xy_yaw(cls, x: float, y: float, yaw: float, z: float = 0.0) -> "Pose":
        c, s = math.cos(yaw), math.sin(yaw)
        return cls([
            [c, -s, 0.0, x],
            [s, c, 0.0, y],
            [0.0, 0.0, 1.0, z],
            [0.0, 0.0, 0.0, 1.0],
        ])

    def inverse_matrix(self) -> np.ndarray:
        r = self.matrix[:3, :3]
        t = self.matrix[:3, 3]
        inv = np.eye(4)
        inv[:3, :3] = r.T
        inv[:3, 3] = -r.T @ t
        return inv

    def __eq__(self, other) -> bool:
        return isinstance(other, Pose) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def to_list(self) -> list[float]:
        return [float(v) for v in self.matrix.reshape(-1)]


def relative_matrix(src_pose: Pose, dst_pose: Pose) -> np.ndarray:
    """Matrix taking src-frame coordinates to dst-frame coordinates."""
    if src_pose is dst_pose or src_pose == dst_pose:
        return np.eye(4)
    return dst_pose.inverse_matrix() @ src_pose.matrix


def transform_points(points: np.ndarray, src_pose: Pose, dst_pose: Pose) -> np.ndarray:
    """Re-express (N, 3) points from src frame coordinates in the dst frame."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if src_pose is dst_pose or src_pose == dst_pose:
        return pts.copy()
    rel = relative_matrix(src_pose, dst_pose)
    return pts @ rel[:3, :3].T + rel[:3, 3]


def transform_box(box: Box3D, src_pose: Pose, dst_pose: Pose) -> Box3D:
    """Re-express a box from src frame in dst frame.

    Raises:
        NonPlanarRotation: the relative rotation tilts the z axis by more
            than 1e-6.
    """
    if src_pose is dst_pose or src_pose == dst_pose:
        return box
    rel = relative_matrix(src_pose, dst_pose)
    r = rel[:3, :3]
    tilt = max(abs(r[0, 2]), abs(r[1, 2]), abs(r[2, 0]), abs(r[2, 1]),
               abs(r[2, 2] - 1.0))
    if tilt > 1e-6:
        raise NonPlanarRotation(f"relative rotation tilts z axis by {tilt:.3e}")
    center = rel[:3, :3] @ (box.cx, box.cy, box.cz) + rel[:3, 3]
    dyaw = math.atan2(r[1, 0], r[0, 0])
    return Box3D(
        cx=float(center[0]),
        cy=float(center[1]),
        cz=float(center[2]),
        length=box.length,
        width=box.width,
        height=box.height,
        yaw=wrap_angle(box.yaw + dyaw),
        label=box.label,
        score=box.score,
    )
